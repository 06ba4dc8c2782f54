use super::{DispersionModel, Lattice, ModeIndex};
use crate::error::{Error, Result};
use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

/// Fourier coefficients of a real field with zero `x_1`-mean on a truncated lattice.
///
/// Only `n_1 > 0` coefficients are held; `u_{-n}` is always `conj(u_n)` and the
/// `n_1 = 0` hyperplane is identically zero, so both invariants hold by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    lattice: Lattice,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(lattice: Lattice) -> Self {
        SpectralField {
            coeffs: vec![Complex64::new(0.0, 0.0); lattice.len()],
            lattice,
        }
    }

    pub fn from_fn(lattice: Lattice, mut f: impl FnMut(ModeIndex) -> Complex64) -> Self {
        let coeffs = lattice.stored_modes().map(&mut f).collect();
        SpectralField { lattice, coeffs }
    }

    /// Wraps stored coefficients laid out in the lattice slot order.
    pub fn from_coefficients(lattice: Lattice, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), lattice.len(), "coefficient count mismatch");
        SpectralField { lattice, coeffs }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn nmax(&self) -> i32 {
        self.lattice.nmax()
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coefficients(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at any mode: conjugated for `n_1 < 0`, zero off the box or on `n_1 = 0`.
    pub fn get(&self, n: ModeIndex) -> Complex64 {
        if n.first() > 0 {
            self.lattice
                .index_of(n)
                .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
        } else if n.first() < 0 {
            self.lattice
                .index_of(-n)
                .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i].conj())
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    /// Sets `u_n` (and implicitly `u_{-n}`).
    pub fn set(&mut self, n: ModeIndex, value: Complex64) -> Result<()> {
        if !n.is_active() {
            return Err(Error::InactiveMode(n));
        }
        let (m, v) = if n.first() > 0 {
            (n, value)
        } else {
            (-n, value.conj())
        };
        let i = self.lattice.index_of(m).ok_or(Error::OutsideTruncation {
            mode: n,
            nmax: self.lattice.nmax(),
        })?;
        self.coeffs[i] = v;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeIndex, Complex64)> + '_ {
        self.lattice.stored_modes().zip(self.coeffs.iter().copied())
    }

    /// `(sum_{n in D^d} |n|^{2s} |u_n|^2)^{1/2}` with the l1 mode size, both half-lattices.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let sum: f64 = self
            .iter()
            .map(|(n, z)| {
                let w = if s == 0.0 {
                    1.0
                } else {
                    (n.l1() as f64).powf(2.0 * s)
                };
                w * z.norm_sqr()
            })
            .sum();
        (2.0 * sum).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SpectralField {
            lattice: self.lattice,
            coeffs: self.coeffs.iter().map(|z| z * factor).collect(),
        }
    }

    /// Copies the coefficients onto another cutoff, dropping modes that do not fit.
    pub fn resampled(&self, lattice: Lattice) -> Self {
        assert_eq!(lattice.dim(), self.dim());
        SpectralField::from_fn(lattice, |n| self.get(n))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.lattice, other.lattice, "lattice mismatch");
        SpectralField {
            lattice: self.lattice,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}

/// `S(t) = exp(-tL)`: multiplies `u_n` by `exp(i omega(n) t)`.
pub fn apply_semigroup(model: DispersionModel, field: &SpectralField, t: f64) -> SpectralField {
    let mut out = field.clone();
    apply_semigroup_in_place(model, &mut out, t);
    out
}

pub fn apply_semigroup_in_place(model: DispersionModel, field: &mut SpectralField, t: f64) {
    if t == 0.0 {
        return;
    }
    let lattice = field.lattice;
    for (i, z) in field.coeffs.iter_mut().enumerate() {
        let phase = model.omega_raw(lattice.mode(i)) * t;
        *z *= Complex64::from_polar(1.0, phase);
    }
}

/// `J`: multiplies `u_n` by `i phi(n)`.
pub fn apply_j(model: DispersionModel, field: &SpectralField) -> SpectralField {
    let lattice = field.lattice;
    SpectralField {
        lattice,
        coeffs: field
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, z)| z * Complex64::new(0.0, model.phi_raw(lattice.mode(i))))
            .collect(),
    }
}

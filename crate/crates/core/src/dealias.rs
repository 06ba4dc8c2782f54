//! Pseudospectral evaluation of `u^2` on a zero-padded grid.
//!
//! The padded grid has `P = 4 nmax` points per axis (twice the natural
//! `2 nmax` grid). Since `P >= 3 nmax + 1`, wrap-around from the product of two
//! fields truncated at `nmax` never lands on a retained mode, so the retained
//! coefficients equal the exact convolution `sum_{k+l=n} u_k u_l`.

use crate::spectral::{Lattice, ModeIndex, SpectralField};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// The square of a field: the `n_1 > 0` half in `field`, the `n_1 = 0`
/// coefficients (ordered by `n_2` from `-nmax`) in `zero_column`.
#[derive(Clone, Debug)]
pub struct DealiasedSquare {
    pub field: SpectralField,
    pub zero_column: Vec<Complex64>,
}

/// Reusable FFT plans and buffers for one truncation.
///
/// A workspace is owned by a single trajectory; it is `Send` but holds
/// mutable scratch, so concurrent solves each build their own.
pub struct Squarer {
    lattice: Lattice,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    grid: Vec<Complex64>,
    work: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Squarer {
    pub fn new(lattice: Lattice) -> Self {
        Self::with_size(lattice, 4 * lattice.nmax() as usize)
    }

    /// A workspace without padding (`2 nmax + 1` points), which aliases.
    pub fn aliased(lattice: Lattice) -> Self {
        Self::with_size(lattice, 2 * lattice.nmax() as usize + 1)
    }

    fn with_size(lattice: Lattice, size: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let cells = size.pow(lattice.dim() as u32);
        Squarer {
            lattice,
            size,
            forward,
            inverse,
            grid: vec![ZERO; cells],
            work: vec![ZERO; if lattice.dim() == 2 { cells } else { 0 }],
            scratch: vec![ZERO; scratch_len],
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn grid_size(&self) -> usize {
        self.size
    }

    fn wrap(&self, c: i32) -> usize {
        c.rem_euclid(self.size as i32) as usize
    }

    /// Squares `field`, writing the `n_1 > 0` half into `out`.
    pub fn square_into(&mut self, field: &SpectralField, out: &mut SpectralField) {
        assert_eq!(field.lattice(), self.lattice, "lattice mismatch");
        assert_eq!(out.lattice(), self.lattice, "lattice mismatch");
        match self.lattice.dim() {
            1 => self.square_1d(field),
            _ => self.square_2d(field),
        }
        let p = self.size;
        let lattice = self.lattice;
        for (i, z) in out.coefficients_mut().iter_mut().enumerate() {
            let n = lattice.mode(i);
            let idx = if lattice.dim() == 1 {
                self.wrap(n.first())
            } else {
                self.wrap(n.first()) * p + self.wrap(n.second())
            };
            *z = self.grid[idx];
        }
    }

    pub fn square(&mut self, field: &SpectralField) -> DealiasedSquare {
        let mut out = SpectralField::zeros(self.lattice);
        self.square_into(field, &mut out);
        let m = self.lattice.nmax();
        let zero_column = if self.lattice.dim() == 1 {
            vec![self.grid[0]]
        } else {
            (-m..=m).map(|n2| self.grid[self.wrap(n2)]).collect()
        };
        DealiasedSquare {
            field: out,
            zero_column,
        }
    }

    fn square_1d(&mut self, field: &SpectralField) {
        let p = self.size;
        self.grid.iter_mut().for_each(|z| *z = ZERO);
        for (n, z) in field.iter() {
            let i = self.wrap(n.first());
            let j = self.wrap(-n.first());
            self.grid[i] += z;
            self.grid[j] += z.conj();
        }
        self.inverse
            .process_with_scratch(&mut self.grid, &mut self.scratch);
        let norm = 1.0 / p as f64;
        for z in self.grid.iter_mut() {
            *z = Complex64::new(z.re * z.re * norm, 0.0);
        }
        self.forward
            .process_with_scratch(&mut self.grid, &mut self.scratch);
    }

    fn square_2d(&mut self, field: &SpectralField) {
        let p = self.size;
        let m = self.lattice.nmax();
        self.grid.iter_mut().for_each(|z| *z = ZERO);
        for (n, z) in field.iter() {
            let a = self.wrap(n.first()) * p + self.wrap(n.second());
            let b = self.wrap(-n.first()) * p + self.wrap(-n.second());
            self.grid[a] += z;
            self.grid[b] += z.conj();
        }
        // inverse along n2, only rows that carry data
        for n1 in (-m..=m).filter(|&r| r != 0) {
            let r = self.wrap(n1);
            self.inverse
                .process_with_scratch(&mut self.grid[r * p..(r + 1) * p], &mut self.scratch);
        }
        transpose(&self.grid, &mut self.work, p);
        self.inverse
            .process_with_scratch(&mut self.work, &mut self.scratch);
        let norm = 1.0 / (p * p) as f64;
        for z in self.work.iter_mut() {
            *z = Complex64::new(z.re * z.re * norm, 0.0);
        }
        self.forward
            .process_with_scratch(&mut self.work, &mut self.scratch);
        transpose(&self.work, &mut self.grid, p);
        // forward along n2 for the rows n1 = 0..=nmax that are read back
        for n1 in 0..=m {
            let r = self.wrap(n1);
            self.forward
                .process_with_scratch(&mut self.grid[r * p..(r + 1) * p], &mut self.scratch);
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], p: usize) {
    const B: usize = 16;
    for ib in (0..p).step_by(B) {
        for jb in (0..p).step_by(B) {
            for i in ib..(ib + B).min(p) {
                for j in jb..(jb + B).min(p) {
                    dst[j * p + i] = src[i * p + j];
                }
            }
        }
    }
}

/// Coefficients of the pointwise square of `field`, exact on every retained mode.
pub fn dealiased_square(field: &SpectralField) -> DealiasedSquare {
    Squarer::new(field.lattice()).square(field)
}

/// Direct triad convolution `sum_{k+l=n} u_k u_l` over the truncated lattice.
/// Quadratic in the lattice size; meant for checks on small fields.
pub fn convolution_square(field: &SpectralField, n: ModeIndex) -> Complex64 {
    field
        .lattice()
        .triads_of(n)
        .map(|(k, l)| field.get(k) * field.get(l))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{apply_j, DispersionModel};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn square_of_two_cosine() {
        let lat = Lattice::new(1, 4);
        let mut f = SpectralField::zeros(lat);
        f.set(ModeIndex::new_1d(1), c(1.0, 0.0)).unwrap();
        let sq = dealiased_square(&f);
        assert!((sq.zero_column[0] - c(2.0, 0.0)).norm() < 1e-14);
        assert!((sq.field.get(ModeIndex::new_1d(2)) - c(1.0, 0.0)).norm() < 1e-14);
        for n in [1, 3, 4] {
            assert!(sq.field.get(ModeIndex::new_1d(n)).norm() < 1e-14);
        }
        let j = apply_j(DispersionModel::Kdv, &sq.field);
        assert!((j.get(ModeIndex::new_1d(2)) - c(0.0, 2.0)).norm() < 1e-14);
    }

    #[test]
    fn zero_field_squares_to_zero() {
        for dim in [1, 2] {
            let f = SpectralField::zeros(Lattice::new(dim, 3));
            let sq = dealiased_square(&f);
            assert!(sq.field.coefficients().iter().all(|z| z.norm() == 0.0));
            assert!(sq.zero_column.iter().all(|z| z.norm() == 0.0));
        }
    }

    fn pseudo_random_field(lat: Lattice, seed: u64) -> SpectralField {
        let mut s = seed;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        SpectralField::from_fn(lat, |_| c(next(), next()))
    }

    #[test]
    fn matches_direct_convolution_1d() {
        // nine stored modes
        let lat = Lattice::new(1, 9);
        let f = pseudo_random_field(lat, 7);
        let sq = dealiased_square(&f);
        for n in lat.stored_modes() {
            let direct = convolution_square(&f, n);
            assert!((sq.field.get(n) - direct).norm() < 1e-13, "{n}");
        }
        let direct0 = convolution_square(&f, ModeIndex::new_1d(0));
        assert!((sq.zero_column[0] - direct0).norm() < 1e-13);
    }

    #[test]
    fn matches_direct_convolution_2d() {
        let lat = Lattice::new(2, 3);
        let f = pseudo_random_field(lat, 11);
        let sq = dealiased_square(&f);
        for n in lat.stored_modes() {
            let direct = convolution_square(&f, n);
            assert!((sq.field.get(n) - direct).norm() < 1e-13, "{n}");
        }
        for (j, n2) in (-3..=3).enumerate() {
            let direct = convolution_square(&f, ModeIndex::new_2d(0, n2));
            assert!((sq.zero_column[j] - direct).norm() < 1e-13);
        }
    }

    #[test]
    fn unpadded_grid_aliases() {
        let lat = Lattice::new(1, 4);
        let mut f = SpectralField::zeros(lat);
        f.set(ModeIndex::new_1d(3), c(1.0, 0.0)).unwrap();
        // 3 + 3 = 6 wraps onto -3 on a 9-point grid
        let sq = Squarer::aliased(lat).square(&f);
        assert!(sq.field.get(ModeIndex::new_1d(3)).norm() > 0.5);
        assert!(dealiased_square(&f).field.get(ModeIndex::new_1d(3)).norm() < 1e-14);
    }
}

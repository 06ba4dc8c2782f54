//! First Picard iterate and the second-order remainder.
//!
//! In the interaction picture `v(eps; t) = a + eps b(t) + eps^2 c(eps; t)`
//! with `a = u_0` and
//! `b_n(t) = -i phi(n) sum_{k+l=n} a_k a_l F_n^{k,l}(t)`.

use crate::error::{Error, Result};
use crate::evolve::{evolve, max_abs_delta, RhsWorkspace, Rk4, SolverConfig};
use crate::spectral::{f_kernel, DispersionModel, SpectralField};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Debug, PartialEq)]
pub struct PicardDecomposition {
    pub t: f64,
    pub epsilon: f64,
    pub a: SpectralField,
    pub b: SpectralField,
    pub c: SpectralField,
}

impl PicardDecomposition {
    /// `a + eps b + eps^2 c`.
    pub fn reconstruct(&self) -> SpectralField {
        let e = self.epsilon;
        &(&self.a + &(&self.b * e)) + &(&self.c * (e * e))
    }
}

/// Exact triad sum for `b(t)` over the truncated lattice.
pub fn first_iterate_closed_form(
    u0: &SpectralField,
    model: DispersionModel,
    t: f64,
) -> SpectralField {
    let lattice = u0.lattice();
    let coeffs: Vec<Complex64> = lattice
        .stored_modes()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, l) in lattice.triads_of(n) {
                let ak = u0.get(k);
                let al = u0.get(l);
                if ak.norm_sqr() == 0.0 || al.norm_sqr() == 0.0 {
                    continue;
                }
                acc += ak * al * f_kernel(model.delta_raw(n, k, l), t);
            }
            Complex64::new(0.0, -model.phi_raw(n)) * acc
        })
        .collect();
    SpectralField::from_coefficients(lattice, coeffs)
}

/// Panel count that puts sixteen Simpson nodes on the fastest phase period.
pub fn default_panels(model: DispersionModel, u0: &SpectralField, t: f64) -> usize {
    let dmax = max_abs_delta(model, u0.lattice());
    16usize.max((8.0 * t.abs() * dmax / std::f64::consts::PI).ceil() as usize)
}

/// Composite Simpson rule for `b(t) = int_0^t d_t v |_{eps=1, v=a}` on `panels` subintervals.
pub fn first_iterate_quadrature(
    u0: &SpectralField,
    model: DispersionModel,
    t: f64,
    panels: usize,
) -> Result<SpectralField> {
    if panels < 4 {
        return Err(Error::Config(format!(
            "quadrature needs >= 4 panels, got {panels}"
        )));
    }
    let lattice = u0.lattice();
    let mut rhs = RhsWorkspace::new(model, lattice, true);
    let mut acc = vec![Complex64::new(0.0, 0.0); lattice.len()];
    let mut f = SpectralField::zeros(lattice);
    let h = t / panels as f64;
    // node j sits at j h / 2; weights 1, 4, 2, 4, ..., 4, 1
    let nodes = 2 * panels;
    for j in 0..=nodes {
        let w = if j == 0 || j == nodes {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        rhs.eval_into(1.0, 0.5 * h * j as f64, u0, &mut f);
        for (a, z) in acc.iter_mut().zip(f.coefficients()) {
            *a += z * w;
        }
    }
    let scale = h / 6.0;
    Ok(SpectralField::from_coefficients(
        lattice,
        acc.into_iter().map(|z| z * scale).collect(),
    ))
}

/// Full decomposition at `(eps, t)`; the solver config supplies `dt` and dealiasing.
pub fn decompose(
    u0: &SpectralField,
    model: DispersionModel,
    epsilon: f64,
    t: f64,
    solver: &SolverConfig,
) -> Result<PicardDecomposition> {
    if epsilon <= 0.0 {
        return Err(Error::Config("remainder extraction needs eps > 0".into()));
    }
    let cfg = SolverConfig {
        model,
        epsilon,
        t_final: t,
        ..solver.clone()
    };
    let v = evolve(u0, &cfg)?.v;
    let b = first_iterate_closed_form(u0, model, t);
    let c = remainder_from_state(u0, &b, &v, epsilon);
    Ok(PicardDecomposition {
        t,
        epsilon,
        a: u0.clone(),
        b,
        c,
    })
}

/// `c = (v - a - eps b) / eps^2`.
pub fn extract_second_remainder(
    u0: &SpectralField,
    model: DispersionModel,
    epsilon: f64,
    t: f64,
    solver: &SolverConfig,
) -> Result<SpectralField> {
    Ok(decompose(u0, model, epsilon, t, solver)?.c)
}

fn remainder_from_state(
    a: &SpectralField,
    b: &SpectralField,
    v: &SpectralField,
    epsilon: f64,
) -> SpectralField {
    let inv = 1.0 / (epsilon * epsilon);
    let coeffs = v
        .coefficients()
        .iter()
        .zip(a.coefficients())
        .zip(b.coefficients())
        .map(|((v, a), b)| (v - a - b * epsilon) * inv)
        .collect();
    SpectralField::from_coefficients(a.lattice(), coeffs)
}

/// Norm used for growth scans: `H^1` for BBM, `L^2` otherwise.
pub fn remainder_norm(model: DispersionModel, c: &SpectralField) -> f64 {
    match model {
        DispersionModel::Bbm => c.sobolev_norm(1.0),
        _ => c.l2_norm(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub t: f64,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthScan {
    pub model: DispersionModel,
    pub epsilon: f64,
    pub nmax: i32,
    pub rows: Vec<GrowthRow>,
    /// Least-squares slope of `ln ||c||` against `ln t` over rows with `t, ||c|| > 0`.
    pub exponent: Option<f64>,
    /// Time of a solver abort; rows stop before it.
    pub aborted_at: Option<f64>,
}

impl GrowthScan {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,norm,model,epsilon,nmax")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                crate::format_float(r.t),
                crate::format_float(r.norm),
                self.model,
                crate::format_float(self.epsilon),
                self.nmax
            )?;
        }
        Ok(())
    }
}

/// `||c(t)||` along a sorted time grid from a single solve.
pub fn remainder_growth_scan(
    u0: &SpectralField,
    model: DispersionModel,
    epsilon: f64,
    times: &[f64],
    solver: &SolverConfig,
) -> Result<GrowthScan> {
    if epsilon <= 0.0 {
        return Err(Error::Config("growth scan needs eps > 0".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| t.is_nan() || *t < 0.0) {
        return Err(Error::Config(
            "scan times must be sorted and non-negative".into(),
        ));
    }
    let mut rk = Rk4::new(model, u0.lattice(), epsilon, solver.dealias);
    let mut v = u0.clone();
    let mut t = 0.0;
    let mut rows = Vec::with_capacity(times.len());
    let mut aborted_at = None;
    for &ts in times {
        if let Err(e) = rk.advance(&mut v, t, ts, solver.dt) {
            match e {
                Error::BlowUp { time } => {
                    aborted_at = Some(time);
                    break;
                }
                other => return Err(other),
            }
        }
        t = ts;
        let b = first_iterate_closed_form(u0, model, ts);
        let c = remainder_from_state(u0, &b, &v, epsilon);
        rows.push(GrowthRow {
            t: ts,
            norm: remainder_norm(model, &c),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t > 0.0 && r.norm > 0.0)
        .map(|r| (r.t.ln(), r.norm.ln()))
        .collect();
    Ok(GrowthScan {
        model,
        epsilon,
        nmax: u0.nmax(),
        rows,
        exponent: crate::ensemble::least_squares_slope(&pts),
        aborted_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{
        build_spectrum, sample_initial_field, EnsembleConfig, NoiseLaw, SpectrumFamily,
    };
    use crate::spectral::{Lattice, ModeIndex};

    fn random_datum(model: DispersionModel, nmax: i32, alpha: f64, seed: u64) -> SpectralField {
        let spectrum = build_spectrum(
            SpectrumFamily::Sobolev,
            Some(alpha),
            nmax,
            model.dimension(),
        )
        .unwrap();
        let cfg = EnsembleConfig {
            law: NoiseLaw::ComplexGaussian,
            spectrum,
            samples: 1,
            seed,
        };
        sample_initial_field(&cfg, 0)
    }

    fn rel_l2(a: &SpectralField, b: &SpectralField) -> f64 {
        (a - b).l2_norm() / b.l2_norm()
    }

    #[test]
    fn zero_time_is_zero() {
        let u = random_datum(DispersionModel::Kdv, 6, 2.0, 1);
        let b = first_iterate_closed_form(&u, DispersionModel::Kdv, 0.0);
        assert!(b.coefficients().iter().all(|z| z.norm() == 0.0));
        let q = first_iterate_quadrature(&u, DispersionModel::Kdv, 0.0, 8).unwrap();
        assert!(q.coefficients().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_pair_kdv() {
        let lat = Lattice::new(1, 4);
        let mut u = SpectralField::zeros(lat);
        u.set(ModeIndex::new_1d(1), Complex64::new(1.0, 0.0))
            .unwrap();
        let t = 0.7;
        let b = first_iterate_closed_form(&u, DispersionModel::Kdv, t);
        let want = Complex64::new(0.0, -2.0) * f_kernel(-6.0, t);
        assert!((b.get(ModeIndex::new_1d(2)) - want).norm() < 1e-15);
        assert_eq!(b.get(ModeIndex::new_1d(3)), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn quadrature_matches_closed_form_bbm() {
        let u = random_datum(DispersionModel::Bbm, 17, 1.5, 5);
        for t in [0.3, 2.0] {
            let b = first_iterate_closed_form(&u, DispersionModel::Bbm, t);
            let q = first_iterate_quadrature(&u, DispersionModel::Bbm, t, 64).unwrap();
            assert!(rel_l2(&q, &b) < 1e-10, "t = {t}: {}", rel_l2(&q, &b));
        }
    }

    #[test]
    fn simpson_is_fourth_order() {
        let m = DispersionModel::Kdv;
        let u = random_datum(m, 5, 2.0, 9);
        let b = first_iterate_closed_form(&u, m, 1.0);
        let e1 = rel_l2(&first_iterate_quadrature(&u, m, 1.0, 40).unwrap(), &b);
        let e2 = rel_l2(&first_iterate_quadrature(&u, m, 1.0, 80).unwrap(), &b);
        let ratio = e1 / e2;
        assert!((13.0..19.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn hermitian_by_construction() {
        let u = random_datum(DispersionModel::KpII, 4, 3.0, 2);
        let b = first_iterate_closed_form(&u, DispersionModel::KpII, 1.3);
        for n in u.lattice().active_modes() {
            assert_eq!(b.get(-n), b.get(n).conj());
        }
    }

    #[test]
    fn zero_datum_has_zero_remainder() {
        let lat = Lattice::new(1, 6);
        let u = SpectralField::zeros(lat);
        let solver = SolverConfig::new(DispersionModel::Bbm, 0.1, 0.01, 1.0).unwrap();
        let c = extract_second_remainder(&u, DispersionModel::Bbm, 0.1, 1.0, &solver).unwrap();
        assert!(c.coefficients().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn decomposition_reconstructs_state() {
        let m = DispersionModel::Bbm;
        let u = random_datum(m, 8, 2.0, 4);
        let solver = SolverConfig::new(m, 0.1, 0.01, 1.0).unwrap();
        let d = decompose(&u, m, 0.1, 1.0, &solver).unwrap();
        let v = evolve(&u, &solver).unwrap().v;
        assert!((&d.reconstruct() - &v).l2_norm() < 1e-13 * v.l2_norm());
    }

    #[test]
    fn scan_at_time_zero() {
        let m = DispersionModel::KpII;
        let u = random_datum(m, 3, 3.0, 4);
        let solver = SolverConfig::new(m, 0.05, 0.01, 1.0).unwrap();
        let s = remainder_growth_scan(&u, m, 0.05, &[0.0], &solver).unwrap();
        assert_eq!(s.rows, vec![GrowthRow { t: 0.0, norm: 0.0 }]);
        assert!(s.exponent.is_none());
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out)
            .unwrap()
            .starts_with("t,norm,model,epsilon,nmax\n"));
    }

    #[test]
    fn rejects_few_panels() {
        let u = random_datum(DispersionModel::Kdv, 3, 2.0, 1);
        assert!(first_iterate_quadrature(&u, DispersionModel::Kdv, 1.0, 3).is_err());
    }
}

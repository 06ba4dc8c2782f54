//! Small-scale self-test suite run by `wavestat verify`.

use crate::commands::triad_census;
use num_complex::Complex64;
use wavestat::ensemble::{
    build_spectrum, moment_report, sample_initial_field, EnsembleConfig, NoiseLaw, SpectrumFamily,
    SpectrumProfile,
};
use wavestat::evolve::{nonlinear_rhs, SolverConfig};
use wavestat::picard::{default_panels, first_iterate_closed_form, first_iterate_quadrature};
use wavestat::spectral::{
    f_kernel, sinc_kernel, tilde_f_kernel, DispersionModel, Lattice, ModeIndex, SpectralField,
};
use wavestat::statistics::{g_rate, g_total, g_total_terms, mc_covariance, CovarianceOptions};
use wavestat::{Error, Result};

type OmegaFn = dyn Fn(DispersionModel, ModeIndex) -> f64 + Sync;

/// Knobs for the suite; `omega` replaces the pulsation seen by the divisor oracle.
pub struct VerifyOptions {
    pub omega: Box<OmegaFn>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            omega: Box::new(|m, n| m.omega_raw(n)),
        }
    }
}

impl VerifyOptions {
    /// Named mutations for exercising the suite itself.
    pub fn from_injection(name: Option<&str>) -> Result<Self> {
        match name {
            None | Some("none") => Ok(Self::default()),
            Some("bbm-omega-sign") => Ok(VerifyOptions {
                omega: Box::new(|m, n| match m {
                    DispersionModel::Bbm => -m.omega_raw(n),
                    _ => m.omega_raw(n),
                }),
            }),
            Some(other) => Err(Error::Config(format!("unknown verify.inject `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&'static str> {
        self.checks.iter().find(|c| !c.passed).map(|c| c.name)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// Closed-form divisors: `-3nkl` (KdV), `-nkl(3 + n^2 - kl) / ((1+n^2)(1+k^2)(1+l^2))`
/// (BBM) and `-3 n1 k1 l1 -+ (k1 l2 - k2 l1)^2 / (n1 k1 l1)` (KP-II, KP-I).
pub fn rational_delta(model: DispersionModel, n: ModeIndex, k: ModeIndex, l: ModeIndex) -> f64 {
    let (n1, k1, l1) = (n.first() as f64, k.first() as f64, l.first() as f64);
    let p = n1 * k1 * l1;
    match model {
        DispersionModel::Kdv => -3.0 * p,
        DispersionModel::Bbm => {
            -p * (3.0 + n1 * n1 - k1 * l1) / ((1.0 + n1 * n1) * (1.0 + k1 * k1) * (1.0 + l1 * l1))
        }
        DispersionModel::KpII | DispersionModel::KpI => {
            let w = k1 * l.second() as f64 - k.second() as f64 * l1;
            let sign = if model == DispersionModel::KpI {
                1.0
            } else {
                -1.0
            };
            -3.0 * p + sign * w * w / p
        }
    }
}

fn delta_oracle(opts: &VerifyOptions) -> Check {
    let mut worst = 0.0f64;
    let mut at = String::new();
    for m in DispersionModel::ALL {
        let lattice = Lattice::new(m.dimension(), if m.dimension() == 1 { 16 } else { 6 });
        for n in lattice.stored_modes() {
            for (k, l) in lattice.triads_of(n) {
                let w = |x| (opts.omega)(m, x);
                let direct = w(k) + w(l) - w(n);
                let scale = 1.0 + w(k).abs() + w(l).abs() + w(n).abs();
                let err = (direct - rational_delta(m, n, k, l)).abs() / scale;
                if err > worst {
                    worst = err;
                    at = format!("{m} n={n} k={k} l={l}");
                }
            }
        }
    }
    check(
        "delta-oracle",
        worst <= 1e-12,
        format!("max scaled error {worst:.3e} {at}"),
    )
}

fn kernel_identities() -> Check {
    let mut worst = 0.0f64;
    let mut worst_fd = 0.0f64;
    for i in -40..=40 {
        let delta = i as f64 * 0.37;
        for t in [0.0, 0.1, 1.0, 3.3] {
            worst = worst.max((sinc_kernel(delta, t) + f_kernel(delta, -t).re).abs());
            let h = 1e-4;
            let fd = (tilde_f_kernel(delta, t + h) - tilde_f_kernel(delta, t - h)) / (2.0 * h);
            worst_fd = worst_fd.max((fd - sinc_kernel(delta, t)).abs());
        }
    }
    for delta in [0.999_999e-6, 1.000_001e-6] {
        let x = Complex64::new(0.0, delta);
        let (mut term, mut series) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        for j in 1..10 {
            series += term;
            term *= x / (j + 1) as f64;
        }
        worst = worst.max((f_kernel(delta, 1.0) - series).norm());
    }
    check(
        "kernel-identities",
        worst <= 1e-12 && worst_fd <= 1e-6,
        format!("max defect {worst:.3e}, derivative defect {worst_fd:.3e}"),
    )
}

fn random_datum(model: DispersionModel, nmax: i32, alpha: f64, seed: u64) -> SpectralField {
    let spectrum = build_spectrum(
        SpectrumFamily::Sobolev,
        Some(alpha),
        nmax,
        model.dimension(),
    )
    .expect("sobolev profile");
    sample_initial_field(
        &EnsembleConfig {
            law: NoiseLaw::ComplexGaussian,
            spectrum,
            samples: 1,
            seed,
        },
        0,
    )
}

fn rhs_triad_sum() -> Check {
    let mut worst = 0.0f64;
    for (m, nmax) in [
        (DispersionModel::Kdv, 6),
        (DispersionModel::KpII, 3),
        (DispersionModel::Bbm, 6),
    ] {
        let u = random_datum(m, nmax, 1.0, 3);
        let t = 0.37;
        let rhs = nonlinear_rhs(m, 1.0, t, &u);
        for n in u.lattice().stored_modes() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, l) in u.lattice().triads_of(n) {
                acc += u.get(k) * u.get(l) * Complex64::from_polar(1.0, m.delta_raw(n, k, l) * t);
            }
            let want = Complex64::new(0.0, -m.phi_raw(n)) * acc;
            worst = worst.max((rhs.get(n) - want).norm() / (1.0 + want.norm()));
        }
    }
    check(
        "rhs-triad-sum",
        worst <= 1e-12,
        format!("max error {worst:.3e}"),
    )
}

fn picard_equivalence() -> Check {
    let mut worst = 0.0f64;
    for m in DispersionModel::ALL {
        let u = random_datum(m, if m.dimension() == 1 { 8 } else { 3 }, 2.0, 5);
        for t in [0.1, 1.0] {
            let b = first_iterate_closed_form(&u, m, t);
            let panels = (4 * default_panels(m, &u, t)).max(1024);
            let q = first_iterate_quadrature(&u, m, t, panels).expect("panels >= 4");
            worst = worst.max((&q - &b).l2_norm() / b.l2_norm());
        }
    }
    check(
        "picard-equivalence",
        worst <= 1e-9,
        format!("max relative L2 gap {worst:.3e}"),
    )
}

fn triad_bounds() -> Vec<Check> {
    let kp2 = triad_census(DispersionModel::KpII, 6, 0.0, 0);
    let bbm = triad_census(DispersionModel::Bbm, 16, 0.0, 0);
    let ratio = kp2.min_ratio.unwrap_or(0.0);
    // Pell pair: 97^2 - 3 * 56^2 = 1 makes (1,14) + (7,1) = (8,15) nearly resonant
    let (k, l) = ((1i64, 14i64), (7i64, 1i64));
    let w = k.0 * l.1 - k.1 * l.0;
    let pell = w * w - 3 * 56 * 56 == 1;
    let d = DispersionModel::KpI.delta_raw(
        ModeIndex::new_2d(8, 15),
        ModeIndex::new_2d(1, 14),
        ModeIndex::new_2d(7, 1),
    );
    vec![
        check(
            "kp2-no-resonance",
            kp2.violations == 0 && (ratio - 1.0).abs() < 1e-12,
            format!("{} triads, min ratio {ratio}", kp2.triads),
        ),
        check(
            "bbm-no-resonance",
            bbm.violations == 0 && bbm.min_abs_delta > 0.0,
            format!(
                "{} triads, min |delta| {:.3e}",
                bbm.triads, bbm.min_abs_delta
            ),
        ),
        check(
            "kp1-near-resonance",
            pell && d == 1.0 / 56.0,
            format!("delta = {d}"),
        ),
    ]
}

fn g_checks() -> Vec<Check> {
    let mut worst_eq = 0.0f64;
    for m in DispersionModel::ALL {
        let sp = SpectrumProfile::equilibrium(m, if m.dimension() == 1 { 12 } else { 4 });
        for n in sp.lattice().stored_modes() {
            for term in g_total_terms(n, &sp, m, 2.0).expect("stored mode") {
                worst_eq = worst_eq.max(term.term.abs());
            }
        }
    }
    let m = DispersionModel::Kdv;
    let sp = build_spectrum(SpectrumFamily::Sobolev, Some(1.5), 8, 1).expect("sobolev profile");
    let mut worst_fd = 0.0f64;
    for k in 1..=8 {
        let n = ModeIndex::new_1d(k);
        for t in [0.3, 1.0, 2.5] {
            let h = 1e-5;
            let g = |t| g_total(n, &sp, 1.4, m, t).expect("stored mode").value;
            let fd = (g(t + h) - g(t - h)) / (2.0 * h);
            let r = g_rate(n, &sp, 1.4, m, t).expect("stored mode").value;
            worst_fd = worst_fd.max((fd - r).abs() / (1.0 + r.abs()));
        }
    }
    vec![
        check(
            "g-equilibrium",
            worst_eq <= 1e-14,
            format!("max triad term {worst_eq:.3e}"),
        ),
        check(
            "g-derivative",
            worst_fd <= 1e-5,
            format!("max defect {worst_fd:.3e}"),
        ),
    ]
}

fn sampler_checks() -> Vec<Check> {
    let gauss = moment_report(&NoiseLaw::ComplexGaussian, 200_000, 17);
    let phase = moment_report(&NoiseLaw::random_phase(), 50_000, 17);
    let g_ok = gauss.as_ref().is_ok_and(|r| r.passed());
    let p_row = phase.as_ref().ok().and_then(|r| r.row("|g|^4").cloned());
    let p_ok = phase.as_ref().is_ok_and(|r| r.passed())
        && p_row
            .as_ref()
            .is_some_and(|r| (r.re - 1.0).abs() <= 1e-12 && r.stderr <= 1e-12);
    vec![
        check(
            "moments-gaussian",
            g_ok,
            "2e5 draws, zero moments within 4 stderr".into(),
        ),
        check(
            "moments-random-phase",
            p_ok,
            format!("E|g|^4 = {}", p_row.map(|r| r.re).unwrap_or(f64::NAN)),
        ),
    ]
}

fn coupled_zero() -> Check {
    let m = DispersionModel::Bbm;
    let ens = EnsembleConfig {
        law: NoiseLaw::ComplexGaussian,
        spectrum: build_spectrum(SpectrumFamily::Sobolev, Some(3.0), 8, 1)
            .expect("sobolev profile"),
        samples: 8,
        seed: 2,
    };
    let ok = SolverConfig::new(m, 0.0, 0.05, 1.0)
        .and_then(|s| mc_covariance(&ens, m, 0.0, 1.0, &s, &CovarianceOptions::default()))
        .is_ok_and(|r| r.valid && r.records.iter().all(|x| x.estimate == 0.0));
    check(
        "coupled-zero",
        ok,
        "eps = 0 statistic identically zero".into(),
    )
}

pub fn run_suite(opts: &VerifyOptions) -> VerifyReport {
    let mut checks = vec![delta_oracle(opts), kernel_identities(), rhs_triad_sum()];
    checks.extend(triad_bounds());
    checks.push(picard_equivalence());
    checks.extend(g_checks());
    checks.extend(sampler_checks());
    checks.push(coupled_zero());
    VerifyReport { checks }
}

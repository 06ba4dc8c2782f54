//! Second-order covariance correction `G_n(lambda, t)` and its Monte Carlo check.
//!
//! For the ensemble `u_0 = sum g_n lambda_n e_n` the diagonal covariance obeys
//! `E|u_n(eps; t)|^2 = |lambda_n|^2 + eps^2 G_n(lambda, t) + O(eps^3)`.

use crate::ensemble::{least_squares_slope, sample_initial_field, EnsembleConfig, SpectrumProfile};
use crate::error::{Error, Result};
use crate::evolve::{evolve, SolverConfig};
use crate::format_float;
use crate::spectral::{sinc_kernel, tilde_f_kernel, DispersionModel, ModeIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

/// A value of `G` or its rate with truncation bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GValue {
    pub value: f64,
    /// The kurtosis correction needed `2n`, which lies outside the box.
    pub truncated: bool,
    /// Rough size of the triads lost to the cutoff: edge amplitude times
    /// in-box mass times the kernel bound.
    pub tail_estimate: f64,
}

/// One summand of the triad sum, exposed for per-triad inspection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriadTerm {
    pub k: ModeIndex,
    pub l: ModeIndex,
    pub delta: f64,
    pub kernel: f64,
    /// `phi(n)|l_k|^2|l_l|^2 - phi(k)|l_n|^2|l_l|^2 - phi(l)|l_n|^2|l_k|^2`.
    pub factor: f64,
    /// `4 phi(n) kernel factor`.
    pub term: f64,
}

#[derive(Clone, Copy)]
enum Kernel {
    Rate,
    Total,
}

impl Kernel {
    fn eval(self, delta: f64, t: f64) -> f64 {
        match self {
            Kernel::Rate => sinc_kernel(delta, t),
            Kernel::Total => tilde_f_kernel(delta, t),
        }
    }

    fn bound(self, t: f64) -> f64 {
        match self {
            Kernel::Rate => t.abs(),
            Kernel::Total => 0.5 * t * t,
        }
    }
}

fn check_mode(spectrum: &SpectrumProfile, model: DispersionModel, n: ModeIndex) -> Result<()> {
    let lattice = spectrum.lattice();
    if n.dim() != lattice.dim() || lattice.dim() != model.dimension() {
        return Err(Error::DimensionMismatch {
            mode: n,
            expected: model.dimension(),
            got: n.dim(),
        });
    }
    if !n.is_active() {
        return Err(Error::InactiveMode(n));
    }
    if !lattice.contains(n) {
        return Err(Error::OutsideTruncation {
            mode: n,
            nmax: lattice.nmax(),
        });
    }
    Ok(())
}

fn triad_terms_with(
    n: ModeIndex,
    spectrum: &SpectrumProfile,
    model: DispersionModel,
    t: f64,
    kernel: Kernel,
) -> Vec<TriadTerm> {
    let pn = model.phi_raw(n);
    let ln = spectrum.lambda_sq(n);
    spectrum
        .lattice()
        .triads_of(n)
        .map(|(k, l)| {
            let lk = spectrum.lambda_sq(k);
            let ll = spectrum.lambda_sq(l);
            let factor = pn * lk * ll - model.phi_raw(k) * ln * ll - model.phi_raw(l) * ln * lk;
            let delta = model.delta_raw(n, k, l);
            let kv = kernel.eval(delta, t);
            TriadTerm {
                k,
                l,
                delta,
                kernel: kv,
                factor,
                term: 4.0 * pn * kv * factor,
            }
        })
        .collect()
}

fn g_with(
    n: ModeIndex,
    spectrum: &SpectrumProfile,
    kurtosis: f64,
    model: DispersionModel,
    t: f64,
    kernel: Kernel,
) -> Result<GValue> {
    check_mode(spectrum, model, n)?;
    let lattice = spectrum.lattice();
    let mut value: f64 = triad_terms_with(n, spectrum, model, t, kernel)
        .iter()
        .map(|x| x.term)
        .sum();
    let mut truncated = false;
    let excess = kurtosis - 2.0;
    if excess != 0.0 {
        let pn = model.phi_raw(n);
        if let Some(q) = n.half() {
            if q.is_active() {
                let lq = spectrum.lambda_sq(q);
                value +=
                    excess * 2.0 * kernel.eval(model.delta_raw(n, q, q), t) * pn * pn * lq * lq;
            }
        }
        let two_n = n.scale(2);
        if lattice.contains(two_n) {
            let ln = spectrum.lambda_sq(n);
            value -= excess
                * 4.0
                * kernel.eval(model.delta_raw(n, two_n, -n), t)
                * model.phi_raw(two_n)
                * pn
                * ln
                * ln;
        } else {
            truncated = true;
        }
    }
    Ok(GValue {
        value,
        truncated,
        tail_estimate: tail_estimate(n, spectrum, model, t, kernel),
    })
}

fn tail_estimate(
    n: ModeIndex,
    spectrum: &SpectrumProfile,
    model: DispersionModel,
    t: f64,
    kernel: Kernel,
) -> f64 {
    let lattice = spectrum.lattice();
    let m = lattice.nmax();
    let mut edge = 0.0f64;
    let mut phi_edge = 0.0f64;
    for k in lattice.stored_modes().filter(|k| k.max_abs() == m) {
        edge = edge.max(spectrum.lambda_sq(k));
        phi_edge = phi_edge.max(model.phi_raw(k).abs());
    }
    let mass = spectrum.sobolev_mass(0.0);
    let pn = model.phi_raw(n).abs();
    4.0 * pn * kernel.bound(t) * edge * (pn * mass + 2.0 * phi_edge * spectrum.lambda_sq(n))
}

/// `d_t G_n(lambda, t)`, triads restricted to the spectrum's truncation.
pub fn g_rate(
    n: ModeIndex,
    spectrum: &SpectrumProfile,
    kurtosis: f64,
    model: DispersionModel,
    t: f64,
) -> Result<GValue> {
    g_with(n, spectrum, kurtosis, model, t, Kernel::Rate)
}

/// `G_n(lambda, t)`, the time integral of [`g_rate`] from 0.
pub fn g_total(
    n: ModeIndex,
    spectrum: &SpectrumProfile,
    kurtosis: f64,
    model: DispersionModel,
    t: f64,
) -> Result<GValue> {
    g_with(n, spectrum, kurtosis, model, t, Kernel::Total)
}

/// Per-triad summands of `G_n(t)` (kurtosis-independent part).
pub fn g_total_terms(
    n: ModeIndex,
    spectrum: &SpectrumProfile,
    model: DispersionModel,
    t: f64,
) -> Result<Vec<TriadTerm>> {
    check_mode(spectrum, model, n)?;
    Ok(triad_terms_with(n, spectrum, model, t, Kernel::Total))
}

/// Resonant part of the kinetic collision sum, triads with `|delta| <= threshold`.
pub fn kinetic_residual(
    spectrum: &SpectrumProfile,
    model: DispersionModel,
    threshold: f64,
) -> Vec<(ModeIndex, f64)> {
    let lattice = spectrum.lattice();
    lattice
        .stored_modes()
        .map(|n| {
            let pn = model.phi_raw(n);
            let ln = spectrum.lambda_sq(n);
            let r = lattice
                .triads_of(n)
                .filter(|&(k, l)| model.delta_raw(n, k, l).abs() <= threshold)
                .map(|(k, l)| {
                    let lk = spectrum.lambda_sq(k);
                    let ll = spectrum.lambda_sq(l);
                    pn * lk * ll - model.phi_raw(k) * ln * ll - model.phi_raw(l) * ln * lk
                })
                .sum();
            (n, r)
        })
        .collect()
}

/// Power of `|n|` in the decay bound on `G_n`: `-beta(s)` for BBM, `-2s` for
/// KP-II, `2 - 2s` for KP-I. KdV has none.
pub fn decay_exponent(model: DispersionModel, s: f64) -> Option<f64> {
    match model {
        DispersionModel::Bbm => Some(if s >= 1.0 { -(2.0 + 2.0 * s) } else { -4.0 * s }),
        DispersionModel::KpII => Some(-2.0 * s),
        DispersionModel::KpI => Some(2.0 - 2.0 * s),
        DispersionModel::Kdv => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub mode: ModeIndex,
    pub lambda_sq: f64,
    pub g: f64,
    /// `C |n|^p` (times `t^2` for KP-I) with the smallest `C` covering every mode.
    pub envelope: Option<f64>,
    pub truncated: bool,
    pub tail_estimate: f64,
}

/// `G_n(t)` on every stored mode, with the decay envelope for regularity `s`.
pub fn prediction_records(
    spectrum: &SpectrumProfile,
    kurtosis: f64,
    model: DispersionModel,
    t: f64,
    s: Option<f64>,
) -> Result<Vec<PredictionRecord>> {
    let modes: Vec<ModeIndex> = spectrum.lattice().stored_modes().collect();
    let values: Vec<GValue> = modes
        .par_iter()
        .map(|&n| g_total(n, spectrum, kurtosis, model, t))
        .collect::<Result<_>>()?;
    let shape = |n: ModeIndex, p: f64| {
        let base = (n.l1() as f64).powf(p);
        if model == DispersionModel::KpI {
            base * t * t
        } else {
            base
        }
    };
    let p = s.and_then(|s| decay_exponent(model, s));
    let c = p.map(|p| {
        modes
            .iter()
            .zip(&values)
            .map(|(&n, g)| {
                let sh = shape(n, p);
                if sh > 0.0 {
                    g.value.abs() / sh
                } else {
                    0.0
                }
            })
            .fold(0.0f64, f64::max)
    });
    Ok(modes
        .iter()
        .zip(&values)
        .map(|(&n, g)| PredictionRecord {
            mode: n,
            lambda_sq: spectrum.lambda_sq(n),
            g: g.value,
            envelope: p.zip(c).map(|(p, c)| c * shape(n, p)),
            truncated: g.truncated,
            tail_estimate: g.tail_estimate,
        })
        .collect())
}

/// Running mean and second central moment (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Sample variance with Bessel's correction.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRecord {
    pub mode: ModeIndex,
    pub lambda_sq: f64,
    pub g_pred: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// `None` when the standard error vanishes but the estimate misses `G`.
    pub zscore: Option<f64>,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonalSummary {
    pub modes: usize,
    pub pairs: usize,
    /// Largest `|E(conj(u_m) u_n)|` estimate over the pairs, unscaled.
    pub max_abs: f64,
    pub stderr: f64,
    pub at: Option<(ModeIndex, ModeIndex)>,
    pub max_abs_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub model: DispersionModel,
    pub epsilon: f64,
    pub t: f64,
    pub dt: f64,
    pub seed: u64,
    pub law: crate::ensemble::NoiseLaw,
    pub kurtosis: f64,
    pub spectrum_family: crate::ensemble::SpectrumFamily,
    pub alpha: Option<f64>,
    pub nmax: i32,
    pub samples: usize,
    pub excluded: usize,
    pub valid: bool,
    pub records: Vec<CovarianceRecord>,
    pub off_diagonal: OffDiagonalSummary,
    pub warnings: Vec<String>,
}

impl CovarianceReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mode,lambda_sq,g_pred,mc_estimate,stderr,zscore")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.mode.joined(),
                format_float(r.lambda_sq),
                format_float(r.g_pred),
                format_float(r.estimate),
                format_float(r.stderr),
                r.zscore.map(format_float).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceOptions {
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// Number of lowest modes entering the off-diagonal summary.
    pub off_diagonal_modes: usize,
    /// Samples per accumulation block; fixes the merge order.
    pub block: usize,
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        CovarianceOptions {
            workers: 0,
            off_diagonal_modes: 16,
            block: 64,
        }
    }
}

#[derive(Clone, Default)]
struct Block {
    diag: Vec<Welford>,
    off_re: Vec<Welford>,
    off_im: Vec<Welford>,
    excluded: usize,
    first_error: Option<String>,
}

impl Block {
    fn new(modes: usize, pairs: usize) -> Self {
        Block {
            diag: vec![Welford::default(); modes],
            off_re: vec![Welford::default(); pairs],
            off_im: vec![Welford::default(); pairs],
            excluded: 0,
            first_error: None,
        }
    }

    fn merge(&mut self, other: &Block) {
        for (a, b) in self.diag.iter_mut().zip(&other.diag) {
            a.merge(b);
        }
        for (a, b) in self.off_re.iter_mut().zip(&other.off_re) {
            a.merge(b);
        }
        for (a, b) in self.off_im.iter_mut().zip(&other.off_im) {
            a.merge(b);
        }
        self.excluded += other.excluded;
        if self.first_error.is_none() {
            self.first_error = other.first_error.clone();
        }
    }
}

/// Coupled Monte Carlo estimate of `G_n` against the exact free evolution.
///
/// Each sample contributes `D_n = |u_n(eps; t)|^2 - |u_n(0; t)|^2` for the same
/// noise, so the statistic vanishes identically at `eps = 0` or `t = 0`.
pub fn mc_covariance(
    ensemble: &EnsembleConfig,
    model: DispersionModel,
    epsilon: f64,
    t: f64,
    solver: &SolverConfig,
    options: &CovarianceOptions,
) -> Result<CovarianceReport> {
    if ensemble.samples < 2 {
        return Err(Error::Config(format!(
            "covariance needs at least 2 samples, got {}",
            ensemble.samples
        )));
    }
    if options.block == 0 {
        return Err(Error::Config("accumulation block must be positive".into()));
    }
    ensemble.law.validate()?;
    ensemble.spectrum.check_regularity(model)?;
    let cfg = SolverConfig {
        model,
        epsilon,
        t_final: t,
        ..solver.clone()
    };
    cfg.validate()?;
    let lattice = ensemble.lattice();
    let modes: Vec<ModeIndex> = lattice.stored_modes().collect();
    let mut low: Vec<usize> = (0..modes.len()).collect();
    low.sort_by_key(|&i| (modes[i].l1(), i));
    low.truncate(options.off_diagonal_modes.min(modes.len()));
    let pairs: Vec<(usize, usize)> = (0..low.len())
        .flat_map(|a| ((a + 1)..low.len()).map(move |b| (a, b)))
        .map(|(a, b)| (low[a], low[b]))
        .collect();
    let omega: Vec<f64> = modes.iter().map(|&n| model.omega_raw(n)).collect();

    let samples = ensemble.samples;
    let nblocks = samples.div_ceil(options.block);
    let run_block = |b: usize| -> Block {
        let mut acc = Block::new(modes.len(), pairs.len());
        let lo = b * options.block;
        let hi = (lo + options.block).min(samples);
        for i in lo..hi {
            let a = sample_initial_field(ensemble, i as u64);
            let v = if epsilon == 0.0 || t == 0.0 {
                a.clone()
            } else {
                match evolve(&a, &cfg) {
                    Ok(s) => s.v,
                    Err(e) => {
                        acc.excluded += 1;
                        acc.first_error
                            .get_or_insert_with(|| format!("sample {i}: {e}"));
                        continue;
                    }
                }
            };
            let (ac, vc) = (a.coefficients(), v.coefficients());
            for (j, w) in acc.diag.iter_mut().enumerate() {
                w.push(vc[j].norm_sqr() - ac[j].norm_sqr());
            }
            for (p, &(m, n)) in pairs.iter().enumerate() {
                let phase = num_complex::Complex64::from_polar(1.0, (omega[n] - omega[m]) * t);
                let d = (vc[m].conj() * vc[n] - ac[m].conj() * ac[n]) * phase;
                acc.off_re[p].push(d.re);
                acc.off_im[p].push(d.im);
            }
        }
        acc
    };
    let blocks: Vec<Block> = if options.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..nblocks).into_par_iter().map(run_block).collect())
    } else {
        (0..nblocks).into_par_iter().map(run_block).collect()
    };
    let mut total = Block::new(modes.len(), pairs.len());
    for b in &blocks {
        total.merge(b);
    }

    let kurtosis = ensemble.law.kurtosis();
    let mut warnings = cfg.warnings(lattice);
    if let Some(e) = &total.first_error {
        warnings.push(format!("{} samples excluded, first: {e}", total.excluded));
    }
    let scale = if epsilon == 0.0 {
        0.0
    } else {
        1.0 / (epsilon * epsilon)
    };
    let preds: Vec<GValue> = modes
        .par_iter()
        .map(|&n| g_total(n, &ensemble.spectrum, kurtosis, model, t))
        .collect::<Result<_>>()?;
    if preds.iter().any(|g| g.truncated) {
        warnings
            .push("kurtosis correction dropped for modes whose double lies outside the box".into());
    }
    let records = modes
        .iter()
        .zip(&total.diag)
        .zip(&preds)
        .map(|((&n, w), g)| {
            let estimate = w.mean * scale;
            let stderr = w.stderr() * scale;
            let zscore = if stderr > 0.0 {
                Some((estimate - g.value) / stderr)
            } else if estimate == g.value {
                Some(0.0)
            } else {
                None
            };
            CovarianceRecord {
                mode: n,
                lambda_sq: ensemble.spectrum.lambda_sq(n),
                g_pred: g.value,
                estimate,
                stderr,
                zscore,
                truncated: g.truncated,
            }
        })
        .collect();

    let mut off = OffDiagonalSummary {
        modes: low.len(),
        pairs: pairs.len(),
        max_abs: 0.0,
        stderr: 0.0,
        at: None,
        max_abs_z: 0.0,
    };
    for (p, &(m, n)) in pairs.iter().enumerate() {
        let (re, im) = (&total.off_re[p], &total.off_im[p]);
        let mag = re.mean.hypot(im.mean);
        let se = (re.stderr().powi(2) + im.stderr().powi(2)).sqrt();
        if off.at.is_none() || mag > off.max_abs {
            off.max_abs = mag;
            off.stderr = se;
            off.at = Some((modes[m], modes[n]));
        }
        if se > 0.0 {
            off.max_abs_z = off.max_abs_z.max(mag / se);
        }
    }

    let used = samples - total.excluded;
    Ok(CovarianceReport {
        model,
        epsilon,
        t,
        dt: cfg.dt,
        seed: ensemble.seed,
        law: ensemble.law,
        kurtosis,
        spectrum_family: ensemble.spectrum.family,
        alpha: ensemble.spectrum.alpha,
        nmax: lattice.nmax(),
        samples,
        excluded: total.excluded,
        valid: used >= 2 && (total.excluded as f64) <= 0.01 * samples as f64,
        records,
        off_diagonal: off,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayVerdict {
    pub s: f64,
    pub shells: usize,
    pub slope: Option<f64>,
    /// The bound's exponent plus 0.5.
    pub limit: Option<f64>,
    pub passed: bool,
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionVerdict {
    pub modes: usize,
    pub within_three: f64,
    pub z_passed: bool,
    pub decay: Option<DecayVerdict>,
}

/// Log-log slope of per-shell `max |G_n|` against the shell size `|n|`.
pub fn decay_fit(model: DispersionModel, values: &[(ModeIndex, f64)], s: f64) -> DecayVerdict {
    let mut shells: BTreeMap<i64, f64> = BTreeMap::new();
    for &(n, g) in values {
        let e = shells.entry(n.l1()).or_insert(0.0);
        *e = e.max(g.abs());
    }
    let pts: Vec<(f64, f64)> = shells
        .iter()
        .filter(|(_, g)| **g > 0.0)
        .map(|(r, g)| ((*r as f64).ln(), g.ln()))
        .collect();
    let limit = decay_exponent(model, s).map(|p| p + 0.5);
    if pts.len() < 4 {
        return DecayVerdict {
            s,
            shells: pts.len(),
            slope: None,
            limit,
            passed: false,
            skipped: Some(format!("{} nonzero shells, need 4", pts.len())),
        };
    }
    let slope = least_squares_slope(&pts);
    let passed = match (slope, limit) {
        (Some(a), Some(b)) => a <= b,
        _ => false,
    };
    DecayVerdict {
        s,
        shells: pts.len(),
        slope,
        limit,
        passed,
        skipped: if limit.is_none() {
            Some(format!("no decay bound for {model}"))
        } else {
            None
        },
    }
}

/// z-score summary and, given a regularity `s`, the decay-bound check on `G_n`.
pub fn compare_prediction(
    report: &CovarianceReport,
    decay_s: Option<f64>,
) -> Result<PredictionVerdict> {
    if !report.valid {
        return Err(Error::Config("comparison needs a valid report".into()));
    }
    let modes = report.records.len();
    let within = report
        .records
        .iter()
        .filter(|r| r.zscore.is_some_and(|z| z.abs() <= 3.0))
        .count();
    let within_three = if modes == 0 {
        1.0
    } else {
        within as f64 / modes as f64
    };
    let decay = decay_s.map(|s| {
        let values: Vec<(ModeIndex, f64)> =
            report.records.iter().map(|r| (r.mode, r.g_pred)).collect();
        decay_fit(report.model, &values, s)
    });
    Ok(PredictionVerdict {
        modes,
        within_three,
        z_passed: within_three >= 0.95,
        decay,
    })
}

//! One function per subcommand; each writes its files under `out.dir`.

use crate::config::{RunConfig, ScanDatum};
use crate::verify;
use num_complex::Complex64;
use serde_json::json;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use wavestat::ensemble::{moment_report, sample_initial_field, tail_report, EnsembleConfig};
use wavestat::evolve::SolverConfig;
use wavestat::picard::remainder_growth_scan;
use wavestat::spectral::{DispersionModel, Lattice, ModeIndex, SpectralField};
use wavestat::statistics::{
    compare_prediction, mc_covariance, prediction_records, CovarianceOptions,
};
use wavestat::{format_float, Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELF_TEST: i32 = 1;
pub const EXIT_BOUND_VIOLATION: i32 = 2;
pub const EXIT_INVALID_REPORT: i32 = 3;
pub const EXIT_CONFIG: i32 = 64;

/// Largest cutoff accepted by the exhaustive triad enumeration.
pub const RESONANCE_NMAX_LIMIT: i32 = 32;

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(dir.join(name))
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

#[derive(Clone, Copy, Debug)]
struct TriadRow {
    n: ModeIndex,
    k: ModeIndex,
    l: ModeIndex,
    delta: f64,
}

impl TriadRow {
    fn key(&self) -> (f64, ModeIndex, ModeIndex) {
        (self.delta.abs(), self.n, self.k)
    }
}

impl PartialEq for TriadRow {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for TriadRow {}

impl PartialOrd for TriadRow {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TriadRow {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, an, ak) = self.key();
        let (b, bn, bk) = other.key();
        a.total_cmp(&b).then(an.cmp(&bn)).then(ak.cmp(&bk))
    }
}

/// Summary of an exhaustive triad enumeration.
#[derive(Clone, Debug)]
pub struct TriadCensus {
    pub triads: usize,
    pub min_abs_delta: f64,
    pub argmin: Option<(ModeIndex, ModeIndex, ModeIndex)>,
    /// KP-II only: `min |delta| / (3 |n_1 k_1 l_1|)`.
    pub min_ratio: Option<f64>,
    pub below_threshold: usize,
    pub violations: usize,
    rows: Vec<TriadRow>,
}

/// Enumerates every triad with `n_1 > 0` and checks the model's divisor bound.
pub fn triad_census(model: DispersionModel, nmax: i32, threshold: f64, keep: usize) -> TriadCensus {
    let lattice = Lattice::new(model.dimension(), nmax);
    let mut heap: BinaryHeap<TriadRow> = BinaryHeap::new();
    let mut census = TriadCensus {
        triads: 0,
        min_abs_delta: f64::INFINITY,
        argmin: None,
        min_ratio: (model == DispersionModel::KpII).then_some(f64::INFINITY),
        below_threshold: 0,
        violations: 0,
        rows: Vec::new(),
    };
    for n in lattice.stored_modes() {
        for (k, l) in lattice.triads_of(n) {
            let delta = model.delta_raw(n, k, l);
            let a = delta.abs();
            census.triads += 1;
            if a < census.min_abs_delta {
                census.min_abs_delta = a;
                census.argmin = Some((n, k, l));
            }
            if a <= threshold {
                census.below_threshold += 1;
            }
            let ok = match model {
                DispersionModel::KpII => {
                    let bound =
                        3.0 * (n.first() as f64 * k.first() as f64 * l.first() as f64).abs();
                    let r = a / bound;
                    census.min_ratio = census.min_ratio.map(|m| m.min(r));
                    a >= bound * (1.0 - 1e-12)
                }
                DispersionModel::Bbm | DispersionModel::Kdv => a > 0.0,
                DispersionModel::KpI => true,
            };
            if !ok {
                census.violations += 1;
            }
            let row = TriadRow { n, k, l, delta };
            if heap.len() < keep {
                heap.push(row);
            } else if keep > 0 && row < *heap.peek().expect("non-empty heap") {
                heap.pop();
                heap.push(row);
            }
        }
    }
    census.rows = heap.into_sorted_vec();
    census
}

pub fn cmd_resonances(cfg: &RunConfig) -> Result<i32> {
    if cfg.nmax > RESONANCE_NMAX_LIMIT {
        return Err(Error::Config(format!(
            "resonance enumeration is limited to nmax <= {RESONANCE_NMAX_LIMIT}"
        )));
    }
    let model = cfg.model;
    let census = triad_census(model, cfg.nmax, cfg.resonance_threshold, cfg.max_rows);
    let mut w = create(&cfg.out_dir, "resonances.csv")?;
    writeln!(w, "n,k,l,delta,ratio")?;
    for r in &census.rows {
        let ratio = (model == DispersionModel::KpII).then(|| {
            r.delta.abs()
                / (3.0 * (r.n.first() as f64 * r.k.first() as f64 * r.l.first() as f64).abs())
        });
        writeln!(
            w,
            "{},{},{},{},{}",
            r.n.joined(),
            r.k.joined(),
            r.l.joined(),
            format_float(r.delta),
            opt_float(ratio)
        )?;
    }
    w.flush()?;
    let holds = census.violations == 0;
    write_json(
        &cfg.out_dir,
        "resonances.json",
        &json!({
            "model": model.to_string(),
            "nmax": cfg.nmax,
            "triads": census.triads,
            "rows_written": census.rows.len(),
            "min_abs_delta": census.min_abs_delta,
            "argmin": census.argmin.map(|(n, k, l)| [n.joined(), k.joined(), l.joined()]),
            "min_ratio": census.min_ratio,
            "threshold": cfg.resonance_threshold,
            "below_threshold": census.below_threshold,
            "violations": census.violations,
            "bounds_hold": holds,
        }),
    )?;
    println!(
        "{model} nmax={} triads={} min|delta|={}{} below({})={} violations={}",
        cfg.nmax,
        census.triads,
        format_float(census.min_abs_delta),
        census
            .min_ratio
            .map(|r| format!(" min_ratio={}", format_float(r)))
            .unwrap_or_default(),
        format_float(cfg.resonance_threshold),
        census.below_threshold,
        census.violations
    );
    Ok(if holds { EXIT_OK } else { EXIT_BOUND_VIOLATION })
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<i32> {
    let spectrum = cfg.spectrum()?;
    let kurtosis = cfg.law.kurtosis();
    let s = cfg.decay_s(&spectrum);
    let mut w = create(&cfg.out_dir, "predict.csv")?;
    writeln!(
        w,
        "t,mode,lambda_sq,g_total,envelope,tail_estimate,warnings"
    )?;
    let mut truncated_modes = 0;
    for &t in &cfg.prediction_times() {
        for r in prediction_records(&spectrum, kurtosis, cfg.model, t, s)? {
            if r.truncated {
                truncated_modes += 1;
            }
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                format_float(t),
                r.mode.joined(),
                format_float(r.lambda_sq),
                format_float(r.g),
                opt_float(r.envelope),
                format_float(r.tail_estimate),
                if r.truncated {
                    "double-outside-box"
                } else {
                    ""
                }
            )?;
        }
    }
    w.flush()?;
    write_json(
        &cfg.out_dir,
        "predict.json",
        &json!({
            "model": cfg.model.to_string(),
            "nmax": cfg.nmax,
            "times": cfg.prediction_times(),
            "kurtosis": kurtosis,
            "decay_s": s,
            "truncated_rows": truncated_modes,
        }),
    )?;
    println!(
        "{} modes x {} times written, {} truncation warnings",
        cfg.lattice().len(),
        cfg.prediction_times().len(),
        truncated_modes
    );
    Ok(EXIT_OK)
}

pub fn ensemble(cfg: &RunConfig) -> Result<EnsembleConfig> {
    Ok(EnsembleConfig {
        law: cfg.law,
        spectrum: cfg.spectrum()?,
        samples: cfg.samples,
        seed: cfg.seed,
    })
}

pub fn cmd_covariance(cfg: &RunConfig, config_echo: serde_json::Value) -> Result<i32> {
    let ens = ensemble(cfg)?;
    let dt = cfg.dt();
    let lattice = cfg.lattice();
    let steps = (cfg.t / dt).ceil().max(1.0);
    let grid = (4.0 * cfg.nmax as f64).powi(lattice.dim() as i32);
    let cost = cfg.samples as f64 * steps * grid;
    if cost > cfg.budget {
        return Err(Error::Config(format!(
            "estimated cost {cost:.3e} exceeds run.budget {:.3e}",
            cfg.budget
        )));
    }
    let solver = SolverConfig::new(cfg.model, cfg.epsilon, dt, cfg.t)?;
    let opts = CovarianceOptions {
        workers: cfg.workers,
        ..Default::default()
    };
    let report = mc_covariance(&ens, cfg.model, cfg.epsilon, cfg.t, &solver, &opts)?;
    let mut w = create(&cfg.out_dir, "covariance.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let verdict = if report.valid {
        Some(compare_prediction(&report, cfg.decay_s(&ens.spectrum))?)
    } else {
        None
    };
    write_json(
        &cfg.out_dir,
        "covariance.json",
        &json!({ "config": config_echo, "report": report, "verdict": verdict }),
    )?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    match &verdict {
        Some(v) => println!(
            "{} modes, {:.1}% within |z| <= 3, {} excluded of {}",
            v.modes,
            100.0 * v.within_three,
            report.excluded,
            report.samples
        ),
        None => println!(
            "invalid report: {} of {} samples excluded",
            report.excluded, report.samples
        ),
    }
    Ok(if report.valid {
        EXIT_OK
    } else {
        EXIT_INVALID_REPORT
    })
}

/// Two-mode KP-I datum on the triad `(1,14) + (7,1) = (8,15)`, `|delta| = 1/56`.
pub fn near_resonant_datum(nmax: i32, amplitude: f64) -> Result<SpectralField> {
    if nmax < 15 {
        return Err(Error::Config(
            "the near-resonant datum needs nmax >= 15".into(),
        ));
    }
    let mut u = SpectralField::zeros(Lattice::new(2, nmax));
    u.set(ModeIndex::new_2d(1, 14), Complex64::new(amplitude, 0.0))?;
    u.set(ModeIndex::new_2d(7, 1), Complex64::new(0.0, amplitude))?;
    Ok(u)
}

pub fn cmd_picard_scan(cfg: &RunConfig) -> Result<i32> {
    if cfg.epsilon <= 0.0 {
        return Err(Error::Config("picard-scan needs run.epsilon > 0".into()));
    }
    let u0 = match cfg.scan_datum {
        ScanDatum::Sample => sample_initial_field(&ensemble(cfg)?, 0),
        ScanDatum::NearResonant => {
            if cfg.model.dimension() != 2 {
                return Err(Error::Config(
                    "the near-resonant datum is two-dimensional".into(),
                ));
            }
            near_resonant_datum(cfg.nmax, 0.1)?
        }
    };
    let t_end = cfg.scan_times.iter().cloned().fold(0.0, f64::max);
    let solver = SolverConfig::new(cfg.model, cfg.epsilon, cfg.dt(), t_end)?;
    let scan = remainder_growth_scan(&u0, cfg.model, cfg.epsilon, &cfg.scan_times, &solver)?;
    let mut w = create(&cfg.out_dir, "picard_scan.csv")?;
    scan.write_csv(&mut w)?;
    w.flush()?;
    write_json(
        &cfg.out_dir,
        "picard_scan.json",
        &serde_json::to_value(&scan)?,
    )?;
    println!(
        "{} rows, exponent {}{}",
        scan.rows.len(),
        opt_float(scan.exponent),
        scan.aborted_at
            .map(|t| format!(", solver aborted at t = {}", format_float(t)))
            .unwrap_or_default()
    );
    Ok(EXIT_OK)
}

pub fn cmd_sample_diagnostics(cfg: &RunConfig) -> Result<i32> {
    let moments = moment_report(&cfg.law, cfg.draws, cfg.seed)?;
    let tail = tail_report(&ensemble(cfg)?, cfg.tail_draws, cfg.diagnostics_s)?;
    let mut w = create(&cfg.out_dir, "moments.csv")?;
    writeln!(w, "moment,re,im,stderr,expected,flagged")?;
    for m in &moments.moments {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            m.name,
            format_float(m.re),
            format_float(m.im),
            format_float(m.stderr),
            opt_float(m.expected),
            m.flagged
        )?;
        println!(
            "E[{}] = {} {:+}i  (stderr {}){}",
            m.name,
            format_float(m.re),
            m.im,
            format_float(m.stderr),
            if m.flagged { "  FLAGGED" } else { "" }
        );
    }
    w.flush()?;
    write_json(
        &cfg.out_dir,
        "diagnostics.json",
        &json!({ "moments": moments, "tail": tail }),
    )?;
    println!(
        "tail slope of ln P against R^2: {} (median {}, rms {})",
        opt_float(tail.slope),
        format_float(tail.median),
        format_float(tail.rms)
    );
    Ok(if moments.passed() {
        EXIT_OK
    } else {
        EXIT_SELF_TEST
    })
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<i32> {
    let opts = verify::VerifyOptions::from_injection(cfg.inject.as_deref())?;
    let report = verify::run_suite(&opts);
    for c in &report.checks {
        println!(
            "{:<4} {:<28} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if let Some(name) = report.first_failure() {
        println!("verify failed: {name}");
        Ok(EXIT_SELF_TEST)
    } else {
        println!("all {} checks passed", report.checks.len());
        Ok(EXIT_OK)
    }
}

//! Random initial data `u_0 = sum_n g_n lambda_n exp(i n.x)`.
//!
//! Every `g_n` comes from a ChaCha8 stream keyed by the master seed (key),
//! the sample index (stream id) and the mode coordinates (word position), so
//! a sample can be regenerated in isolation and in any order, and the draw
//! for a given mode does not depend on the cutoff.

use crate::error::{Error, Result};
use crate::spectral::{DispersionModel, Lattice, ModeIndex, SpectralField};
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::str::FromStr;

/// Amplitude law of a random-phase variable `g = A exp(i theta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Amplitude {
    /// `A = 1` surely.
    Constant,
    /// `A` uniform on `[lo, hi]`, rescaled so that `E(A^2) = 1`.
    Uniform { lo: f64, hi: f64 },
}

impl Amplitude {
    /// A uniform law on `[lo, 1]` with the requested `E(A^4)`, for kurtosis in `[1, 9/5]`.
    pub fn uniform_with_kurtosis(kurtosis: f64) -> Result<Self> {
        if !(1.0..=1.8).contains(&kurtosis) {
            return Err(Error::Config(format!(
                "uniform random-phase amplitudes reach kurtosis in [1, 1.8], got {kurtosis}"
            )));
        }
        if kurtosis == 1.0 {
            return Ok(Amplitude::Constant);
        }
        // kurtosis of U[lo, 1] decreases monotonically from 9/5 at lo = 0 to 1 at lo -> 1
        let (mut a, mut b) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            let k = Amplitude::Uniform { lo: mid, hi: 1.0 }.fourth_moment();
            if k > kurtosis {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(Amplitude::Uniform {
            lo: 0.5 * (a + b),
            hi: 1.0,
        })
    }

    fn raw_moment(lo: f64, hi: f64, p: i32) -> f64 {
        if (hi - lo).abs() < 1e-300 {
            return lo.powi(p);
        }
        (hi.powi(p + 1) - lo.powi(p + 1)) / ((p + 1) as f64 * (hi - lo))
    }

    fn scale(&self) -> f64 {
        match *self {
            Amplitude::Constant => 1.0,
            Amplitude::Uniform { lo, hi } => 1.0 / Self::raw_moment(lo, hi, 2).sqrt(),
        }
    }

    /// `E(A^4)` of the rescaled law.
    pub fn fourth_moment(&self) -> f64 {
        match *self {
            Amplitude::Constant => 1.0,
            Amplitude::Uniform { lo, hi } => {
                Self::raw_moment(lo, hi, 4) / Self::raw_moment(lo, hi, 2).powi(2)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Amplitude::Uniform { lo, hi } = *self {
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::Config(format!(
                    "uniform amplitude needs 0 <= lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Law of the unit-variance mode variables `g_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseLaw {
    /// `(h + i l) / sqrt(2)` with independent standard normals.
    ComplexGaussian,
    /// `A exp(i theta)`, theta uniform on `[0, 2 pi)`.
    RandomPhase { amplitude: Amplitude },
}

impl NoiseLaw {
    pub fn random_phase() -> Self {
        NoiseLaw::RandomPhase {
            amplitude: Amplitude::Constant,
        }
    }

    /// `E(|g|^4)`, taken from the law analytically.
    pub fn kurtosis(&self) -> f64 {
        match self {
            NoiseLaw::ComplexGaussian => 2.0,
            NoiseLaw::RandomPhase { amplitude } => amplitude.fourth_moment(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseLaw::ComplexGaussian => Ok(()),
            NoiseLaw::RandomPhase { amplitude } => amplitude.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseLaw::ComplexGaussian => "complex-gaussian",
            NoiseLaw::RandomPhase { .. } => "random-phase",
        }
    }

    /// One draw of `g`; always consumes exactly two 64-bit words.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let u1 = unit_f64(rng.next_u64());
        let u2 = unit_f64(rng.next_u64());
        let theta = 2.0 * PI * u2;
        match self {
            NoiseLaw::ComplexGaussian => {
                // |g|^2 ~ Exp(1); 1 - u1 lies in (0, 1]
                Complex64::from_polar((-(1.0 - u1).ln()).sqrt(), theta)
            }
            NoiseLaw::RandomPhase { amplitude } => {
                let a = match *amplitude {
                    Amplitude::Constant => 1.0,
                    Amplitude::Uniform { lo, hi } => amplitude.scale() * (lo + (hi - lo) * u1),
                };
                Complex64::from_polar(a, theta)
            }
        }
    }
}

#[inline]
fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumFamily {
    /// `lambda_n = (1 + |n|_2^2)^(-alpha/2)`.
    Sobolev,
    /// `lambda_n = 1 / sqrt(1 + |n|_2^2)`.
    BbmGibbs,
    /// `lambda_n = 1`.
    Constant,
    /// Values supplied per mode.
    CustomTable,
}

impl FromStr for SpectrumFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sobolev" => Ok(SpectrumFamily::Sobolev),
            "bbm-gibbs" | "gibbs" => Ok(SpectrumFamily::BbmGibbs),
            "constant" => Ok(SpectrumFamily::Constant),
            "custom-table" | "custom" => Ok(SpectrumFamily::CustomTable),
            other => Err(Error::Config(format!("unknown spectrum family `{other}`"))),
        }
    }
}

/// Real, positive amplitude profile over the stored half-lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProfile {
    pub family: SpectrumFamily,
    pub alpha: Option<f64>,
    lattice: Lattice,
    values: Vec<f64>,
}

pub fn build_spectrum(
    family: SpectrumFamily,
    alpha: Option<f64>,
    nmax: i32,
    dimension: usize,
) -> Result<SpectrumProfile> {
    let lattice = Lattice::new(dimension, nmax);
    let values = match family {
        SpectrumFamily::Sobolev => {
            let a = alpha.ok_or_else(|| Error::Config("sobolev spectrum needs alpha".into()))?;
            if !a.is_finite() {
                return Err(Error::Config(format!("alpha must be finite, got {a}")));
            }
            lattice
                .stored_modes()
                .map(|n| (1.0 + n.euclid_sq() as f64).powf(-0.5 * a))
                .collect()
        }
        SpectrumFamily::BbmGibbs => lattice
            .stored_modes()
            .map(|n| 1.0 / (1.0 + n.euclid_sq() as f64).sqrt())
            .collect(),
        SpectrumFamily::Constant => vec![1.0; lattice.len()],
        SpectrumFamily::CustomTable => {
            return Err(Error::Config(
                "custom spectra are built from a table, see SpectrumProfile::from_table".into(),
            ))
        }
    };
    Ok(SpectrumProfile {
        family,
        alpha: if family == SpectrumFamily::Sobolev {
            alpha
        } else {
            None
        },
        lattice,
        values,
    })
}

impl SpectrumProfile {
    /// A custom profile; modes missing from `entries` get amplitude zero.
    pub fn from_table(lattice: Lattice, entries: &[(ModeIndex, f64)]) -> Result<Self> {
        let mut values = vec![0.0; lattice.len()];
        for &(n, v) in entries {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "amplitude at {n} must be >= 0, got {v}"
                )));
            }
            let m = if n.first() < 0 { -n } else { n };
            let i = lattice.index_of(m).ok_or(Error::OutsideTruncation {
                mode: n,
                nmax: lattice.nmax(),
            })?;
            values[i] = v;
        }
        Ok(SpectrumProfile {
            family: SpectrumFamily::CustomTable,
            alpha: None,
            lattice,
            values,
        })
    }

    pub fn zero(lattice: Lattice) -> Self {
        SpectrumProfile {
            family: SpectrumFamily::CustomTable,
            alpha: None,
            lattice,
            values: vec![0.0; lattice.len()],
        }
    }

    /// The profile `|lambda_k|^2 = phi(k) / k_1` that cancels the second-order drift
    /// under kurtosis 2: Gibbs for BBM, constant for KdV and KP.
    pub fn equilibrium(model: DispersionModel, nmax: i32) -> Self {
        let family = match model {
            DispersionModel::Bbm => SpectrumFamily::BbmGibbs,
            _ => SpectrumFamily::Constant,
        };
        build_spectrum(family, None, nmax, model.dimension()).expect("closed-form family")
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `lambda_n` for any mode (`lambda_{-n} = lambda_n`); zero outside the box.
    pub fn lambda(&self, n: ModeIndex) -> f64 {
        let m = if n.first() < 0 { -n } else { n };
        self.lattice.index_of(m).map_or(0.0, |i| self.values[i])
    }

    pub fn lambda_sq(&self, n: ModeIndex) -> f64 {
        let l = self.lambda(n);
        l * l
    }

    /// Supremum of the Sobolev exponents `s` for which the untruncated profile is summable.
    pub fn effective_regularity(&self) -> Option<f64> {
        let d = self.lattice.dim() as f64;
        match self.family {
            SpectrumFamily::Sobolev => self.alpha.map(|a| a - 0.5 * d),
            SpectrumFamily::BbmGibbs => Some(1.0 - 0.5 * d),
            SpectrumFamily::Constant => Some(-0.5 * d),
            SpectrumFamily::CustomTable => None,
        }
    }

    /// Rejects Sobolev profiles too rough for the model's covariance expansion.
    ///
    /// Equilibrium families and custom tables are accepted: they are finite on
    /// the truncation and are used precisely because of their cancellations.
    pub fn check_regularity(&self, model: DispersionModel) -> Result<()> {
        if self.lattice.dim() != model.dimension() {
            return Err(Error::Config(format!(
                "spectrum has dimension {}, {} needs {}",
                self.lattice.dim(),
                model,
                model.dimension()
            )));
        }
        if self.family != SpectrumFamily::Sobolev {
            return Ok(());
        }
        let available = self.effective_regularity().unwrap_or(f64::INFINITY);
        let required = model.required_regularity();
        if available <= required {
            return Err(Error::Regularity {
                model,
                required,
                available,
                alpha_threshold: required + 0.5 * self.lattice.dim() as f64,
            });
        }
        Ok(())
    }

    /// `sum_{n in D^d} |n|^{2s} |lambda_n|^2` over both half-lattices.
    pub fn sobolev_mass(&self, s: f64) -> f64 {
        2.0 * self
            .lattice
            .stored_modes()
            .zip(&self.values)
            .map(|(n, v)| (n.l1() as f64).powf(2.0 * s) * v * v)
            .sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub law: NoiseLaw,
    pub spectrum: SpectrumProfile,
    pub samples: usize,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn lattice(&self) -> Lattice {
        self.spectrum.lattice()
    }
}

/// Word offset of the draw for a stored mode; independent of the cutoff.
fn mode_key(n: ModeIndex) -> u128 {
    let a = (n.first() - 1) as u128;
    if n.dim() == 1 {
        return a;
    }
    let b = if n.second() >= 0 {
        2 * n.second() as u128
    } else {
        (-2 * n.second() as i64 - 1) as u128
    };
    (a + b) * (a + b + 1) / 2 + b
}

/// Deterministic per-sample generator: stream `sample_index` under key `seed`.
pub struct SampleStream {
    rng: ChaCha8Rng,
}

impl SampleStream {
    pub fn new(seed: u64, sample_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sample_index);
        SampleStream { rng }
    }

    /// Rewinds to the draw reserved for mode `n`.
    pub fn seek_mode(&mut self, n: ModeIndex) {
        // each draw uses two u64, i.e. four 32-bit words
        self.rng.set_word_pos(4 * mode_key(n));
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// One draw of `g` from `stream` at its current position.
pub fn sample_mode_coefficient(law: &NoiseLaw, stream: &mut SampleStream) -> Complex64 {
    law.sample(stream.rng())
}

/// Unit-variance variables `g_n` for every stored mode of one sample.
pub fn sample_noise(
    law: &NoiseLaw,
    lattice: Lattice,
    seed: u64,
    sample_index: u64,
) -> Vec<Complex64> {
    let mut stream = SampleStream::new(seed, sample_index);
    lattice
        .stored_modes()
        .map(|n| {
            stream.seek_mode(n);
            sample_mode_coefficient(law, &mut stream)
        })
        .collect()
}

/// The random datum `u_0` for one sample index.
pub fn sample_initial_field(config: &EnsembleConfig, sample_index: u64) -> SpectralField {
    let lattice = config.lattice();
    let g = sample_noise(&config.law, lattice, config.seed, sample_index);
    SpectralField::from_coefficients(
        lattice,
        g.into_iter()
            .zip(config.spectrum.values())
            .map(|(g, l)| g * *l)
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub name: String,
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
    /// Value the law mandates, where the theory fixes one.
    pub expected: Option<f64>,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub law: NoiseLaw,
    pub draws: usize,
    pub moments: Vec<MomentRow>,
}

impl MomentReport {
    pub fn passed(&self) -> bool {
        self.moments.iter().all(|m| !m.flagged)
    }

    pub fn row(&self, name: &str) -> Option<&MomentRow> {
        self.moments.iter().find(|m| m.name == name)
    }
}

const MOMENT_NAMES: [&str; 7] = ["g", "g^2", "g^3", "g^4", "|g|^2 g", "|g|^2", "|g|^4"];
const CHUNK: usize = 1 << 14;

#[derive(Clone, Copy, Default)]
struct MomentSums {
    count: usize,
    sum: [Complex64; 7],
    sum_sq: [f64; 7],
}

impl MomentSums {
    fn push(&mut self, g: Complex64) {
        let a2 = g.norm_sqr();
        let g2 = g * g;
        let vals = [g, g2, g2 * g, g2 * g2, g * a2, a2.into(), (a2 * a2).into()];
        for (i, v) in vals.iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v.norm_sqr();
        }
        self.count += 1;
    }

    fn merge(mut self, other: &MomentSums) -> Self {
        self.count += other.count;
        for i in 0..7 {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self
    }
}

/// Empirical low-order moments of `g` with standard errors.
///
/// `E(g)`, `E(g^2)`, `E(g^3)`, `E(g^4)` and `E(|g|^2 g)` must vanish; a row is
/// flagged when its modulus exceeds four standard errors.
pub fn moment_report(law: &NoiseLaw, draws: usize, seed: u64) -> Result<MomentReport> {
    if draws < 10_000 {
        return Err(Error::Config(format!(
            "moment_report needs >= 1e4 draws, got {draws}"
        )));
    }
    law.validate()?;
    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<MomentSums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(draws - c * CHUNK);
            let mut acc = MomentSums::default();
            for _ in 0..n {
                acc.push(law.sample(&mut rng));
            }
            acc
        })
        .collect();
    let total = parts.iter().fold(MomentSums::default(), |a, b| a.merge(b));
    let m = total.count as f64;
    let kurt = law.kurtosis();
    let moments = MOMENT_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mean = total.sum[i] / m;
            let var = ((total.sum_sq[i] / m - mean.norm_sqr()) * m / (m - 1.0)).max(0.0);
            let stderr = (var / m).sqrt();
            let expected = match i {
                5 => Some(1.0),
                6 => Some(kurt),
                _ => Some(0.0),
            };
            let tol = (4.0 * stderr).max(1e-12);
            let flagged = match expected {
                Some(e) => (mean - Complex64::new(e, 0.0)).norm() > tol,
                None => false,
            };
            MomentRow {
                name: name.to_string(),
                re: mean.re,
                im: mean.im,
                stderr,
                expected,
                flagged,
            }
        })
        .collect();
    Ok(MomentReport {
        law: *law,
        draws,
        moments,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRung {
    pub r: f64,
    pub frequency: f64,
    pub exceedances: usize,
    pub included: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub law: NoiseLaw,
    pub draws: usize,
    pub s: f64,
    /// `(E ||u_0||^2_{H^s})^{1/2}`, computed exactly from the profile.
    pub rms: f64,
    pub median: f64,
    pub ladder: Vec<TailRung>,
    /// Least-squares slope of `ln P(||u_0|| >= R)` against `R^2`.
    pub slope: Option<f64>,
    pub notes: Vec<String>,
}

/// Minimum exceedance count for a ladder rung to enter the slope fit.
pub const TAIL_MIN_EXCEEDANCES: usize = 10;
const TAIL_RUNGS: usize = 12;

/// Empirical tail of `||u_0||_{H^s}` over samples `0..draws`.
pub fn tail_report(config: &EnsembleConfig, draws: usize, s: f64) -> Result<TailReport> {
    if draws < 10_000 {
        return Err(Error::Config(format!(
            "tail_report needs >= 1e4 draws, got {draws}"
        )));
    }
    config.law.validate()?;
    let lattice = config.lattice();
    let weights: Vec<f64> = lattice
        .stored_modes()
        .zip(config.spectrum.values())
        .map(|(n, l)| 2.0 * (n.l1() as f64).powf(2.0 * s) * l * l)
        .collect();
    let mut norms: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|i| {
            let g = sample_noise(&config.law, lattice, config.seed, i);
            g.iter()
                .zip(&weights)
                .map(|(g, w)| w * g.norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    norms.sort_by(|a, b| a.total_cmp(b));
    let median = norms[draws / 2];
    let max = norms[draws - 1];
    let rms = weights.iter().sum::<f64>().sqrt();
    let mut notes = Vec::new();
    let rungs: Vec<f64> = if max > median {
        (0..TAIL_RUNGS)
            .map(|j| median + (max - median) * j as f64 / TAIL_RUNGS as f64)
            .collect()
    } else {
        notes.push("degenerate norm distribution; unit ladder used".into());
        (1..=TAIL_RUNGS).map(|j| j as f64).collect()
    };
    let ladder: Vec<TailRung> = rungs
        .iter()
        .map(|&r| {
            let exceed = draws - norms.partition_point(|x| *x < r);
            let exceed = if r <= 0.0 { 0 } else { exceed };
            TailRung {
                r,
                frequency: exceed as f64 / draws as f64,
                exceedances: exceed,
                included: exceed >= TAIL_MIN_EXCEEDANCES,
            }
        })
        .collect();
    for rung in ladder.iter().filter(|r| !r.included) {
        notes.push(format!(
            "rung R = {:.6e} omitted from fit ({} exceedances)",
            rung.r, rung.exceedances
        ));
    }
    let pts: Vec<(f64, f64)> = ladder
        .iter()
        .filter(|r| r.included)
        .map(|r| (r.r * r.r, r.frequency.ln()))
        .collect();
    let slope = least_squares_slope(&pts);
    if slope.is_none() {
        notes.push("fewer than two usable rungs; slope not fitted".into());
    }
    Ok(TailReport {
        law: config.law,
        draws,
        s,
        rms,
        median,
        ladder,
        slope,
        notes,
    })
}

/// Ordinary least-squares slope; `None` for fewer than two distinct abscissae.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

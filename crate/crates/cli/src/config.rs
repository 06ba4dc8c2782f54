//! Flat dotted-key run configuration.
//!
//! A config file is one JSON object. Keys may be written flat
//! (`"grid.nmax": 16`) or nested (`{"grid": {"nmax": 16}}`); both flatten to
//! the same dotted map. `--set key=value` overrides are applied afterwards,
//! the value parsed as JSON when it parses and taken as a string otherwise.

use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use wavestat::ensemble::{build_spectrum, Amplitude, NoiseLaw, SpectrumFamily, SpectrumProfile};
use wavestat::evolve::default_dt;
use wavestat::spectral::{DispersionModel, Lattice, ModeIndex};
use wavestat::{Error, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "model",
    "grid.nmax",
    "spectrum.family",
    "spectrum.alpha",
    "spectrum.table",
    "law.kind",
    "law.kurtosis",
    "law.lo",
    "law.hi",
    "run.epsilon",
    "run.t",
    "run.times",
    "run.dt",
    "run.samples",
    "run.seed",
    "run.workers",
    "run.budget",
    "run.panels",
    "run.s",
    "out.dir",
    "resonances.threshold",
    "resonances.max_rows",
    "scan.times",
    "scan.datum",
    "diagnostics.draws",
    "diagnostics.tail_draws",
    "diagnostics.s",
    "verify.inject",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: DispersionModel,
    pub nmax: i32,
    pub family: SpectrumFamily,
    pub alpha: Option<f64>,
    pub table: Vec<(ModeIndex, f64)>,
    pub law: NoiseLaw,
    pub epsilon: f64,
    pub t: f64,
    pub times: Vec<f64>,
    pub dt: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
    /// Upper bound on `samples * steps * grid points` for a covariance run.
    pub budget: f64,
    pub panels: Option<usize>,
    /// Regularity for decay envelopes; defaults to the profile's own.
    pub s: Option<f64>,
    pub out_dir: PathBuf,
    pub resonance_threshold: f64,
    pub max_rows: usize,
    pub scan_times: Vec<f64>,
    pub scan_datum: ScanDatum,
    pub draws: usize,
    pub tail_draws: usize,
    pub diagnostics_s: f64,
    pub inject: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanDatum {
    /// Sample 0 of the configured ensemble.
    Sample,
    /// Two modes spanning the KP-I triad `(1,14) + (7,1) = (8,15)`.
    NearResonant,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: DispersionModel::Bbm,
            nmax: 16,
            family: SpectrumFamily::Sobolev,
            alpha: Some(3.0),
            table: Vec::new(),
            law: NoiseLaw::ComplexGaussian,
            epsilon: 0.05,
            t: 1.0,
            times: Vec::new(),
            dt: None,
            samples: 256,
            seed: 1,
            workers: 0,
            budget: 1e13,
            panels: None,
            s: None,
            out_dir: PathBuf::from("out"),
            resonance_threshold: 0.05,
            max_rows: 100_000,
            scan_times: (0..=14).map(|i| 0.5 + 0.25 * i as f64).collect(),
            scan_datum: ScanDatum::Sample,
            draws: 1_000_000,
            tail_draws: 20_000,
            diagnostics_s: 1.0,
            inject: None,
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) if prefix != "spectrum.table" => {
            for (k, x) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

/// Dotted key map assembled from an optional file and overrides.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    pub entries: BTreeMap<String, Value>,
}

impl RawConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        if !v.is_object() {
            return Err(Error::Config("config must be a JSON object".into()));
        }
        let mut entries = BTreeMap::new();
        flatten("", &v, &mut entries);
        Ok(RawConfig { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        self.entries.insert(k.trim().to_string(), value);
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.entries.clone().into_iter().collect::<Map<_, _>>())
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| bad(key, v)),
        Value::String(s) => s.parse().map_err(|_| bad(key, v)),
        _ => Err(bad(key, v)),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Number(n) => n.as_u64().ok_or_else(|| bad(key, v)),
        Value::String(s) => s.parse().map_err(|_| bad(key, v)),
        _ => Err(bad(key, v)),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad(key, v))
}

fn as_f64_list(key: &str, v: &Value) -> Result<Vec<f64>> {
    match v {
        Value::Array(xs) => xs.iter().map(|x| as_f64(key, x)).collect(),
        Value::String(s) => s
            .split(',')
            .map(|x| x.trim().parse().map_err(|_| bad(key, v)))
            .collect(),
        other => Ok(vec![as_f64(key, other)?]),
    }
}

fn bad(key: &str, v: &Value) -> Error {
    Error::Config(format!("bad value for `{key}`: {v}"))
}

fn parse_mode(key: &str, s: &str) -> Result<ModeIndex> {
    let comps: Vec<i32> = s
        .split(';')
        .map(|c| {
            c.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad mode `{s}` in `{key}`")))
        })
        .collect::<Result<_>>()?;
    if comps.is_empty() || comps.len() > 2 {
        return Err(Error::Config(format!("bad mode `{s}` in `{key}`")));
    }
    Ok(ModeIndex::from_components(&comps))
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut law_kind: Option<String> = None;
        let mut kurtosis: Option<f64> = None;
        let (mut lo, mut hi) = (None, None);
        for (k, v) in &raw.entries {
            match k.as_str() {
                "model" => c.model = as_str(k, v)?.parse()?,
                "grid.nmax" => c.nmax = as_u64(k, v)? as i32,
                "spectrum.family" => c.family = as_str(k, v)?.parse()?,
                "spectrum.alpha" => c.alpha = Some(as_f64(k, v)?),
                "spectrum.table" => {
                    let m = v.as_object().ok_or_else(|| bad(k, v))?;
                    c.table = m
                        .iter()
                        .map(|(mode, a)| Ok((parse_mode(k, mode)?, as_f64(k, a)?)))
                        .collect::<Result<_>>()?;
                }
                "law.kind" => law_kind = Some(as_str(k, v)?.to_string()),
                "law.kurtosis" => kurtosis = Some(as_f64(k, v)?),
                "law.lo" => lo = Some(as_f64(k, v)?),
                "law.hi" => hi = Some(as_f64(k, v)?),
                "run.epsilon" => c.epsilon = as_f64(k, v)?,
                "run.t" => c.t = as_f64(k, v)?,
                "run.times" => c.times = as_f64_list(k, v)?,
                "run.dt" => c.dt = Some(as_f64(k, v)?),
                "run.samples" => c.samples = as_u64(k, v)? as usize,
                "run.seed" => c.seed = as_u64(k, v)?,
                "run.workers" => c.workers = as_u64(k, v)? as usize,
                "run.budget" => c.budget = as_f64(k, v)?,
                "run.panels" => c.panels = Some(as_u64(k, v)? as usize),
                "run.s" => c.s = Some(as_f64(k, v)?),
                "out.dir" => c.out_dir = PathBuf::from(as_str(k, v)?),
                "resonances.threshold" => c.resonance_threshold = as_f64(k, v)?,
                "resonances.max_rows" => c.max_rows = as_u64(k, v)? as usize,
                "scan.times" => c.scan_times = as_f64_list(k, v)?,
                "scan.datum" => {
                    c.scan_datum = match as_str(k, v)? {
                        "sample" => ScanDatum::Sample,
                        "near-resonant" => ScanDatum::NearResonant,
                        _ => return Err(bad(k, v)),
                    }
                }
                "diagnostics.draws" => c.draws = as_u64(k, v)? as usize,
                "diagnostics.tail_draws" => c.tail_draws = as_u64(k, v)? as usize,
                "diagnostics.s" => c.diagnostics_s = as_f64(k, v)?,
                "verify.inject" => c.inject = Some(as_str(k, v)?.to_string()),
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        c.law = match law_kind.as_deref().unwrap_or("complex-gaussian") {
            "complex-gaussian" | "gaussian" => {
                if kurtosis.is_some_and(|k| k != 2.0) {
                    return Err(Error::Config(
                        "the complex gaussian law has kurtosis 2".into(),
                    ));
                }
                NoiseLaw::ComplexGaussian
            }
            "random-phase" => {
                let amplitude = match (lo, hi, kurtosis) {
                    (Some(lo), Some(hi), None) => Amplitude::Uniform { lo, hi },
                    (None, None, Some(k)) => Amplitude::uniform_with_kurtosis(k)?,
                    (None, None, None) => Amplitude::Constant,
                    _ => {
                        return Err(Error::Config(
                            "give either law.kurtosis or law.lo and law.hi".into(),
                        ))
                    }
                };
                NoiseLaw::RandomPhase { amplitude }
            }
            other => return Err(Error::Config(format!("unknown law `{other}`"))),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4096).contains(&self.nmax) {
            return Err(Error::Config(format!(
                "grid.nmax must be in 1..=4096, got {}",
                self.nmax
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!(
                "run.epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::Config(format!("run.t must be >= 0, got {}", self.t)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("run.dt must be positive, got {dt}")));
            }
        }
        if self
            .times
            .iter()
            .chain(&self.scan_times)
            .any(|t| !(*t >= 0.0 && t.is_finite()))
        {
            return Err(Error::Config(
                "times must be finite and non-negative".into(),
            ));
        }
        self.law.validate()
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.model.dimension(), self.nmax)
    }

    /// The configured amplitude profile, regularity-checked against the model.
    pub fn spectrum(&self) -> Result<SpectrumProfile> {
        let sp = match self.family {
            SpectrumFamily::CustomTable => {
                SpectrumProfile::from_table(self.lattice(), &self.table)?
            }
            f => build_spectrum(f, self.alpha, self.nmax, self.model.dimension())?,
        };
        sp.check_regularity(self.model)?;
        Ok(sp)
    }

    pub fn dt(&self) -> f64 {
        self.dt
            .unwrap_or_else(|| default_dt(self.model, self.lattice()))
    }

    /// Output times for `predict`: `run.times` if given, else `run.t`.
    pub fn prediction_times(&self) -> Vec<f64> {
        if self.times.is_empty() {
            vec![self.t]
        } else {
            self.times.clone()
        }
    }

    /// Regularity used for decay envelopes.
    pub fn decay_s(&self, spectrum: &SpectrumProfile) -> Option<f64> {
        self.s.or_else(|| spectrum.effective_regularity())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_and_flat_keys_agree() {
        let a = RawConfig::from_json_str(r#"{"grid.nmax": 8, "model": "kp-ii"}"#).unwrap();
        let b = RawConfig::from_json_str(r#"{"grid": {"nmax": 8}, "model": "kp-ii"}"#).unwrap();
        assert_eq!(
            RunConfig::from_raw(&a).unwrap(),
            RunConfig::from_raw(&b).unwrap()
        );
    }

    #[test]
    fn overrides_parse_json_or_string() {
        let mut r = RawConfig::default();
        r.set("run.epsilon=0.1").unwrap();
        r.set("model=kdv").unwrap();
        r.set("run.times=[0.5,1]").unwrap();
        let c = RunConfig::from_raw(&r).unwrap();
        assert_eq!(c.epsilon, 0.1);
        assert_eq!(c.model, DispersionModel::Kdv);
        assert_eq!(c.times, vec![0.5, 1.0]);
        assert!(r.set("novalue").is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut r = RawConfig::default();
        r.set("grid.nmx=3").unwrap();
        assert!(RunConfig::from_raw(&r).is_err());
        let mut r = RawConfig::default();
        r.set("run.epsilon=1.5").unwrap();
        assert!(RunConfig::from_raw(&r).is_err());
        let mut r = RawConfig::default();
        r.set("law.kind=complex-gaussian").unwrap();
        r.set("law.kurtosis=1").unwrap();
        assert!(RunConfig::from_raw(&r).is_err());
    }

    #[test]
    fn law_from_kurtosis() {
        let mut r = RawConfig::default();
        r.set("law.kind=random-phase").unwrap();
        r.set("law.kurtosis=1.5").unwrap();
        let c = RunConfig::from_raw(&r).unwrap();
        assert!((c.law.kurtosis() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn custom_table() {
        let r = RawConfig::from_json_str(
            r#"{"model": "kp-i", "grid.nmax": 16, "spectrum.family": "custom-table",
                "spectrum.table": {"1;14": 0.1, "7;1": 0.1}}"#,
        )
        .unwrap();
        let c = RunConfig::from_raw(&r).unwrap();
        let sp = c.spectrum().unwrap();
        assert_eq!(sp.lambda(ModeIndex::new_2d(7, 1)), 0.1);
        assert_eq!(sp.lambda(ModeIndex::new_2d(2, 1)), 0.0);
    }

    #[test]
    fn regularity_table() {
        let mut r = RawConfig::default();
        r.set("model=kp-i").unwrap();
        r.set("spectrum.alpha=3.5").unwrap();
        let c = RunConfig::from_raw(&r).unwrap();
        assert!(matches!(c.spectrum(), Err(Error::Regularity { .. })));
    }
}

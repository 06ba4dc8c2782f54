//! Interaction-picture time integration.
//!
//! The state is `v(t) = S(-t) u(t)`, which obeys
//! `d_t v = -eps S(-t) J((S(t) v)^2)`. The linear flow is applied exactly
//! inside the right-hand side, so the step size is limited only by the
//! accuracy of the nonlinear phases `exp(i delta t)`, never by a CFL bound.

use crate::dealias::Squarer;
use crate::error::{Error, Result};
use crate::spectral::{apply_semigroup, DispersionModel, Lattice, SpectralField};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub model: DispersionModel,
    pub epsilon: f64,
    pub dt: f64,
    pub t_final: f64,
    pub dealias: bool,
}

impl SolverConfig {
    pub fn new(model: DispersionModel, epsilon: f64, dt: f64, t_final: f64) -> Result<Self> {
        let cfg = SolverConfig {
            model,
            epsilon,
            dt,
            t_final,
            dealias: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_final_time(&self, t_final: f64) -> Self {
        SolverConfig {
            t_final,
            ..self.clone()
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        SolverConfig {
            epsilon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!(
                "final time must be non-negative, got {}",
                self.t_final
            )));
        }
        Ok(())
    }

    /// Accuracy warnings for this step on `lattice`: RK4 needs `dt max|delta| <~ 1`.
    pub fn warnings(&self, lattice: Lattice) -> Vec<String> {
        let mut out = Vec::new();
        let dmax = max_abs_delta(self.model, lattice);
        if self.dt * dmax > 1.0 {
            out.push(format!(
                "dt * max|delta| = {:.3} exceeds 1; nonlinear phases are under-resolved",
                self.dt * dmax
            ));
        }
        if self.epsilon > 0.0 && self.t_final > 1.0 / (10.0 * self.epsilon) {
            out.push(format!(
                "t = {} is beyond 1/(10 eps) = {}",
                self.t_final,
                1.0 / (10.0 * self.epsilon)
            ));
        }
        out
    }
}

/// Default step: `0.5 / nmax` for BBM, `0.5 / max|delta|` for the cubic models.
pub fn default_dt(model: DispersionModel, lattice: Lattice) -> f64 {
    match model {
        DispersionModel::Bbm => 0.5 / lattice.nmax() as f64,
        _ => 0.5 / max_abs_delta(model, lattice).max(1.0),
    }
}

/// Largest `|delta_n^{k,l}|` over all triads of the truncated lattice.
pub fn max_abs_delta(model: DispersionModel, lattice: Lattice) -> f64 {
    let mut best = 0.0f64;
    for n in lattice.stored_modes() {
        for (k, l) in lattice.triads_of(n) {
            best = best.max(model.delta_raw(n, k, l).abs());
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    pub v: SpectralField,
}

impl TrajectoryState {
    /// The physical field `u(t) = S(t) v(t)`.
    pub fn physical(&self, model: DispersionModel) -> SpectralField {
        apply_semigroup(model, &self.v, self.t)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub final_state: TrajectoryState,
    pub snapshots: Vec<TrajectoryState>,
}

/// Evaluates `-eps S(-t) J((S(t) v)^2)` with cached multipliers and FFT plans.
pub struct RhsWorkspace {
    model: DispersionModel,
    squarer: Squarer,
    omega: Vec<f64>,
    phi: Vec<f64>,
    phases: Vec<Complex64>,
    rotated: SpectralField,
    squared: SpectralField,
}

impl RhsWorkspace {
    pub fn new(model: DispersionModel, lattice: Lattice, dealias: bool) -> Self {
        assert_eq!(
            model.dimension(),
            lattice.dim(),
            "model/lattice dimension mismatch"
        );
        let squarer = if dealias {
            Squarer::new(lattice)
        } else {
            Squarer::aliased(lattice)
        };
        let omega = lattice.stored_modes().map(|n| model.omega_raw(n)).collect();
        let phi = lattice.stored_modes().map(|n| model.phi_raw(n)).collect();
        RhsWorkspace {
            model,
            squarer,
            omega,
            phi,
            phases: vec![Complex64::new(1.0, 0.0); lattice.len()],
            rotated: SpectralField::zeros(lattice),
            squared: SpectralField::zeros(lattice),
        }
    }

    pub fn model(&self) -> DispersionModel {
        self.model
    }

    pub fn eval_into(&mut self, epsilon: f64, t: f64, v: &SpectralField, out: &mut SpectralField) {
        if epsilon == 0.0 {
            out.coefficients_mut()
                .iter_mut()
                .for_each(|z| *z = Complex64::new(0.0, 0.0));
            return;
        }
        for (p, w) in self.phases.iter_mut().zip(&self.omega) {
            *p = Complex64::from_polar(1.0, w * t);
        }
        for ((r, z), p) in self
            .rotated
            .coefficients_mut()
            .iter_mut()
            .zip(v.coefficients())
            .zip(&self.phases)
        {
            *r = z * p;
        }
        self.squarer.square_into(&self.rotated, &mut self.squared);
        for (((o, s), p), f) in out
            .coefficients_mut()
            .iter_mut()
            .zip(self.squared.coefficients())
            .zip(&self.phases)
            .zip(&self.phi)
        {
            // -eps * i phi * conj(phase) * s
            *o = Complex64::new(0.0, -epsilon * f) * p.conj() * s;
        }
    }

    pub fn eval(&mut self, epsilon: f64, t: f64, v: &SpectralField) -> SpectralField {
        let mut out = SpectralField::zeros(v.lattice());
        self.eval_into(epsilon, t, v, &mut out);
        out
    }
}

/// `d_t v = -eps S(-t) J((S(t) v)^2)` evaluated once.
pub fn nonlinear_rhs(
    model: DispersionModel,
    epsilon: f64,
    t: f64,
    v: &SpectralField,
) -> SpectralField {
    RhsWorkspace::new(model, v.lattice(), true).eval(epsilon, t, v)
}

/// Classical RK4 stepping of the interaction-picture state.
pub struct Rk4 {
    rhs: RhsWorkspace,
    epsilon: f64,
    k: [SpectralField; 4],
    stage: SpectralField,
}

impl Rk4 {
    pub fn new(model: DispersionModel, lattice: Lattice, epsilon: f64, dealias: bool) -> Self {
        let z = SpectralField::zeros(lattice);
        Rk4 {
            rhs: RhsWorkspace::new(model, lattice, dealias),
            epsilon,
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            stage: z,
        }
    }

    pub fn step(&mut self, t: f64, v: &mut SpectralField, h: f64) {
        let eps = self.epsilon;
        let [k1, k2, k3, k4] = &mut self.k;
        self.rhs.eval_into(eps, t, v, k1);
        axpy_into(&mut self.stage, v, 0.5 * h, k1);
        self.rhs.eval_into(eps, t + 0.5 * h, &self.stage, k2);
        axpy_into(&mut self.stage, v, 0.5 * h, k2);
        self.rhs.eval_into(eps, t + 0.5 * h, &self.stage, k3);
        axpy_into(&mut self.stage, v, h, k3);
        self.rhs.eval_into(eps, t + h, &self.stage, k4);
        let w = h / 6.0;
        for ((((z, a), b), c), d) in v
            .coefficients_mut()
            .iter_mut()
            .zip(k1.coefficients())
            .zip(k2.coefficients())
            .zip(k3.coefficients())
            .zip(k4.coefficients())
        {
            *z += (a + (b + c) * 2.0 + d) * w;
        }
    }

    /// Advances `v` from `t0` to `t1` in `ceil((t1 - t0) / dt)` equal steps.
    pub fn advance(&mut self, v: &mut SpectralField, t0: f64, t1: f64, dt: f64) -> Result<()> {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for i in 0..steps {
            let t = t0 + i as f64 * h;
            self.step(t, v, h);
            if !v.is_finite() {
                return Err(Error::BlowUp { time: t + h });
            }
        }
        Ok(())
    }
}

fn axpy_into(out: &mut SpectralField, x: &SpectralField, a: f64, y: &SpectralField) {
    for ((o, p), q) in out
        .coefficients_mut()
        .iter_mut()
        .zip(x.coefficients())
        .zip(y.coefficients())
    {
        *o = p + q * a;
    }
}

/// Integrates from `v(0) = u0` to `config.t_final`.
pub fn evolve(u0: &SpectralField, config: &SolverConfig) -> Result<TrajectoryState> {
    Ok(evolve_with_snapshots(u0, config, &[])?.final_state)
}

/// Integrates to `config.t_final`, also recording the state at each requested time.
///
/// Snapshot times must be non-decreasing and within `[0, t_final]`; each is
/// hit exactly by shortening the step on the preceding segment.
pub fn evolve_with_snapshots(
    u0: &SpectralField,
    config: &SolverConfig,
    times: &[f64],
) -> Result<Trajectory> {
    config.validate()?;
    if u0.dim() != config.model.dimension() {
        return Err(Error::Config(format!(
            "datum has dimension {}, {} needs {}",
            u0.dim(),
            config.model,
            config.model.dimension()
        )));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0 || t > config.t_final)
    {
        return Err(Error::Config(
            "snapshot times must be sorted and lie in [0, T]".into(),
        ));
    }
    let mut rk = Rk4::new(config.model, u0.lattice(), config.epsilon, config.dealias);
    let mut v = u0.clone();
    let mut t = 0.0;
    let mut snapshots = Vec::with_capacity(times.len());
    for &ts in times {
        rk.advance(&mut v, t, ts, config.dt)?;
        t = t.max(ts);
        snapshots.push(TrajectoryState {
            t: ts,
            v: v.clone(),
        });
    }
    rk.advance(&mut v, t, config.t_final, config.dt)?;
    Ok(Trajectory {
        final_state: TrajectoryState {
            t: config.t_final,
            v,
        },
        snapshots,
    })
}

/// `sum (1 + |n|^2) |u_n|^2` for BBM, `sum |u_n|^2` otherwise, over both half-lattices.
pub fn conserved_functional(model: DispersionModel, field: &SpectralField) -> f64 {
    2.0 * field
        .iter()
        .map(|(n, z)| match model {
            DispersionModel::Bbm => (1.0 + n.euclid_sq() as f64) * z.norm_sqr(),
            _ => z.norm_sqr(),
        })
        .sum::<f64>()
}

/// Writes a snapshot: `u32` model tag, `u32` dimension, `u32` nmax, `f64` time,
/// then `(re, im)` pairs for the stored modes in lexicographic order.
/// Everything little-endian.
pub fn write_snapshot<W: Write>(
    w: &mut W,
    model: DispersionModel,
    state: &TrajectoryState,
) -> Result<()> {
    w.write_all(&model.tag().to_le_bytes())?;
    w.write_all(&(state.v.dim() as u32).to_le_bytes())?;
    w.write_all(&(state.v.nmax() as u32).to_le_bytes())?;
    w.write_all(&state.t.to_le_bytes())?;
    for z in state.v.coefficients() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(r: &mut R) -> Result<(DispersionModel, TrajectoryState)> {
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let tag = u32::from_le_bytes(b4);
    let model = DispersionModel::from_tag(tag)
        .ok_or_else(|| Error::Config(format!("unknown model tag {tag}")))?;
    r.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let nmax = u32::from_le_bytes(b4) as i32;
    if dim != model.dimension() || nmax < 1 {
        return Err(Error::Config(format!(
            "inconsistent snapshot header: model {model}, d = {dim}, nmax = {nmax}"
        )));
    }
    r.read_exact(&mut b8)?;
    let t = f64::from_le_bytes(b8);
    let lattice = Lattice::new(dim, nmax);
    let mut coeffs = Vec::with_capacity(lattice.len());
    for _ in 0..lattice.len() {
        r.read_exact(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let im = f64::from_le_bytes(b8);
        coeffs.push(Complex64::new(re, im));
    }
    Ok((
        model,
        TrajectoryState {
            t,
            v: SpectralField::from_coefficients(lattice, coeffs),
        },
    ))
}

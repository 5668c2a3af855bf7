//! Time propagation of density matrices under a [`LindbladGenerator`].
//!
//! Two steppers are available: classical fixed-step RK4 and the
//! Dormand–Prince 5(4) embedded pair with FSAL and error-per-step control.
//! States are symmetrized after each accepted step but never renormalized,
//! so the trace drift stays visible as a diagnostic.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LindbladGenerator, Workspace, PAR_THRESHOLD};
use crate::error::{DynamicsError, SpaceError};
use crate::tensorspace::{hermiticity_deviation, DensityMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMethod {
    FixedRk4,
    AdaptiveEmbeddedRk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_method")]
    pub method: IntegratorMethod,
    /// Initial step for the adaptive stepper, fixed step for RK4.
    #[serde(default = "default_dt")]
    pub dt_initial: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    pub t_final: f64,
    pub n_samples: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
}

fn default_method() -> IntegratorMethod {
    IntegratorMethod::AdaptiveEmbeddedRk
}
fn default_dt() -> f64 {
    1e-3
}
fn default_rel_tol() -> f64 {
    1e-8
}
fn default_abs_tol() -> f64 {
    1e-10
}
fn default_max_steps() -> u64 {
    100_000_000
}

impl IntegratorConfig {
    /// Adaptive stepper with rel_tol 1e-8 and abs_tol 1e-10.
    pub fn new(t_final: f64, n_samples: usize) -> Self {
        Self {
            method: default_method(),
            dt_initial: default_dt(),
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            t_final,
            n_samples,
            max_steps: default_max_steps(),
        }
    }

    pub fn fixed_rk4(t_final: f64, n_samples: usize, dt: f64) -> Self {
        Self {
            method: IntegratorMethod::FixedRk4,
            dt_initial: dt,
            ..Self::new(t_final, n_samples)
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: &str| Err(DynamicsError::InvalidConfig(msg.to_string()));
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("t_final must be positive and finite");
        }
        if self.n_samples < 2 {
            return bad("n_samples must be at least 2");
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.dt_initial > 0.0 && self.dt_initial.is_finite()) {
            return bad("dt_initial must be positive and finite");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }

    /// Uniform sample grid on `[0, t_final]`.
    pub fn sample_times(&self) -> Vec<f64> {
        let last = (self.n_samples - 1) as f64;
        (0..self.n_samples)
            .map(|k| if k + 1 == self.n_samples { self.t_final } else { self.t_final * k as f64 / last })
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntegrationStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evaluations: u64,
    /// Largest `|ρ - ρ^†|` removed by post-step symmetrization.
    pub max_hermiticity_drift: f64,
    /// Largest `|Tr ρ - 1|` over the sampled states.
    pub max_trace_drift: f64,
}

/// Sampled output of an integration: states, or observer records when the
/// states themselves are not retained.
#[derive(Clone, Debug)]
pub struct Trajectory<S = DensityMatrix> {
    pub times: Vec<f64>,
    pub samples: Vec<S>,
    pub stats: IntegrationStats,
}

/// Propagates `rho0` and keeps every sampled state.
pub fn evolve(gen: &LindbladGenerator, rho0: &DensityMatrix, cfg: &IntegratorConfig) -> Result<Trajectory, DynamicsError> {
    evolve_observed(gen, rho0, cfg, |_, rho| Ok::<_, DynamicsError>(rho.clone()))
}

/// Propagates `rho0`, handing each sampled state to `observer` instead of
/// storing it.
pub fn evolve_observed<R, E, F>(
    gen: &LindbladGenerator,
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
    mut observer: F,
) -> Result<Trajectory<R>, E>
where
    F: FnMut(f64, &DensityMatrix) -> Result<R, E>,
    E: From<DynamicsError>,
{
    cfg.validate()?;
    if rho0.space() != gen.space() {
        return Err(DynamicsError::from(SpaceError::SpaceMismatch).into());
    }

    let n = gen.dim();
    let mut entries = rho0.entries().clone();
    symmetrize(&mut entries);
    let mut state = DensityMatrix::new_unchecked(gen.space().clone(), entries);

    let times = cfg.sample_times();
    let mut samples = Vec::with_capacity(times.len());
    let mut stepper = Stepper::new(gen, cfg, n);

    stepper.stats.max_trace_drift = trace_drift(&state);
    samples.push(observer(0.0, &state)?);
    let mut t = 0.0;
    for &target in &times[1..] {
        match cfg.method {
            IntegratorMethod::FixedRk4 => stepper.rk4_until(&mut state, &mut t, target)?,
            IntegratorMethod::AdaptiveEmbeddedRk => stepper.dopri_until(&mut state, &mut t, target)?,
        }
        let drift = trace_drift(&state);
        stepper.stats.max_trace_drift = stepper.stats.max_trace_drift.max(drift);
        log::trace!("t = {target}: trace drift {drift:e}");
        samples.push(observer(target, &state)?);
    }
    log::debug!(
        "integration done: {} accepted / {} rejected steps, {} rhs evaluations, trace drift {:e}, hermiticity drift {:e}",
        stepper.stats.accepted_steps,
        stepper.stats.rejected_steps,
        stepper.stats.rhs_evaluations,
        stepper.stats.max_trace_drift,
        stepper.stats.max_hermiticity_drift
    );
    Ok(Trajectory {
        times,
        samples,
        stats: stepper.stats,
    })
}

fn trace_drift(rho: &DensityMatrix) -> f64 {
    (rho.trace() - Complex64::new(1.0, 0.0)).norm()
}

/// `ρ <- (ρ + ρ^†)/2`, returning the removed deviation.
fn symmetrize(m: &mut DMatrix<Complex64>) -> f64 {
    let dev = hermiticity_deviation(m);
    if dev > 0.0 {
        let n = m.nrows();
        for j in 0..n {
            for i in j..n {
                let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                m[(i, j)] = avg;
                m[(j, i)] = avg.conj();
            }
        }
    }
    dev
}

// Dormand–Prince 5(4) tableau.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const A7: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
/// 5th-order weights minus the embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

struct Stepper<'a> {
    gen: &'a LindbladGenerator,
    cfg: &'a IntegratorConfig,
    ws: Workspace,
    k: Vec<DMatrix<Complex64>>,
    stage: DMatrix<Complex64>,
    next: DMatrix<Complex64>,
    /// Whether `k[0]` holds the derivative at the current state.
    fsal_valid: bool,
    h: f64,
    steps: u64,
    stats: IntegrationStats,
}

impl<'a> Stepper<'a> {
    fn new(gen: &'a LindbladGenerator, cfg: &'a IntegratorConfig, n: usize) -> Self {
        let stages = match cfg.method {
            IntegratorMethod::FixedRk4 => 4,
            IntegratorMethod::AdaptiveEmbeddedRk => 7,
        };
        Self {
            gen,
            cfg,
            ws: Workspace::new(n),
            k: (0..stages).map(|_| DMatrix::zeros(n, n)).collect(),
            stage: DMatrix::zeros(n, n),
            next: DMatrix::zeros(n, n),
            fsal_valid: false,
            h: cfg.dt_initial.min(cfg.t_final),
            steps: 0,
            stats: IntegrationStats::default(),
        }
    }

    /// `k[dst] = L(stage)`
    fn rhs(&mut self, dst: usize) {
        self.stats.rhs_evaluations += 1;
        self.gen.apply_hermitian_into(&self.stage, &mut self.k[dst], &mut self.ws);
    }

    fn count_step(&mut self, t: f64) -> Result<(), DynamicsError> {
        self.steps += 1;
        if self.steps > self.cfg.max_steps {
            return Err(DynamicsError::IntegrationFailure {
                t,
                reason: format!("exceeded max_steps = {}", self.cfg.max_steps),
            });
        }
        Ok(())
    }

    fn rk4_until(&mut self, state: &mut DensityMatrix, t: &mut f64, target: f64) -> Result<(), DynamicsError> {
        let span = target - *t;
        if span <= 0.0 {
            return Ok(());
        }
        let n_steps = ((span / self.cfg.dt_initial) - 1e-9).ceil().max(1.0) as u64;
        let h = span / n_steps as f64;
        let t0 = *t;
        for s in 0..n_steps {
            self.count_step(*t)?;
            let y = state_entries(state);
            self.stage.copy_from(y);
            self.rhs(0);
            lincomb(&mut self.stage, y, h, &[(0.5, &self.k[0])]);
            self.rhs(1);
            lincomb(&mut self.stage, y, h, &[(0.5, &self.k[1])]);
            self.rhs(2);
            lincomb(&mut self.stage, y, h, &[(1.0, &self.k[2])]);
            self.rhs(3);
            let (k0, k1, k2, k3) = (&self.k[0], &self.k[1], &self.k[2], &self.k[3]);
            lincomb(&mut self.next, y, h, &[(1.0 / 6.0, k0), (1.0 / 3.0, k1), (1.0 / 3.0, k2), (1.0 / 6.0, k3)]);
            self.accept(state)?;
            *t = if s + 1 == n_steps { target } else { t0 + h * (s + 1) as f64 };
        }
        Ok(())
    }

    fn dopri_until(&mut self, state: &mut DensityMatrix, t: &mut f64, target: f64) -> Result<(), DynamicsError> {
        let tiny = 1e-13 * self.cfg.t_final;
        while target - *t > tiny {
            self.count_step(*t)?;
            let remaining = target - *t;
            let clipped = self.h >= remaining;
            let h = if clipped { remaining } else { self.h };
            let h_min = 16.0 * f64::EPSILON * t.abs().max(self.cfg.t_final);
            if h < h_min && !clipped {
                return Err(DynamicsError::StepUnderflow { t: *t, h });
            }

            let y = state_entries(state);
            if !self.fsal_valid {
                self.stage.copy_from(y);
                self.rhs(0);
                self.fsal_valid = true;
            }
            let tables: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
            for (s, row) in tables.iter().enumerate() {
                let terms: Vec<(f64, &DMatrix<Complex64>)> = row.iter().copied().zip(self.k.iter()).collect();
                lincomb(&mut self.stage, y, h, &terms);
                self.rhs(s + 1);
            }
            {
                let terms: Vec<(f64, &DMatrix<Complex64>)> = A7.iter().copied().zip(self.k.iter()).collect();
                lincomb(&mut self.next, y, h, &terms);
            }
            let drift = symmetrize(&mut self.next);
            self.stage.copy_from(&self.next);
            self.rhs(6);

            let err = error_norm(y, &self.next, &self.k, h, self.cfg.rel_tol, self.cfg.abs_tol);
            if err.is_finite() && err <= 1.0 {
                self.stats.max_hermiticity_drift = self.stats.max_hermiticity_drift.max(drift);
                self.stats.accepted_steps += 1;
                std::mem::swap(state_entries_mut(state), &mut self.next);
                self.k.swap(0, 6);
                *t = if clipped { target } else { *t + h };
                let fac = if err == 0.0 { FAC_MAX } else { (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX) };
                let proposed = h * fac;
                // a step shortened to land on a sample time says nothing about the natural step
                self.h = if clipped { proposed.max(self.h) } else { proposed };
            } else {
                self.stats.rejected_steps += 1;
                let fac = if err.is_finite() { (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0) } else { FAC_MIN };
                self.h = h * fac;
                if self.h < h_min {
                    return Err(DynamicsError::StepUnderflow { t: *t, h: self.h });
                }
            }
        }
        Ok(())
    }

    fn accept(&mut self, state: &mut DensityMatrix) -> Result<(), DynamicsError> {
        let drift = symmetrize(&mut self.next);
        self.stats.max_hermiticity_drift = self.stats.max_hermiticity_drift.max(drift);
        if self.next.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(DynamicsError::IntegrationFailure {
                t: f64::NAN,
                reason: "non-finite state".into(),
            });
        }
        self.stats.accepted_steps += 1;
        std::mem::swap(state_entries_mut(state), &mut self.next);
        Ok(())
    }
}

fn state_entries(state: &DensityMatrix) -> &DMatrix<Complex64> {
    state.entries()
}

fn state_entries_mut(state: &mut DensityMatrix) -> &mut DMatrix<Complex64> {
    state.entries_mut()
}

/// `out = y + h Σ c_i k_i`
fn lincomb(out: &mut DMatrix<Complex64>, y: &DMatrix<Complex64>, h: f64, terms: &[(f64, &DMatrix<Complex64>)]) {
    let len = y.len();
    let ys = y.as_slice();
    let ks: Vec<(f64, &[Complex64])> = terms
        .iter()
        .filter(|(c, _)| *c != 0.0)
        .map(|(c, k)| (h * c, k.as_slice()))
        .collect();
    let job = |(chunk_idx, chunk): (usize, &mut [Complex64])| {
        let off = chunk_idx * CHUNK;
        for (e, o) in chunk.iter_mut().enumerate() {
            let idx = off + e;
            let mut acc = ys[idx];
            for (c, k) in &ks {
                acc += k[idx] * *c;
            }
            *o = acc;
        }
    };
    let os = out.as_mut_slice();
    if len >= PAR_THRESHOLD {
        os.par_chunks_mut(CHUNK).enumerate().for_each(job);
    } else {
        os.chunks_mut(CHUNK).enumerate().for_each(job);
    }
}

const CHUNK: usize = 4096;

/// Max-norm of the scaled local error estimate.
///
/// The max norm is used rather than RMS: most entries of a density matrix
/// sit near zero, and averaging over them would hide the error in the few
/// populated ones.
fn error_norm(y: &DMatrix<Complex64>, y_new: &DMatrix<Complex64>, k: &[DMatrix<Complex64>], h: f64, rtol: f64, atol: f64) -> f64 {
    let len = y.len();
    let ys = y.as_slice();
    let yn = y_new.as_slice();
    let ks: Vec<(f64, &[Complex64])> = E
        .iter()
        .zip(k)
        .filter(|(e, _)| **e != 0.0)
        .map(|(e, m)| (h * e, m.as_slice()))
        .collect();
    let chunk_max = |range: std::ops::Range<usize>| -> f64 {
        let mut worst: f64 = 0.0;
        for idx in range {
            let mut err = Complex64::new(0.0, 0.0);
            for (c, m) in &ks {
                err += m[idx] * *c;
            }
            let scale = atol + rtol * ys[idx].norm().max(yn[idx].norm());
            let r = err.norm() / scale;
            if r.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(r);
        }
        worst
    };
    let n_chunks = len.div_ceil(CHUNK);
    let chunk = |c: usize| chunk_max(c * CHUNK..((c + 1) * CHUNK).min(len));
    let parts: Vec<f64> = if len >= PAR_THRESHOLD {
        (0..n_chunks).into_par_iter().map(chunk).collect()
    } else {
        (0..n_chunks).map(chunk).collect()
    };
    parts.into_iter().fold(0.0, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) })
}

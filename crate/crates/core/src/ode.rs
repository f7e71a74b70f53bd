//! Fixed-step classical Runge–Kutta integration of time-varying vector fields.

use crate::linalg::VecN;
use thiserror::Error;

/// States whose Euclidean norm exceeds this are treated as divergent.
pub const DIVERGENCE_BOUND: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size must be positive and finite (got {h})")]
    InvalidStep { h: f64 },
    #[error("interval [{t0}, {tf}] is not a whole number of steps of {h}")]
    StepMismatch { t0: f64, tf: f64, h: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("state norm {norm:e} exceeded the divergence bound at t = {t}")]
    Diverged { t: f64, norm: f64 },
    #[error("right-hand side returned dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A time-varying vector field `ẋ = f(t, x)` on ℝⁿ.
pub trait FlowField {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, x: &VecN) -> VecN;
}

impl<F: FlowField + ?Sized> FlowField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn rhs(&self, t: f64, x: &VecN) -> VecN {
        (**self).rhs(t, x)
    }
}

/// Closure-backed [`FlowField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(f64, &VecN) -> VecN,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> FlowField for FnField<F>
where
    F: Fn(f64, &VecN) -> VecN,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, x: &VecN) -> VecN {
        (self.f)(t, x)
    }
}

/// Sample spacing plus the number of RK4 substeps taken between samples.
///
/// The recorded grid always has spacing `h`; the integrator advances with
/// `h / substeps`. Stiff transients (e.g. a Riccati flow started far above its
/// equilibrium) need substeps to stay inside the RK4 stability region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize {
    pub h: f64,
    pub substeps: usize,
}

impl StepSize {
    pub fn uniform(h: f64) -> Self {
        Self { h, substeps: 1 }
    }

    pub fn with_substeps(h: f64, substeps: usize) -> Self {
        Self {
            h,
            substeps: substeps.max(1),
        }
    }

    pub fn inner(&self) -> f64 {
        self.h / self.substeps as f64
    }

    /// Number of sample intervals covering `[t0, tf]`.
    pub fn intervals(&self, t0: f64, tf: f64) -> Result<usize, OdeError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(OdeError::InvalidStep { h: self.h });
        }
        let span = tf - t0;
        if !(span > 0.0) {
            return Err(OdeError::StepMismatch { t0, tf, h: self.h });
        }
        let n = (span / self.h).round();
        if (n * self.h - span).abs() > 1e-9 * span.abs().max(1.0) || n < 1.0 {
            return Err(OdeError::StepMismatch { t0, tf, h: self.h });
        }
        Ok(n as usize)
    }
}

/// Sampled solution on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    times: Vec<f64>,
    states: Vec<VecN>,
}

impl Trace {
    pub fn from_parts(times: Vec<f64>, states: Vec<VecN>) -> Self {
        assert_eq!(times.len(), states.len(), "trace length mismatch");
        Self { times, states }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[VecN] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &VecN)> {
        self.times.last().copied().zip(self.states.last())
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &VecN)> {
        self.times.iter().copied().zip(self.states.iter())
    }
}

fn check_state(t: f64, x: &VecN) -> Result<(), OdeError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFiniteState { t });
    }
    let norm = x.norm();
    if norm > DIVERGENCE_BOUND {
        return Err(OdeError::Diverged { t, norm });
    }
    Ok(())
}

fn eval<F: FlowField + ?Sized>(f: &F, t: f64, x: &VecN) -> Result<VecN, OdeError> {
    let k = f.rhs(t, x);
    if k.len() != f.dim() {
        return Err(OdeError::DimensionMismatch {
            expected: f.dim(),
            got: k.len(),
        });
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFiniteState { t });
    }
    Ok(k)
}

/// One classical RK4 step of size `h` from `(t, x)`.
pub fn rk4_step<F: FlowField + ?Sized>(
    f: &F,
    t: f64,
    x: &VecN,
    h: f64,
) -> Result<VecN, OdeError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(OdeError::InvalidStep { h });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFiniteState { t });
    }
    let half = 0.5 * h;
    let k1 = eval(f, t, x)?;
    let k2 = eval(f, t + half, &(x + &k1 * half))?;
    let k3 = eval(f, t + half, &(x + &k2 * half))?;
    let k4 = eval(f, t + h, &(x + &k3 * h))?;
    Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
}

/// Integrate over `[t0, tf]` with step `h`, sampling every step.
pub fn integrate<F: FlowField + ?Sized>(
    f: &F,
    t0: f64,
    x0: &VecN,
    tf: f64,
    h: f64,
) -> Result<Trace, OdeError> {
    integrate_with(f, t0, x0, tf, StepSize::uniform(h))
}

/// Integrate over `[t0, tf]`, sampling every `step.h` with `step.substeps`
/// RK4 steps per sample interval.
pub fn integrate_with<F: FlowField + ?Sized>(
    f: &F,
    t0: f64,
    x0: &VecN,
    tf: f64,
    step: StepSize,
) -> Result<Trace, OdeError> {
    let n = step.intervals(t0, tf)?;
    check_state(t0, x0)?;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(t0);
    states.push(x0.clone());
    let inner = step.inner();
    let mut x = x0.clone();
    for i in 0..n {
        let base = t0 + i as f64 * step.h;
        for j in 0..step.substeps {
            let t = base + j as f64 * inner;
            x = rk4_step(f, t, &x, inner)?;
            check_state(t + inner, &x)?;
        }
        times.push(t0 + (i + 1) as f64 * step.h);
        states.push(x.clone());
    }
    Ok(Trace { times, states })
}

/// Integrate the final state only, without storing the trajectory.
pub fn flow_to<F: FlowField + ?Sized>(
    f: &F,
    t0: f64,
    x0: &VecN,
    tf: f64,
    step: StepSize,
) -> Result<VecN, OdeError> {
    let n = step.intervals(t0, tf)?;
    check_state(t0, x0)?;
    let inner = step.inner();
    let mut x = x0.clone();
    for i in 0..n * step.substeps {
        let t = t0 + i as f64 * inner;
        x = rk4_step(f, t, &x, inner)?;
        check_state(t + inner, &x)?;
    }
    Ok(x)
}

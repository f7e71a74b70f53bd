//! Linear time-varying systems: transition matrices, Gramians, uniform
//! complete controllability/observability certificates, the observer Riccati
//! flow, and composite controller–observer analysis.

use crate::linalg::{self, sym_eig_bounds, LinalgError, MatN, VecN};
use crate::ode::{OdeError, StepSize, Trace};
use nalgebra::{Cholesky, SymmetricEigen};
use thiserror::Error;

/// Conditioning bound on the measurement weight of the Riccati flow.
pub const MAX_WEIGHT_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LtvError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{what}: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("weight matrix is singular or ill-conditioned (condition {condition:e})")]
    SingularWeight { condition: f64 },
    #[error("Riccati solution lost positive definiteness at t = {t} (lambda_min = {lambda_min:e})")]
    LostPositivity { t: f64, lambda_min: f64 },
    #[error("transition matrix is singular")]
    SingularTransition,
    #[error("trace has {0} samples, at least 10 are required")]
    TooFewSamples(usize),
    #[error("all norms in the fit window underflowed 1e-15")]
    DegenerateTrace,
    #[error("invalid window: {0}")]
    InvalidWindow(String),
}

type MatFn = Box<dyn Fn(f64) -> MatN + Send + Sync>;

/// `ẋ = A(t)x + B(t)u, y = C(t)x`.
pub struct LtvModel {
    n: usize,
    k: usize,
    p: usize,
    a: MatFn,
    b: MatFn,
    c: MatFn,
    bounded_a: Option<f64>,
    period: Option<f64>,
}

impl std::fmt::Debug for LtvModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LtvModel")
            .field("n", &self.n)
            .field("k", &self.k)
            .field("p", &self.p)
            .field("bounded_a", &self.bounded_a)
            .field("period", &self.period)
            .finish_non_exhaustive()
    }
}

impl LtvModel {
    pub fn new(
        n: usize,
        k: usize,
        p: usize,
        a: impl Fn(f64) -> MatN + Send + Sync + 'static,
        b: impl Fn(f64) -> MatN + Send + Sync + 'static,
        c: impl Fn(f64) -> MatN + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            k,
            p,
            a: Box::new(a),
            b: Box::new(b),
            c: Box::new(c),
            bounded_a: None,
            period: None,
        }
    }

    /// Constant-coefficient model.
    pub fn lti(a: MatN, b: MatN, c: MatN) -> Self {
        let (n, k, p) = (a.nrows(), b.ncols(), c.nrows());
        let bound = linalg::frob_norm(&a);
        Self::new(
            n,
            k,
            p,
            move |_| a.clone(),
            move |_| b.clone(),
            move |_| c.clone(),
        )
        .with_bound(bound)
    }

    /// Record `sup_t ‖A(t)‖`.
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bounded_a = Some(bound);
        self
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = Some(period);
        self
    }

    /// Same `A`, `C` with the input matrix replaced, e.g. by the factor `D(t)` of
    /// a process-noise weight `Q = D Q̃ Dᵀ`.
    pub fn with_input(self, k: usize, b: impl Fn(f64) -> MatN + Send + Sync + 'static) -> Self {
        Self {
            k,
            b: Box::new(b),
            ..self
        }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }
    pub fn control_dim(&self) -> usize {
        self.k
    }
    pub fn output_dim(&self) -> usize {
        self.p
    }
    pub fn bounded_a(&self) -> Option<f64> {
        self.bounded_a
    }
    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn a(&self, t: f64) -> MatN {
        (self.a)(t)
    }
    pub fn b(&self, t: f64) -> MatN {
        (self.b)(t)
    }
    pub fn c(&self, t: f64) -> MatN {
        (self.c)(t)
    }

    /// Check dimensions and finiteness of `A`, `B`, `C` at `t`.
    pub fn validate_at(&self, t: f64) -> Result<(), LtvError> {
        let checks = [
            ("A(t)", self.a(t), (self.n, self.n)),
            ("B(t)", self.b(t), (self.n, self.k)),
            ("C(t)", self.c(t), (self.p, self.n)),
        ];
        for (what, m, expected) in checks {
            if m.shape() != expected {
                return Err(LtvError::DimensionMismatch {
                    what,
                    expected,
                    got: m.shape(),
                });
            }
            if !linalg::all_finite(&m) {
                return Err(OdeError::NonFiniteState { t }.into());
            }
        }
        Ok(())
    }
}

/// Number of steps of size ≈ `h` covering `span`, rounded up to `multiple`.
fn step_count(span: f64, h: f64, multiple: usize) -> Result<usize, LtvError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(OdeError::InvalidStep { h }.into());
    }
    let raw = (span.abs() / h - 1e-9).ceil().max(1.0) as usize;
    Ok(raw.div_ceil(multiple) * multiple)
}

/// RK4 step of `Ẋ = A(s) X` (left) or `Ẋ = −X A(s)` (right) with signed step `dt`.
fn propagate_step(m: &LtvModel, s: f64, x: &MatN, dt: f64, left: bool) -> MatN {
    let f = |s: f64, x: &MatN| -> MatN {
        if left {
            m.a(s) * x
        } else {
            -(x * m.a(s))
        }
    };
    let half = 0.5 * dt;
    let k1 = f(s, x);
    let k2 = f(s + half, &(x + &k1 * half));
    let k3 = f(s + half, &(x + &k2 * half));
    let k4 = f(s + dt, &(x + &k3 * dt));
    x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
}

fn ensure_finite(t: f64, x: &MatN) -> Result<(), LtvError> {
    if !linalg::all_finite(x) {
        return Err(OdeError::NonFiniteState { t }.into());
    }
    Ok(())
}

/// `Φ(t, τ)`: `∂Φ/∂t = A(t)Φ`, `Φ(τ, τ) = I`. Works for `t < τ` as well.
pub fn transition_matrix(m: &LtvModel, t: f64, tau: f64, h: f64) -> Result<MatN, LtvError> {
    let n = m.state_dim();
    let span = t - tau;
    if span == 0.0 {
        if !(h > 0.0 && h.is_finite()) {
            return Err(OdeError::InvalidStep { h }.into());
        }
        return Ok(MatN::identity(n, n));
    }
    let steps = step_count(span, h, 1)?;
    let dt = span / steps as f64;
    let mut phi = MatN::identity(n, n);
    for i in 0..steps {
        let s = tau + i as f64 * dt;
        phi = propagate_step(m, s, &phi, dt, true);
        ensure_finite(s + dt, &phi)?;
    }
    Ok(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramianKind {
    Controllability,
    Observability,
}

impl std::fmt::Display for GramianKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GramianKind::Controllability => "controllability",
            GramianKind::Observability => "observability",
        })
    }
}

struct GramianWindow {
    gramian: MatN,
    /// Φ(t̄, t) for the window `[t, t̄]`.
    forward: MatN,
}

/// Composite Simpson quadrature of the Gramian integrand over `[t, t̄]`, with
/// the transition matrices propagated by RK4 on the same grid.
fn gramian_window(
    m: &LtvModel,
    kind: GramianKind,
    t: f64,
    t_bar: f64,
    h: f64,
) -> Result<GramianWindow, LtvError> {
    if !(t_bar > t) {
        return Err(LtvError::InvalidWindow(format!(
            "t_bar ({t_bar}) must exceed t ({t})"
        )));
    }
    let n = m.state_dim();
    let steps = step_count(t_bar - t, h, 2)?;
    let dt = (t_bar - t) / steps as f64;
    // Controllability propagates Ψ(τ) = Φ(t, τ), dΨ/dτ = −Ψ A(τ);
    // observability propagates Φ(τ, t), dΦ/dτ = A(τ) Φ.
    let left = kind == GramianKind::Observability;
    let integrand = |tau: f64, phi: &MatN| -> MatN {
        match kind {
            GramianKind::Controllability => {
                let g = phi * m.b(tau);
                &g * g.transpose()
            }
            GramianKind::Observability => {
                let g = m.c(tau) * phi;
                g.transpose() * &g
            }
        }
    };
    let mut phi = MatN::identity(n, n);
    let mut acc = integrand(t, &phi);
    for i in 0..steps {
        let s = t + i as f64 * dt;
        phi = propagate_step(m, s, &phi, dt, left);
        ensure_finite(s + dt, &phi)?;
        let w = if i + 1 == steps {
            1.0
        } else if (i + 1) % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += integrand(s + dt, &phi) * w;
    }
    let gramian = acc * (dt / 3.0);
    let forward = match kind {
        GramianKind::Observability => phi,
        GramianKind::Controllability => phi.try_inverse().ok_or(LtvError::SingularTransition)?,
    };
    Ok(GramianWindow { gramian, forward })
}

/// `W(t, t̄) = ∫ Φ(t,τ) B(τ) Bᵀ(τ) Φᵀ(t,τ) dτ`.
pub fn controllability_gramian(
    m: &LtvModel,
    t: f64,
    t_bar: f64,
    h: f64,
) -> Result<MatN, LtvError> {
    Ok(gramian_window(m, GramianKind::Controllability, t, t_bar, h)?.gramian)
}

/// `V(t, t̄) = ∫ Φᵀ(τ,t) Cᵀ(τ) C(τ) Φ(τ,t) dτ`.
pub fn observability_gramian(
    m: &LtvModel,
    t: f64,
    t_bar: f64,
    h: f64,
) -> Result<MatN, LtvError> {
    Ok(gramian_window(m, GramianKind::Observability, t, t_bar, h)?.gramian)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformCertificate {
    pub kind: GramianKind,
    pub sigma: f64,
    pub grid: Vec<f64>,
    /// Smallest eigenvalue of the Gramian over the grid.
    pub alpha1: f64,
    /// Largest eigenvalue of the Gramian over the grid.
    pub alpha2: f64,
    /// Bounds of the transported Gramian; only computed when `A` carries no bound.
    pub transported: Option<(f64, f64)>,
    /// True when the model has no known period, so the grid does not cover all `t`.
    pub grid_limited: bool,
    pub passed: bool,
}

/// Evaluate the Gramian on `[t, t+σ]` for each `t` in the grid and collect the
/// two-sided spectral bounds.
///
/// With a bounded `A` only the first inequality pair needs checking; without a
/// bound the transported pair (`Φ(t+σ,t) W Φᵀ(t+σ,t)` or `Φᵀ(t,t+σ) V Φ(t,t+σ)`)
/// is bounded as well.
pub fn check_uniform_complete(
    m: &LtvModel,
    kind: GramianKind,
    sigma: f64,
    t_grid: &[f64],
    h: f64,
) -> Result<UniformCertificate, LtvError> {
    if !(sigma > 0.0) {
        return Err(LtvError::InvalidWindow(format!("sigma must be positive, got {sigma}")));
    }
    if t_grid.is_empty() {
        return Err(LtvError::InvalidWindow("empty time grid".into()));
    }
    let transport = m.bounded_a().is_none();
    let mut alpha1 = f64::INFINITY;
    let mut alpha2 = f64::NEG_INFINITY;
    let mut a3 = f64::INFINITY;
    let mut a4 = f64::NEG_INFINITY;
    for &t in t_grid {
        let win = gramian_window(m, kind, t, t + sigma, h)?;
        let (lo, hi) = sym_eig_bounds(&linalg::sym_n(&win.gramian))?;
        alpha1 = alpha1.min(lo);
        alpha2 = alpha2.max(hi);
        if transport {
            let moved = match kind {
                GramianKind::Controllability => {
                    &win.forward * &win.gramian * win.forward.transpose()
                }
                GramianKind::Observability => {
                    let back = win
                        .forward
                        .clone()
                        .try_inverse()
                        .ok_or(LtvError::SingularTransition)?;
                    back.transpose() * &win.gramian * &back
                }
            };
            let (lo, hi) = sym_eig_bounds(&linalg::sym_n(&moved))?;
            a3 = a3.min(lo);
            a4 = a4.max(hi);
        }
    }
    let floor = 1e-12 * alpha2.abs().max(1.0);
    let transported = transport.then_some((a3, a4));
    let passed = alpha1 > floor && transported.is_none_or(|(lo, _)| lo > floor);
    Ok(UniformCertificate {
        kind,
        sigma,
        grid: t_grid.to_vec(),
        alpha1,
        alpha2,
        transported,
        grid_limited: m.period().is_none(),
        passed,
    })
}

/// Inverse of a symmetric positive definite weight, rejecting ill-conditioned ones.
pub fn weight_inverse(w: &MatN) -> Result<MatN, LtvError> {
    let eig = SymmetricEigen::new(linalg::sym_n(w));
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(lo > 0.0) || hi / lo > MAX_WEIGHT_CONDITION {
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        return Err(LtvError::SingularWeight { condition });
    }
    let inv_diag = eig.eigenvalues.map(|v| 1.0 / v);
    let q = &eig.eigenvectors;
    Ok(q * MatN::from_diagonal(&inv_diag) * q.transpose())
}

/// `Ṗ = PAᵀ + AP − PCᵀR⁻¹CP + Q` given `R⁻¹` directly.
pub fn riccati_rhs_with_inverse(
    p: &MatN,
    a: &MatN,
    c: &MatN,
    r_inv: &MatN,
    q: &MatN,
) -> MatN {
    let pct = p * c.transpose();
    let ap = a * p;
    let raw = &ap + ap.transpose() - &pct * r_inv * pct.transpose() + q;
    linalg::sym_n(&raw)
}

/// Right-hand side of the observer Riccati equation, symmetrized.
pub fn riccati_rhs(
    p: &MatN,
    a: &MatN,
    c: &MatN,
    r_w: &MatN,
    q_w: &MatN,
) -> Result<MatN, LtvError> {
    let n = a.nrows();
    for (what, m, expected) in [
        ("P", p, (n, n)),
        ("Q", q_w, (n, n)),
        ("R", r_w, (c.nrows(), c.nrows())),
    ] {
        if m.shape() != expected {
            return Err(LtvError::DimensionMismatch {
                what,
                expected,
                got: m.shape(),
            });
        }
    }
    let r_inv = weight_inverse(r_w)?;
    Ok(riccati_rhs_with_inverse(p, a, c, &r_inv, q_w))
}

/// Observer gain `L = P Cᵀ R⁻¹`.
pub fn kalman_gain(p: &MatN, c: &MatN, r_inv: &MatN) -> MatN {
    p * c.transpose() * r_inv
}

/// The Riccati solution and observer gain on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSchedule {
    pub times: Vec<f64>,
    pub p: Vec<MatN>,
    pub l: Vec<MatN>,
}

impl RiccatiSchedule {
    /// Gain at `t`, linearly interpolated between grid points and clamped at the ends.
    pub fn gain_at(&self, t: f64) -> MatN {
        let (t0, tn) = (self.times[0], *self.times.last().unwrap());
        if t <= t0 {
            return self.l[0].clone();
        }
        if t >= tn {
            return self.l.last().unwrap().clone();
        }
        let h = (tn - t0) / (self.times.len() - 1) as f64;
        let i = (((t - t0) / h).floor() as usize).min(self.times.len() - 2);
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        &self.l[i] * (1.0 - w) + &self.l[i + 1] * w
    }
}

/// Positive definiteness via Cholesky; on failure report the smallest eigenvalue.
pub fn check_positive(t: f64, p: &MatN) -> Result<(), LtvError> {
    if Cholesky::new(p.clone()).is_some() {
        return Ok(());
    }
    let eig = SymmetricEigen::new(p.clone());
    let lambda_min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Err(LtvError::LostPositivity { t, lambda_min })
}

/// Integrate the Riccati flow from `P(t0) = P0`, symmetrizing after every RK4
/// step and aborting if `P` stops being positive definite.
pub fn integrate_riccati(
    m: &LtvModel,
    p0: &MatN,
    q_w: impl Fn(f64) -> MatN,
    r_w: impl Fn(f64) -> MatN,
    t0: f64,
    tf: f64,
    step: StepSize,
) -> Result<RiccatiSchedule, LtvError> {
    let n = m.state_dim();
    if p0.shape() != (n, n) {
        return Err(LtvError::DimensionMismatch {
            what: "P0",
            expected: (n, n),
            got: p0.shape(),
        });
    }
    let max_skew = linalg::max_asymmetry(p0);
    if max_skew > linalg::SYMMETRY_TOL * p0.amax().max(1.0) {
        return Err(LinalgError::NotSymmetric { max_skew }.into());
    }
    check_positive(t0, p0)?;
    let intervals = step.intervals(t0, tf)?;
    let inner = step.inner();
    let rhs = |t: f64, p: &MatN| -> Result<MatN, LtvError> {
        let r_inv = weight_inverse(&r_w(t))?;
        Ok(riccati_rhs_with_inverse(p, &m.a(t), &m.c(t), &r_inv, &q_w(t)))
    };
    let gain = |t: f64, p: &MatN| -> Result<MatN, LtvError> {
        Ok(kalman_gain(p, &m.c(t), &weight_inverse(&r_w(t))?))
    };

    let mut p = linalg::sym_n(p0);
    let mut times = Vec::with_capacity(intervals + 1);
    let mut ps = Vec::with_capacity(intervals + 1);
    let mut ls = Vec::with_capacity(intervals + 1);
    times.push(t0);
    ls.push(gain(t0, &p)?);
    ps.push(p.clone());
    for i in 0..intervals {
        let base = t0 + i as f64 * step.h;
        for j in 0..step.substeps {
            let t = base + j as f64 * inner;
            let half = 0.5 * inner;
            let k1 = rhs(t, &p)?;
            let k2 = rhs(t + half, &(&p + &k1 * half))?;
            let k3 = rhs(t + half, &(&p + &k2 * half))?;
            let k4 = rhs(t + inner, &(&p + &k3 * inner))?;
            p = linalg::sym_n(&(&p + (k1 + (k2 + k3) * 2.0 + k4) * (inner / 6.0)));
            ensure_finite(t + inner, &p)?;
            if p.amax() > crate::ode::DIVERGENCE_BOUND {
                return Err(OdeError::Diverged {
                    t: t + inner,
                    norm: linalg::frob_norm(&p),
                }
                .into());
            }
            check_positive(t + inner, &p)?;
        }
        let t = t0 + (i + 1) as f64 * step.h;
        times.push(t);
        ls.push(gain(t, &p)?);
        ps.push(p.clone());
    }
    Ok(RiccatiSchedule { times, p: ps, l: ls })
}

/// `[[A − BK, BK], [0, A − LC]]`.
pub fn composite_matrix(
    a: &MatN,
    b: &MatN,
    k: &MatN,
    l: &MatN,
    c: &MatN,
) -> Result<MatN, LtvError> {
    let n = a.nrows();
    let m = b.ncols();
    let p = c.nrows();
    for (what, mat, expected) in [
        ("A", a, (n, n)),
        ("B", b, (n, m)),
        ("K", k, (m, n)),
        ("L", l, (n, p)),
        ("C", c, (p, n)),
    ] {
        if mat.shape() != expected {
            return Err(LtvError::DimensionMismatch {
                what,
                expected,
                got: mat.shape(),
            });
        }
    }
    let bk = b * k;
    let mut out = MatN::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(&(a - &bk));
    out.view_mut((0, n), (n, n)).copy_from(&bk);
    out.view_mut((n, n), (n, n)).copy_from(&(a - l * c));
    Ok(out)
}

/// Least-squares fit of `log‖x(t)‖` against `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub r2: f64,
    /// Samples whose norm was clamped to 1e-15 before taking the log.
    pub clamped: usize,
}

const NORM_FLOOR: f64 = 1e-15;

/// Fit the exponential rate over the final half of a sampled norm series.
pub fn decay_rate_fit_series(times: &[f64], norms: &[f64]) -> Result<RateFit, LtvError> {
    if times.len() != norms.len() {
        return Err(LtvError::DimensionMismatch {
            what: "norm series",
            expected: (times.len(), 1),
            got: (norms.len(), 1),
        });
    }
    if times.len() < 10 {
        return Err(LtvError::TooFewSamples(times.len()));
    }
    let start = times.len() / 2;
    let ts = &times[start..];
    let mut clamped = 0;
    let ys: Vec<f64> = norms[start..]
        .iter()
        .map(|&v| {
            if v < NORM_FLOOR || !v.is_finite() {
                clamped += 1;
                NORM_FLOOR.ln()
            } else {
                v.ln()
            }
        })
        .collect();
    if clamped == ys.len() {
        return Err(LtvError::DegenerateTrace);
    }
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&t, &y) in ts.iter().zip(&ys) {
        sxy += (t - mt) * (y - my);
        sxx += (t - mt) * (t - mt);
        syy += (y - my) * (y - my);
    }
    let rate = sxy / sxx;
    let r2 = if syy <= f64::EPSILON * f64::EPSILON * n {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok(RateFit { rate, r2, clamped })
}

/// [`decay_rate_fit_series`] applied to `norm_fn` evaluated along a trace.
pub fn decay_rate_fit(trace: &Trace, norm_fn: impl Fn(&VecN) -> f64) -> Result<RateFit, LtvError> {
    let norms: Vec<f64> = trace.states().iter().map(norm_fn).collect();
    decay_rate_fit_series(trace.times(), &norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, FnField};
    use approx::assert_relative_eq;

    fn m1(v: f64) -> MatN {
        MatN::from_element(1, 1, v)
    }

    fn expm_series(a: &MatN, t: f64) -> MatN {
        // Scaling and squaring around a 40-term series.
        let scale = 2usize.pow(6);
        let x = a * (t / scale as f64);
        let n = a.nrows();
        let mut sum = MatN::identity(n, n);
        let mut term = MatN::identity(n, n);
        for k in 1..40 {
            term = &term * &x / k as f64;
            sum += &term;
        }
        let mut out = sum;
        for _ in 0..6 {
            out = &out * &out;
        }
        out
    }

    #[test]
    fn transition_zero_a() {
        let m = LtvModel::lti(MatN::zeros(3, 3), MatN::zeros(3, 1), MatN::zeros(1, 3));
        let phi = transition_matrix(&m, 2.0, -1.0, 1e-2).unwrap();
        assert_eq!(phi, MatN::identity(3, 3));
        assert_eq!(transition_matrix(&m, 1.0, 1.0, 1e-3).unwrap(), MatN::identity(3, 3));
    }

    #[test]
    fn transition_matches_exponential() {
        let a = MatN::from_row_slice(3, 3, &[-0.5, 1.0, 0.0, -1.0, -0.2, 0.3, 0.1, 0.0, -0.7]);
        let m = LtvModel::lti(a.clone(), MatN::zeros(3, 1), MatN::zeros(1, 3));
        for (t, tau) in [(5.0, 0.0), (1.0, 3.5), (-2.0, 2.0)] {
            let phi = transition_matrix(&m, t, tau, 1e-3).unwrap();
            let reference = expm_series(&a, t - tau);
            assert!((phi - reference).amax() < 1e-8);
        }
    }

    #[test]
    fn transition_cocycle() {
        let m = LtvModel::new(
            2,
            1,
            1,
            |t| MatN::from_row_slice(2, 2, &[0.0, 1.0, -1.0 - 0.5 * t.sin(), -0.1]),
            |_| MatN::zeros(2, 1),
            |_| MatN::zeros(1, 2),
        );
        for (t0, t1, t2) in [(0.0, 1.3, 2.9), (0.5, -0.7, 1.1), (2.0, 4.0, 3.0)] {
            let a = transition_matrix(&m, t2, t0, 1e-3).unwrap();
            let b = transition_matrix(&m, t2, t1, 1e-3).unwrap() * transition_matrix(&m, t1, t0, 1e-3).unwrap();
            assert!((a - b).amax() < 1e-7);
        }
    }

    #[test]
    fn scalar_gramians() {
        let m = LtvModel::lti(m1(0.0), m1(1.0), m1(1.0));
        let w = controllability_gramian(&m, 0.0, 2.5, 1e-3).unwrap();
        assert_relative_eq!(w[(0, 0)], 2.5, epsilon = 1e-12);
        let v = observability_gramian(&m, 1.0, 3.5, 1e-3).unwrap();
        assert_relative_eq!(v[(0, 0)], 2.5, epsilon = 1e-12);

        let zero_b = LtvModel::lti(m1(0.0), m1(0.0), m1(0.0));
        assert_eq!(controllability_gramian(&zero_b, 0.0, 1.0, 1e-2).unwrap()[(0, 0)], 0.0);
        assert_eq!(observability_gramian(&zero_b, 0.0, 1.0, 1e-2).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn double_integrator_gramian_matches_fine_quadrature() {
        let a = MatN::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = MatN::from_row_slice(2, 1, &[0.0, 1.0]);
        let m = LtvModel::lti(a, b, MatN::zeros(1, 2));
        let w = controllability_gramian(&m, 0.0, 1.0, 1e-3).unwrap();
        // Φ(0, τ) B = (−τ, 1): midpoint rule on a 1e-5 grid.
        let n = 100_000;
        let dt = 1.0 / n as f64;
        let mut oracle = [[0.0; 2]; 2];
        for i in 0..n {
            let tau = (i as f64 + 0.5) * dt;
            let g = [-tau, 1.0];
            for r in 0..2 {
                for c in 0..2 {
                    oracle[r][c] += g[r] * g[c] * dt;
                }
            }
        }
        for r in 0..2 {
            for c in 0..2 {
                assert!((w[(r, c)] - oracle[r][c]).abs() < 1e-8, "{r}{c}: {} vs {}", w[(r, c)], oracle[r][c]);
            }
        }
        assert_relative_eq!(w[(0, 0)], 1.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(w[(0, 1)], -0.5, epsilon = 1e-10);
    }

    #[test]
    fn gramian_symmetry_and_monotonicity() {
        let m = LtvModel::new(
            3,
            1,
            1,
            |t| MatN::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -t.cos(), 0.0, 1.0, 0.2, -1.0, -0.3]),
            |t| MatN::from_row_slice(3, 1, &[t.sin(), 0.0, 1.0]),
            |t| MatN::from_row_slice(1, 3, &[1.0, 0.5 * t.cos(), 0.0]),
        );
        for kind in [GramianKind::Controllability, GramianKind::Observability] {
            let g = |tb: f64| gramian_window(&m, kind, 0.3, tb, 1e-3).unwrap().gramian;
            let short = g(1.5);
            let long = g(3.0);
            assert!((&long - long.transpose()).amax() <= 1e-10 * linalg::frob_norm(&long));
            let (lo, _) = sym_eig_bounds(&linalg::sym_n(&(long - short))).unwrap();
            assert!(lo >= -1e-10);
        }
    }

    #[test]
    fn uniform_certificates_simple() {
        let m = LtvModel::lti(m1(0.0), m1(1.0), m1(1.0));
        let cert = check_uniform_complete(&m, GramianKind::Controllability, 1.0, &[0.0, 3.0, 7.0], 1e-3).unwrap();
        assert!(cert.passed);
        assert_relative_eq!(cert.alpha1, 1.0, epsilon = 1e-12);
        assert_relative_eq!(cert.alpha2, 1.0, epsilon = 1e-12);
        assert!(cert.grid_limited);
        assert!(cert.transported.is_none());

        let zero_b = LtvModel::lti(m1(0.0), m1(0.0), m1(1.0));
        let cert = check_uniform_complete(&zero_b, GramianKind::Controllability, 1.0, &[0.0], 1e-3).unwrap();
        assert_eq!(cert.alpha1, 0.0);
        assert!(!cert.passed);

        // Without a bound on A the transported pair is evaluated as well.
        let unbounded = LtvModel::new(1, 1, 1, |_| m1(-1.0), |_| m1(1.0), |_| m1(1.0));
        let cert = check_uniform_complete(&unbounded, GramianKind::Observability, 1.0, &[0.0], 1e-3).unwrap();
        let (lo, hi) = cert.transported.unwrap();
        // Φᵀ(0,1) V Φ(0,1) = e² (1 − e⁻²)/2
        let expected = (1.0_f64.exp().powi(2) - 1.0) / 2.0;
        assert_relative_eq!(lo, expected, epsilon = 1e-9);
        assert_relative_eq!(hi, expected, epsilon = 1e-9);
        assert!(cert.passed);

        assert!(check_uniform_complete(&m, GramianKind::Observability, 0.0, &[0.0], 1e-3).is_err());
        assert!(check_uniform_complete(&m, GramianKind::Observability, 1.0, &[], 1e-3).is_err());
    }

    #[test]
    fn riccati_rhs_cases() {
        let z = MatN::zeros(2, 2);
        let p = MatN::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c0 = MatN::zeros(1, 2);
        let r = MatN::identity(1, 1);
        assert_eq!(riccati_rhs(&p, &z, &c0, &r, &z).unwrap(), z);
        let q = MatN::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        let c = MatN::from_row_slice(1, 2, &[1.0, -1.0]);
        let a = MatN::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.5]);
        assert_eq!(riccati_rhs(&z, &a, &c, &r, &q).unwrap(), q);
        // ṗ = 2ap − p²c²/r + q with a=0, c=r=q=1 vanishes at p* = 1.
        let val = riccati_rhs(&m1(1.0), &m1(0.0), &m1(1.0), &m1(1.0), &m1(1.0)).unwrap();
        assert_eq!(val[(0, 0)], 0.0);
        let val = riccati_rhs(&m1(3.0), &m1(0.5), &m1(2.0), &m1(4.0), &m1(1.0)).unwrap();
        assert_relative_eq!(val[(0, 0)], 2.0 * 0.5 * 3.0 - 9.0 * 4.0 / 4.0 + 1.0, epsilon = 1e-14);
        assert!(matches!(
            riccati_rhs(&p, &a, &c, &m1(0.0), &q),
            Err(LtvError::SingularWeight { .. })
        ));
        let ill = MatN::from_diagonal(&VecN::from_vec(vec![1.0, 1e-13]));
        assert!(matches!(
            riccati_rhs(&p, &a, &MatN::identity(2, 2), &ill, &q),
            Err(LtvError::SingularWeight { .. })
        ));
    }

    #[test]
    fn scalar_riccati_converges() {
        let m = LtvModel::lti(m1(0.0), m1(0.0), m1(1.0));
        let sched = integrate_riccati(&m, &m1(100.0), |_| m1(1.0), |_| m1(1.0), 0.0, 10.0, StepSize::with_substeps(1e-3, 4)).unwrap();
        let p_end = sched.p.last().unwrap()[(0, 0)];
        assert!((p_end - 1.0).abs() < 1e-6, "{p_end}");
        assert!((sched.l.last().unwrap()[(0, 0)] - 1.0).abs() < 1e-6);
        // Closed form: p(t) = coth(t + acoth(100)).
        let s = 100.0_f64;
        let c = 0.5 * ((s + 1.0) / (s - 1.0)).ln();
        let t = 0.5;
        let idx = 500;
        assert_relative_eq!(sched.p[idx][(0, 0)], 1.0 / (t + c).tanh(), epsilon = 1e-8);
    }

    #[test]
    fn riccati_constant_when_everything_vanishes() {
        let z = MatN::zeros(2, 2);
        let m = LtvModel::lti(z.clone(), MatN::zeros(2, 1), MatN::zeros(1, 2));
        let p0 = MatN::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let sched = integrate_riccati(&m, &p0, |_| z.clone(), |_| MatN::identity(1, 1), 0.0, 1.0, StepSize::uniform(0.1)).unwrap();
        assert!(sched.p.iter().all(|p| *p == p0));
    }

    #[test]
    fn riccati_lti_reaches_algebraic_fixed_point() {
        let a = MatN::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.3]);
        let c = MatN::from_row_slice(1, 2, &[1.0, 0.0]);
        let q = MatN::identity(2, 2);
        let r = MatN::identity(1, 1);
        let m = LtvModel::lti(a.clone(), MatN::zeros(2, 1), c.clone());
        let sched = integrate_riccati(&m, &(MatN::identity(2, 2) * 5.0), |_| q.clone(), |_| r.clone(), 0.0, 30.0, StepSize::uniform(1e-3)).unwrap();
        let p = sched.p.last().unwrap();
        assert!(riccati_rhs(p, &a, &c, &r, &q).unwrap().amax() < 1e-6);
        for p in &sched.p {
            assert!(sym_eig_bounds(p).unwrap().0 > 0.0);
        }
    }

    #[test]
    fn riccati_rejects_bad_initial() {
        let m = LtvModel::lti(m1(0.0), m1(0.0), m1(1.0));
        assert!(matches!(
            integrate_riccati(&m, &m1(-1.0), |_| m1(1.0), |_| m1(1.0), 0.0, 1.0, StepSize::uniform(0.1)),
            Err(LtvError::LostPositivity { .. })
        ));
        // An RK4 step far outside the stability region destroys positivity.
        let res = integrate_riccati(&m, &m1(100.0), |_| m1(1.0), |_| m1(0.01), 0.0, 1.0, StepSize::uniform(1e-3));
        assert!(matches!(res, Err(LtvError::LostPositivity { .. }) | Err(LtvError::Ode(_))), "{res:?}");
    }

    #[test]
    fn schedule_interpolates() {
        let sched = RiccatiSchedule {
            times: vec![0.0, 1.0, 2.0],
            p: vec![m1(1.0); 3],
            l: vec![m1(0.0), m1(2.0), m1(6.0)],
        };
        assert_eq!(sched.gain_at(0.5)[(0, 0)], 1.0);
        assert_eq!(sched.gain_at(1.75)[(0, 0)], 5.0);
        assert_eq!(sched.gain_at(-1.0)[(0, 0)], 0.0);
        assert_eq!(sched.gain_at(9.0)[(0, 0)], 6.0);
    }

    #[test]
    fn composite_structure() {
        let a = MatN::from_row_slice(2, 2, &[0.1, 1.0, -2.0, 0.3]);
        let b = MatN::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = MatN::from_row_slice(1, 2, &[1.0, 0.0]);
        let k0 = MatN::zeros(1, 2);
        let l0 = MatN::zeros(2, 1);
        let m = composite_matrix(&a, &b, &k0, &l0, &c).unwrap();
        assert_eq!(m.view((0, 0), (2, 2)), a);
        assert_eq!(m.view((2, 2), (2, 2)), a);
        assert!(composite_matrix(&a, &b, &l0, &l0, &c).is_err());

        let k = MatN::from_row_slice(1, 2, &[3.7, -1.2]);
        let l = MatN::from_row_slice(2, 1, &[0.4, 9.1]);
        let m = composite_matrix(&a, &b, &k, &l, &c).unwrap();
        assert!(m.view((2, 0), (2, 2)).iter().all(|&v| v.to_bits() == 0));
    }

    #[test]
    fn rate_fit_synthetic() {
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let norms: Vec<f64> = times.iter().map(|t| (-2.0 * t).exp()).collect();
        let fit = decay_rate_fit_series(&times, &norms).unwrap();
        assert_relative_eq!(fit.rate, -2.0, epsilon = 1e-9);
        assert!(fit.r2 > 0.999);

        let flat = vec![3.0; 200];
        let fit = decay_rate_fit_series(&times, &flat).unwrap();
        assert!(fit.rate.abs() < 1e-12);

        assert!(matches!(decay_rate_fit_series(&times[..5], &flat[..5]), Err(LtvError::TooFewSamples(5))));
        let zeros = vec![0.0; 200];
        assert!(matches!(decay_rate_fit_series(&times, &zeros), Err(LtvError::DegenerateTrace)));
    }

    #[test]
    fn rate_fit_on_trace() {
        let f = FnField::new(2, |_, x: &VecN| VecN::from_vec(vec![-x[0] + x[1], -x[1]]));
        let tr = integrate(&f, 0.0, &VecN::from_vec(vec![1.0, 1.0]), 20.0, 1e-2).unwrap();
        let fit = decay_rate_fit(&tr, |x| x.norm()).unwrap();
        assert!(fit.rate < -0.8 && fit.rate > -1.1, "{fit:?}");
    }

    #[test]
    fn composite_simulation_decays() {
        // Stable A−BK and A−LC certified via eigenvalues, bounded BK.
        let a = MatN::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = MatN::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = MatN::from_row_slice(1, 2, &[1.0, 0.0]);
        let k = MatN::from_row_slice(1, 2, &[2.0, 3.0]);
        let l = MatN::from_row_slice(2, 1, &[4.0, 4.0]);
        let m = composite_matrix(&a, &b, &k, &l, &c).unwrap();
        for ev in m.complex_eigenvalues().iter() {
            assert!(ev.re < 0.0);
        }
        let f = FnField::new(4, move |_, x: &VecN| &m * x);
        let tr = integrate(&f, 0.0, &VecN::from_vec(vec![1.0, -1.0, 0.5, 0.5]), 15.0, 1e-2).unwrap();
        let fit = decay_rate_fit(&tr, |x| x.norm()).unwrap();
        assert!(fit.rate < 0.0 && fit.r2 > 0.95, "{fit:?}");
    }
}

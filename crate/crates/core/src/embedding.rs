//! Embedding of a manifold-constrained system into ℝⁿ and transversal stabilization.
//!
//! A system on `M = Ṽ⁻¹(0) ⊂ ℝⁿ` is extended to the ambient space and the
//! correction `−∇Ṽ` is added, making `M` an attractive invariant set. The
//! checks here certify the ingredients numerically: tangency of the ambient
//! field to the level sets of Ṽ, correctness of the supplied gradient, and the
//! decay constant `b` with `b·Ṽ ≤ ‖∇Ṽ‖²` on a sampled sublevel set.

use crate::linalg::VecN;
use crate::ode::{FlowField, Trace};
use thiserror::Error;

/// Below this value of Ṽ a sample is treated as lying on the manifold.
pub const ON_MANIFOLD_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("no sample satisfied 0 < V(x) < r")]
    EmptySampleSet,
    #[error("sample {index} lies on the manifold (V = {value:e}); the decay ratio is undefined")]
    OnManifoldSample { index: usize, value: f64 },
    #[error("finite-difference step {0} outside [1e-8, 1e-4]")]
    InvalidFdStep(f64),
}

/// An ambient control system together with its constraint function Ṽ.
///
/// States are flat vectors; matrix-shaped states are flattened row-major by
/// the implementor.
pub trait EmbeddedSystem {
    fn ambient_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// The ambient field `Xₑ(x, u)`.
    fn ambient_field(&self, x: &VecN, u: &VecN) -> VecN;
    /// Ṽ(x) ≥ 0, vanishing exactly on the manifold.
    fn constraint(&self, x: &VecN) -> f64;
    fn constraint_grad(&self, x: &VecN) -> VecN;
    fn output(&self, x: &VecN) -> VecN;

    /// `X̃ₑ(x, u) = Xₑ(x, u) − ∇Ṽ(x)`.
    fn extended_field(&self, x: &VecN, u: &VecN) -> VecN {
        self.ambient_field(x, u) - self.constraint_grad(x)
    }
}

type DynField = Box<dyn Fn(&VecN, &VecN) -> VecN + Send + Sync>;
type DynScalar = Box<dyn Fn(&VecN) -> f64 + Send + Sync>;
type DynVec = Box<dyn Fn(&VecN) -> VecN + Send + Sync>;

/// Closure-backed [`EmbeddedSystem`].
pub struct FnEmbeddedSystem {
    ambient_dim: usize,
    control_dim: usize,
    output_dim: usize,
    field: DynField,
    constraint: DynScalar,
    grad: DynVec,
    output: DynVec,
}

impl FnEmbeddedSystem {
    pub fn new(
        ambient_dim: usize,
        control_dim: usize,
        field: impl Fn(&VecN, &VecN) -> VecN + Send + Sync + 'static,
        constraint: impl Fn(&VecN) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&VecN) -> VecN + Send + Sync + 'static,
    ) -> Self {
        Self {
            ambient_dim,
            control_dim,
            output_dim: ambient_dim,
            field: Box::new(field),
            constraint: Box::new(constraint),
            grad: Box::new(grad),
            output: Box::new(|x: &VecN| x.clone()),
        }
    }

    pub fn with_output(
        mut self,
        output_dim: usize,
        output: impl Fn(&VecN) -> VecN + Send + Sync + 'static,
    ) -> Self {
        self.output_dim = output_dim;
        self.output = Box::new(output);
        self
    }
}

impl EmbeddedSystem for FnEmbeddedSystem {
    fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }
    fn control_dim(&self) -> usize {
        self.control_dim
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn ambient_field(&self, x: &VecN, u: &VecN) -> VecN {
        (self.field)(x, u)
    }
    fn constraint(&self, x: &VecN) -> f64 {
        (self.constraint)(x)
    }
    fn constraint_grad(&self, x: &VecN) -> VecN {
        (self.grad)(x)
    }
    fn output(&self, x: &VecN) -> VecN {
        (self.output)(x)
    }
}

/// The stabilized ambient field driven by a feedback/feedforward law `u(t, x)`.
pub struct ExtendedFlow<'a, S: ?Sized, U> {
    sys: &'a S,
    control: U,
}

impl<'a, S, U> ExtendedFlow<'a, S, U>
where
    S: EmbeddedSystem + ?Sized,
    U: Fn(f64, &VecN) -> VecN,
{
    pub fn new(sys: &'a S, control: U) -> Self {
        Self { sys, control }
    }
}

impl<S, U> FlowField for ExtendedFlow<'_, S, U>
where
    S: EmbeddedSystem + ?Sized,
    U: Fn(f64, &VecN) -> VecN,
{
    fn dim(&self) -> usize {
        self.sys.ambient_dim()
    }
    fn rhs(&self, t: f64, x: &VecN) -> VecN {
        let u = (self.control)(t, x);
        self.sys.extended_field(x, &u)
    }
}

/// Open-loop stabilized flow with zero control.
pub fn unforced_flow<S: EmbeddedSystem + ?Sized>(
    sys: &S,
) -> ExtendedFlow<'_, S, impl Fn(f64, &VecN) -> VecN> {
    let k = sys.control_dim();
    ExtendedFlow::new(sys, move |_, _| VecN::zeros(k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangencyReport {
    pub max_residual: f64,
    pub tol: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Largest `|∇Ṽ(x) · Xₑ(x, u)|` over the samples.
pub fn check_tangency<S: EmbeddedSystem + ?Sized>(
    sys: &S,
    samples: &[(VecN, VecN)],
    tol: f64,
) -> TangencyReport {
    let max_residual = samples
        .iter()
        .map(|(x, u)| sys.constraint_grad(x).dot(&sys.ambient_field(x, u)).abs())
        .fold(0.0, f64::max);
    TangencyReport {
        max_residual,
        tol,
        samples: samples.len(),
        passed: max_residual <= tol,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayConstant {
    /// `min ‖∇Ṽ‖² / Ṽ` over the accepted samples.
    pub b: f64,
    pub accepted: usize,
    /// Samples with `Ṽ ≥ r`, outside the sublevel set.
    pub rejected: usize,
}

/// Estimate the transversal decay constant on `{0 < Ṽ < r}` from samples.
pub fn estimate_decay_constant<S: EmbeddedSystem + ?Sized>(
    sys: &S,
    sublevel_r: f64,
    samples: &[VecN],
) -> Result<DecayConstant, EmbeddingError> {
    let mut b = f64::INFINITY;
    let mut accepted = 0;
    let mut rejected = 0;
    for (index, x) in samples.iter().enumerate() {
        let value = sys.constraint(x);
        if value >= sublevel_r {
            rejected += 1;
            continue;
        }
        if value < ON_MANIFOLD_TOL {
            return Err(EmbeddingError::OnManifoldSample { index, value });
        }
        let g = sys.constraint_grad(x);
        b = b.min(g.norm_squared() / value);
        accepted += 1;
    }
    if accepted == 0 {
        return Err(EmbeddingError::EmptySampleSet);
    }
    Ok(DecayConstant {
        b,
        accepted,
        rejected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    /// Smallest `Ṽ(0)·e^{−b t}·(1 + slack) − Ṽ(t)` over the trace.
    pub worst_margin: f64,
    pub violations: usize,
    pub passed: bool,
}

/// Check `Ṽ(x(t)) ≤ Ṽ(x(0))·e^{−b t}·(1 + slack)` at every sample of `trace`.
pub fn verify_exponential_decay(
    trace: &Trace,
    vfn: impl Fn(&VecN) -> f64,
    b: f64,
    slack: f64,
) -> DecayReport {
    let Some((t0, x0)) = trace.iter().next() else {
        return DecayReport {
            worst_margin: 0.0,
            violations: 0,
            passed: true,
        };
    };
    let v0 = vfn(x0);
    let mut worst_margin = f64::INFINITY;
    let mut violations = 0;
    for (t, x) in trace.iter() {
        let bound = v0 * (-b * (t - t0)).exp() * (1.0 + slack);
        let margin = bound - vfn(x);
        if margin < 0.0 {
            violations += 1;
        }
        worst_margin = worst_margin.min(margin);
    }
    DecayReport {
        worst_margin,
        violations,
        passed: violations == 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    /// Worst `‖fd − ∇Ṽ‖∞ / ‖∇Ṽ‖∞` over the samples.
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Tolerance of [`gradient_check`], relative to the largest gradient component.
pub const GRADIENT_REL_TOL: f64 = 1e-5;

/// Compare the supplied gradient against central differences of Ṽ.
pub fn gradient_check<S: EmbeddedSystem + ?Sized>(
    sys: &S,
    samples: &[VecN],
    fd_step: f64,
) -> Result<GradientReport, EmbeddingError> {
    if !(1e-8..=1e-4).contains(&fd_step) {
        return Err(EmbeddingError::InvalidFdStep(fd_step));
    }
    let mut worst = 0.0_f64;
    for x in samples {
        let g = sys.constraint_grad(x);
        let mut fd = VecN::zeros(x.len());
        let mut probe = x.clone();
        for i in 0..x.len() {
            let xi = x[i];
            probe[i] = xi + fd_step;
            let up = sys.constraint(&probe);
            probe[i] = xi - fd_step;
            let down = sys.constraint(&probe);
            probe[i] = xi;
            fd[i] = (up - down) / (2.0 * fd_step);
        }
        let scale = g.amax();
        let diff = (&fd - &g).amax();
        let rel = if scale > 0.0 {
            diff / scale
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(rel);
    }
    Ok(GradientReport {
        max_rel_error: worst,
        tol: GRADIENT_REL_TOL,
        passed: worst < GRADIENT_REL_TOL,
    })
}

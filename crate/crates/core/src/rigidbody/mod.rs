//! Fully actuated rigid body on SO(3), embedded in ℝ^{3×3} × ℝ³.
//!
//! The attitude is carried as an unconstrained 3×3 matrix and pulled back to
//! SO(3) by the transversal term `−kₑR(RᵀR − I)`. Tracking errors are expressed
//! in `Z = R₀ᵀ(R − R₀)`; only the skew part `Z_k` and the angular-velocity error
//! enter the 6-dimensional observer model, since the symmetric part decays on
//! its own.

mod closed_loop;
mod control;
mod dynamics;
mod observer;
mod reference;
mod tracking;

use thiserror::Error;

pub use closed_loop::{ClosedLoop, ClosedLoopRun, GainMode, ObserverConfig, Sample, SimOptions};
pub use control::{
    feedback_matrix, full_state_controller, observer_based_controller, tracking_control,
    ControllerGains,
};
pub use dynamics::{
    check_domain, dynamics, extended_dynamics, grad_v, v_tilde, InertiaMatrix, RigidBodyEmbedding,
    RigidBodyRate, RigidBodyState,
};
pub use observer::{
    l1_dot_matrix, l1_matrix, nonkalman_gain, nonlinear_state_observer_rhs,
    tracking_error_observer_rhs,
};
pub use reference::{paper_reference, paper_u0_closed_form, RigidReference};
pub use tracking::{
    error_coords, linearized_model, measured_outputs, output_matrix, reduced_a, reduced_b,
    ErrorCoords,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RigidBodyError {
    #[error("inertia matrix must be symmetric positive definite")]
    InvalidInertia,
    #[error("invalid controller gains: {0}")]
    InvalidGains(String),
    #[error("gain matrix {0} is not symmetric positive definite")]
    InvalidGainMatrix(&'static str),
    #[error("reference trajectory failed validation: {0}")]
    ConstructionFailure(String),
    #[error("attitude left GL+(3) at t = {t} (det R = {det})")]
    DomainExit { t: f64, det: f64 },
    #[error(transparent)]
    Ode(#[from] crate::ode::OdeError),
    #[error(transparent)]
    Ltv(#[from] crate::ltv::LtvError),
}

/// Symmetric positive definite check used for gain and inertia matrices.
pub(crate) fn is_spd(m: &crate::linalg::Mat3) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-12 * scale && m.cholesky().is_some()
}

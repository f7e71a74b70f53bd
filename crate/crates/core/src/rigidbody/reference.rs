use super::{InertiaMatrix, RigidBodyError};
use crate::linalg::{exp_so3, frob_norm, hat, Mat3, Vec3};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    /// The periodic closed-form trajectory of the simulation experiment.
    Paper { closed_form_torque: bool },
    /// `R₀(t) = R₀(0)·exp(t Ω̂)` with constant body rate.
    ConstantRate { r_init: Mat3, omega: Vec3 },
}

/// A reference motion `(R₀(t), Ω₀(t))` with its feedforward torque `u₀(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidReference {
    shape: Shape,
    inertia: InertiaMatrix,
}

/// The experiment's reference with inertia `diag(3, 2, 1)` and the
/// closed-form feedforward torque.
pub fn paper_reference() -> Result<RigidReference, RigidBodyError> {
    let inertia = InertiaMatrix::diagonal([3.0, 2.0, 1.0])?;
    RigidReference {
        shape: Shape::Paper {
            closed_form_torque: true,
        },
        inertia,
    }
    .validated()
}

/// Closed-form `u₀(t)` of the experiment, valid for `𝕀 = diag(3, 2, 1)` only.
pub fn paper_u0_closed_form(t: f64) -> Vec3 {
    let (s, c) = t.sin_cos();
    Vec3::new(
        -(3.0 + 6.0 * s + c * c) * c,
        -2.0 * (2.0 + s) * c * s * s,
        -(2.0 * s - c * c) * s,
    )
}

impl RigidReference {
    /// The experiment's attitude/rate curve for an arbitrary inertia; `u₀` is
    /// then computed from the Euler equations.
    pub fn paper_with_inertia(inertia: InertiaMatrix) -> Result<Self, RigidBodyError> {
        let paper = *inertia.matrix() == Mat3::from_diagonal(&Vec3::new(3.0, 2.0, 1.0));
        Self {
            shape: Shape::Paper {
                closed_form_torque: paper,
            },
            inertia,
        }
        .validated()
    }

    pub fn constant_rate(
        inertia: InertiaMatrix,
        r_init: Mat3,
        omega: Vec3,
    ) -> Result<Self, RigidBodyError> {
        Self {
            shape: Shape::ConstantRate { r_init, omega },
            inertia,
        }
        .validated()
    }

    pub fn inertia(&self) -> &InertiaMatrix {
        &self.inertia
    }

    /// Period of `(R₀, Ω₀)`, if the motion is periodic.
    pub fn period(&self) -> Option<f64> {
        match self.shape {
            Shape::Paper { .. } => Some(TAU),
            Shape::ConstantRate { omega, .. } => {
                let w = omega.norm();
                (w > 0.0).then(|| TAU / w)
            }
        }
    }

    /// True when `Ω₀` is constant.
    pub fn is_constant_rate(&self) -> bool {
        matches!(self.shape, Shape::ConstantRate { .. })
    }

    pub fn r0(&self, t: f64) -> Mat3 {
        match self.shape {
            Shape::Paper { .. } => {
                let (s, c) = t.sin_cos();
                Mat3::new(
                    c * c,
                    -s,
                    c * s,
                    s * s + c * c * s,
                    c * c,
                    c * s * s - c * s,
                    c * s * s - c * s,
                    c * s,
                    c * c + s * s * s,
                )
            }
            Shape::ConstantRate { r_init, omega } => r_init * exp_so3(&(omega * t)),
        }
    }

    pub fn omega0(&self, t: f64) -> Vec3 {
        match self.shape {
            Shape::Paper { .. } => {
                let (s, c) = t.sin_cos();
                Vec3::new(c * c - s, 1.0 - s, (1.0 + s) * c)
            }
            Shape::ConstantRate { omega, .. } => omega,
        }
    }

    /// Time derivative of `Ω₀`, differentiated by hand from the closed form.
    pub fn omega0_dot(&self, t: f64) -> Vec3 {
        match self.shape {
            Shape::Paper { .. } => {
                let (s, c) = t.sin_cos();
                Vec3::new(-2.0 * s * c - c, -c, c * c - s - s * s)
            }
            Shape::ConstantRate { .. } => Vec3::zeros(),
        }
    }

    /// `u₀ = 𝕀Ω̇₀ − (𝕀Ω₀) × Ω₀`.
    pub fn u0(&self, t: f64) -> Vec3 {
        match self.shape {
            Shape::Paper {
                closed_form_torque: true,
            } => paper_u0_closed_form(t),
            _ => self.euler_torque(t),
        }
    }

    fn euler_torque(&self, t: f64) -> Vec3 {
        let j = self.inertia.matrix();
        let w = self.omega0(t);
        j * self.omega0_dot(t) - (j * w).cross(&w)
    }

    /// Check orthogonality of `R₀`, the kinematics `Ṙ₀ = R₀Ω̂₀`, the hand-coded
    /// `Ω̇₀`, and consistency of `u₀` with the Euler equations on a 1000-point grid.
    pub fn validate(&self) -> Result<(), RigidBodyError> {
        const FD: f64 = 1e-5;
        let span = self.period().unwrap_or(TAU);
        for i in 0..1000 {
            let t = span * i as f64 / 999.0;
            let r = self.r0(t);
            let orth = frob_norm(&(r.transpose() * r - Mat3::identity()));
            if orth > 1e-9 {
                return Err(RigidBodyError::ConstructionFailure(format!(
                    "R0 not orthogonal at t = {t} (drift {orth:e})"
                )));
            }
            let r_dot = (self.r0(t + FD) - self.r0(t - FD)) / (2.0 * FD);
            let kin = (r_dot - r * hat(&self.omega0(t))).amax();
            if kin > 1e-5 {
                return Err(RigidBodyError::ConstructionFailure(format!(
                    "dR0/dt != R0 hat(Omega0) at t = {t} (residual {kin:e})"
                )));
            }
            let w_dot = (self.omega0(t + FD) - self.omega0(t - FD)) / (2.0 * FD);
            let acc = (w_dot - self.omega0_dot(t)).amax();
            if acc > 1e-5 {
                return Err(RigidBodyError::ConstructionFailure(format!(
                    "dOmega0/dt inconsistent at t = {t} (residual {acc:e})"
                )));
            }
            let torque = (self.u0(t) - self.euler_torque(t)).amax();
            if torque > 1e-9 {
                return Err(RigidBodyError::ConstructionFailure(format!(
                    "u0 inconsistent with the Euler equations at t = {t} (residual {torque:e})"
                )));
            }
        }
        Ok(())
    }

    fn validated(self) -> Result<Self, RigidBodyError> {
        self.validate().map(|_| self)
    }
}

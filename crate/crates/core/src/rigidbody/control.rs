use super::{is_spd, ErrorCoords, InertiaMatrix, RigidBodyError, RigidReference};
use crate::linalg::{hat, Mat3, MatN, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    k_p: f64,
    k_d: Mat3,
    k_e: f64,
}

impl ControllerGains {
    pub fn new(k_p: f64, k_d: Mat3, k_e: f64) -> Result<Self, RigidBodyError> {
        if !(k_p > 0.0 && k_p.is_finite()) {
            return Err(RigidBodyError::InvalidGains(format!("k_P must be positive, got {k_p}")));
        }
        if !(k_e > 0.0 && k_e.is_finite()) {
            return Err(RigidBodyError::InvalidGains(format!("k_e must be positive, got {k_e}")));
        }
        if !is_spd(&k_d) {
            return Err(RigidBodyError::InvalidGains(
                "K_D must be symmetric positive definite".into(),
            ));
        }
        Ok(Self { k_p, k_d, k_e })
    }

    pub fn k_p(&self) -> f64 {
        self.k_p
    }
    pub fn k_d(&self) -> &Mat3 {
        &self.k_d
    }
    pub fn k_e(&self) -> f64 {
        self.k_e
    }
}

/// `u = u₀ − (𝕀ΔΩ)×Ω₀ − (𝕀Ω₀)×ΔΩ − 𝕀(k_P Z_k^∨ + K_D ΔΩ)` for a given
/// (true or estimated) attitude error `z_k` and rate error `d_omega`.
pub fn tracking_control(
    z_k: &Vec3,
    d_omega: &Vec3,
    reference: &RigidReference,
    t: f64,
    inertia: &InertiaMatrix,
    gains: &ControllerGains,
) -> Vec3 {
    let j = inertia.matrix();
    let w0 = reference.omega0(t);
    reference.u0(t)
        - (j * d_omega).cross(&w0)
        - (j * w0).cross(d_omega)
        - j * (z_k * gains.k_p + gains.k_d * d_omega)
}

/// Linear feedback `K(t)` with `Δu = −K(t)(Z_k^∨, ΔΩ)`, i.e. the controller of
/// [`tracking_control`] written against the reduced model.
pub fn feedback_matrix(
    reference: &RigidReference,
    t: f64,
    inertia: &InertiaMatrix,
    gains: &ControllerGains,
) -> MatN {
    let j = inertia.matrix();
    let w = reference.omega0(t);
    let mut k = MatN::zeros(3, 6);
    k.view_mut((0, 0), (3, 3)).copy_from(&(j * gains.k_p));
    k.view_mut((0, 3), (3, 3))
        .copy_from(&(j * gains.k_d + hat(&(j * w)) - hat(&w) * j));
    k
}

/// Tracking control driven by the observer estimate `z_o = (Z_k,est^∨, ΔΩ_est)`.
pub fn observer_based_controller(
    z_o: &[f64; 6],
    reference: &RigidReference,
    t: f64,
    inertia: &InertiaMatrix,
    gains: &ControllerGains,
) -> Vec3 {
    let z_k = Vec3::new(z_o[0], z_o[1], z_o[2]);
    let d_omega = Vec3::new(z_o[3], z_o[4], z_o[5]);
    tracking_control(&z_k, &d_omega, reference, t, inertia, gains)
}

/// Tracking control driven by the true error coordinates.
pub fn full_state_controller(
    ec: &ErrorCoords,
    reference: &RigidReference,
    t: f64,
    inertia: &InertiaMatrix,
    gains: &ControllerGains,
) -> Vec3 {
    tracking_control(&ec.z_k_vee, &ec.d_omega, reference, t, inertia, gains)
}

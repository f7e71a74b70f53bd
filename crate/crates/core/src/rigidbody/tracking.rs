use super::{InertiaMatrix, RigidBodyState, RigidReference};
use crate::linalg::{frob_norm, hat, skew, sym, vee_skew_part, Mat3, MatN, Vec3};
use crate::ltv::LtvModel;
use std::f64::consts::TAU;

/// Tracking error in `Z = R₀ᵀ(R − R₀)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorCoords {
    pub z_s: Mat3,
    pub z_k_vee: Vec3,
    pub d_omega: Vec3,
}

impl ErrorCoords {
    /// The observer's 6-vector `(Z_k^∨, ΔΩ)`.
    pub fn reduced(&self) -> [f64; 6] {
        let (k, w) = (self.z_k_vee, self.d_omega);
        [k.x, k.y, k.z, w.x, w.y, w.z]
    }

    /// `‖Z‖ = ‖ΔR‖`, since `R₀` is orthogonal.
    pub fn attitude_error_norm(&self) -> f64 {
        frob_norm(&(self.z_s + hat(&self.z_k_vee)))
    }
}

pub fn error_coords(s: &RigidBodyState, reference: &RigidReference, t: f64) -> ErrorCoords {
    let r0 = reference.r0(t);
    let z = r0.transpose() * (s.r - r0);
    ErrorCoords {
        z_s: sym(&z),
        z_k_vee: vee_skew_part(&z),
        d_omega: s.omega - reference.omega0(t),
    }
}

/// `(Δy_s, Δy_k) = (Sym(R₀ᵀΔy), Skew(R₀ᵀΔy)^∨)` for the measured attitude `y`.
pub fn measured_outputs(y: &Mat3, reference: &RigidReference, t: f64) -> (Mat3, Vec3) {
    let r0 = reference.r0(t);
    let z = r0.transpose() * (y - r0);
    debug_assert!((skew(&z) - hat(&vee_skew_part(&z))).amax() < 1e-12);
    (sym(&z), vee_skew_part(&z))
}

/// `A(t) = [[−Ω̂₀, I], [0, 𝕀⁻¹(hat(𝕀Ω₀) − Ω̂₀𝕀)]]`.
pub fn reduced_a(reference: &RigidReference, inertia: &InertiaMatrix, t: f64) -> MatN {
    let w = reference.omega0(t);
    let w_hat = hat(&w);
    let j = inertia.matrix();
    let lower = inertia.inverse() * (hat(&(j * w)) - w_hat * j);
    let mut a = MatN::zeros(6, 6);
    a.view_mut((0, 0), (3, 3)).copy_from(&(-w_hat));
    a.view_mut((0, 3), (3, 3)).copy_from(&Mat3::identity());
    a.view_mut((3, 3), (3, 3)).copy_from(&lower);
    a
}

/// `B = [0; 𝕀⁻¹]`.
pub fn reduced_b(inertia: &InertiaMatrix) -> MatN {
    let mut b = MatN::zeros(6, 3);
    b.view_mut((3, 0), (3, 3)).copy_from(inertia.inverse());
    b
}

/// `C = [I 0]`.
pub fn output_matrix() -> MatN {
    let mut c = MatN::zeros(3, 6);
    c.view_mut((0, 0), (3, 3)).copy_from(&Mat3::identity());
    c
}

/// The 6-state LTV model of `(Z_k^∨, ΔΩ)` linearized along the reference.
pub fn linearized_model(reference: &RigidReference, inertia: &InertiaMatrix) -> LtvModel {
    let span = reference.period().unwrap_or(TAU);
    let bound = (0..1000)
        .map(|i| frob_norm(&reduced_a(reference, inertia, span * i as f64 / 1000.0)))
        .fold(0.0, f64::max);
    let (r, j) = (*reference, *inertia);
    let b = reduced_b(inertia);
    let model = LtvModel::new(
        6,
        3,
        3,
        move |t| reduced_a(&r, &j, t),
        move |_| b.clone(),
        |_| output_matrix(),
    )
    .with_bound(bound);
    match reference.period() {
        Some(p) => model.with_period(p),
        None => model,
    }
}

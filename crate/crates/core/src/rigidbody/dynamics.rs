use super::{is_spd, RigidBodyError};
use crate::embedding::EmbeddedSystem;
use crate::linalg::{flatten_row_major, hat, unflatten_row_major, Mat3, Vec3, VecN};

/// Moment of inertia with its inverse cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaMatrix {
    matrix: Mat3,
    inverse: Mat3,
}

impl InertiaMatrix {
    pub fn new(matrix: Mat3) -> Result<Self, RigidBodyError> {
        if !is_spd(&matrix) {
            return Err(RigidBodyError::InvalidInertia);
        }
        let inverse = matrix.try_inverse().ok_or(RigidBodyError::InvalidInertia)?;
        Ok(Self { matrix, inverse })
    }

    pub fn diagonal(d: [f64; 3]) -> Result<Self, RigidBodyError> {
        Self::new(Mat3::from_diagonal(&Vec3::from(d)))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.matrix
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.inverse
    }
}

/// Ambient state `(R, Ω) ∈ ℝ^{3×3} × ℝ³`. `R` is not constrained to SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub r: Mat3,
    pub omega: Vec3,
}

/// Time derivative of a [`RigidBodyState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyRate {
    pub r_dot: Mat3,
    pub omega_dot: Vec3,
}

impl RigidBodyState {
    pub const FLAT_DIM: usize = 12;

    pub fn new(r: Mat3, omega: Vec3) -> Self {
        Self { r, omega }
    }

    /// Layout: `R` row-major, then `Ω`.
    pub fn write_flat(&self, out: &mut [f64]) {
        out[..9].copy_from_slice(&flatten_row_major(&self.r));
        out[9..12].copy_from_slice(self.omega.as_slice());
    }

    pub fn to_flat(&self) -> VecN {
        let mut v = VecN::zeros(Self::FLAT_DIM);
        self.write_flat(v.as_mut_slice());
        v
    }

    pub fn from_flat(x: &[f64]) -> Self {
        Self {
            r: unflatten_row_major(&x[..9]),
            omega: Vec3::new(x[9], x[10], x[11]),
        }
    }
}

impl RigidBodyRate {
    pub fn write_flat(&self, out: &mut [f64]) {
        out[..9].copy_from_slice(&flatten_row_major(&self.r_dot));
        out[9..12].copy_from_slice(self.omega_dot.as_slice());
    }

    pub fn to_flat(&self) -> VecN {
        let mut v = VecN::zeros(RigidBodyState::FLAT_DIM);
        self.write_flat(v.as_mut_slice());
        v
    }
}

fn omega_dot(omega: &Vec3, u: &Vec3, inertia: &InertiaMatrix) -> Vec3 {
    let j = inertia.matrix();
    inertia.inverse() * ((j * omega).cross(omega) + u)
}

/// Rigid-body equations of motion: `Ṙ = RΩ̂`, `Ω̇ = 𝕀⁻¹(𝕀Ω × Ω) + 𝕀⁻¹u`.
pub fn dynamics(s: &RigidBodyState, u: &Vec3, inertia: &InertiaMatrix) -> RigidBodyRate {
    RigidBodyRate {
        r_dot: s.r * hat(&s.omega),
        omega_dot: omega_dot(&s.omega, u, inertia),
    }
}

/// [`dynamics`] with the transversal correction `−kₑR(RᵀR − I)` added to `Ṙ`.
pub fn extended_dynamics(
    s: &RigidBodyState,
    u: &Vec3,
    inertia: &InertiaMatrix,
    k_e: f64,
) -> RigidBodyRate {
    let mut rate = dynamics(s, u, inertia);
    rate.r_dot -= grad_v(&s.r, k_e);
    rate
}

/// `Ṽ(R) = kₑ/4 ‖RᵀR − I‖²`.
pub fn v_tilde(r: &Mat3, k_e: f64) -> f64 {
    0.25 * k_e * (r.transpose() * r - Mat3::identity()).norm_squared()
}

/// `∇_R Ṽ = kₑR(RᵀR − I)`; the Ω-component of the gradient is zero.
pub fn grad_v(r: &Mat3, k_e: f64) -> Mat3 {
    r * (r.transpose() * r - Mat3::identity()) * k_e
}

/// Fails when `det R ≤ 0`, outside the domain GL⁺(3) of Ṽ.
pub fn check_domain(t: f64, s: &RigidBodyState) -> Result<(), RigidBodyError> {
    let det = s.r.determinant();
    if det > 0.0 {
        Ok(())
    } else {
        Err(RigidBodyError::DomainExit { t, det })
    }
}

/// The rigid body as an [`EmbeddedSystem`] on flattened 12-vectors, with the
/// measured output `y = R` (9 entries, row-major).
#[derive(Debug, Clone, Copy)]
pub struct RigidBodyEmbedding {
    pub inertia: InertiaMatrix,
    pub k_e: f64,
}

impl EmbeddedSystem for RigidBodyEmbedding {
    fn ambient_dim(&self) -> usize {
        RigidBodyState::FLAT_DIM
    }
    fn control_dim(&self) -> usize {
        3
    }
    fn output_dim(&self) -> usize {
        9
    }
    fn ambient_field(&self, x: &VecN, u: &VecN) -> VecN {
        let s = RigidBodyState::from_flat(x.as_slice());
        dynamics(&s, &Vec3::new(u[0], u[1], u[2]), &self.inertia).to_flat()
    }
    fn constraint(&self, x: &VecN) -> f64 {
        v_tilde(&unflatten_row_major(x.as_slice()), self.k_e)
    }
    fn constraint_grad(&self, x: &VecN) -> VecN {
        let g = grad_v(&unflatten_row_major(x.as_slice()), self.k_e);
        let mut out = VecN::zeros(RigidBodyState::FLAT_DIM);
        out.as_mut_slice()[..9].copy_from_slice(&flatten_row_major(&g));
        out
    }
    fn output(&self, x: &VecN) -> VecN {
        VecN::from_row_slice(&x.as_slice()[..9])
    }
}

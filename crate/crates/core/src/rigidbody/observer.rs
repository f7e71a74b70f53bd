use super::{
    dynamics, grad_v, is_spd, measured_outputs, InertiaMatrix, RigidBodyError, RigidBodyRate,
    RigidBodyState, RigidReference,
};
use crate::linalg::{hat, Mat3, MatN, Vec3, VecN};

/// Linear tracking-error observer `ż = Az + BΔu − L(Cz − Δy_k)` with
/// `C = [I 0]`.
pub fn tracking_error_observer_rhs(
    z: &[f64; 6],
    du: &Vec3,
    dy_k: &Vec3,
    a: &MatN,
    b: &MatN,
    l: &MatN,
) -> VecN {
    let z = VecN::from_row_slice(z);
    let innovation = VecN::from_row_slice(&[z[0] - dy_k.x, z[1] - dy_k.y, z[2] - dy_k.z]);
    let du = VecN::from_row_slice(du.as_slice());
    a * &z + b * du - l * innovation
}

fn n_matrix(inertia: &InertiaMatrix, w: &Vec3) -> Mat3 {
    let j = inertia.matrix();
    inertia.inverse() * (hat(&(j * w)) - hat(w) * j)
}

/// `L₁ = −Ω̂₀ + 𝕀⁻¹(hat(𝕀Ω₀) − Ω̂₀𝕀) + M₁`.
pub fn l1_matrix(reference: &RigidReference, t: f64, inertia: &InertiaMatrix, m1: &Mat3) -> Mat3 {
    let w = reference.omega0(t);
    -hat(&w) + n_matrix(inertia, &w) + m1
}

/// Time derivative of [`l1_matrix`]; `M₁` is constant.
pub fn l1_dot_matrix(reference: &RigidReference, t: f64, inertia: &InertiaMatrix) -> Mat3 {
    let wd = reference.omega0_dot(t);
    -hat(&wd) + n_matrix(inertia, &wd)
}

/// Gain `[L₁; L₂]` placing the observer error in the form
/// `ė₁ = −M₁e₁ + w`, `ẇ = −M₂e₁`.
pub fn nonkalman_gain(
    reference: &RigidReference,
    t: f64,
    inertia: &InertiaMatrix,
    m1: &Mat3,
    m2: &Mat3,
) -> Result<MatN, RigidBodyError> {
    if !is_spd(m1) {
        return Err(RigidBodyError::InvalidGainMatrix("M1"));
    }
    if !is_spd(m2) {
        return Err(RigidBodyError::InvalidGainMatrix("M2"));
    }
    let w_hat = hat(&reference.omega0(t));
    let l1 = l1_matrix(reference, t, inertia, m1);
    let l1_dot = l1_dot_matrix(reference, t, inertia);
    let s = w_hat + l1;
    let l2 = -(hat(&reference.omega0_dot(t)) + l1_dot) + s * s - m1 * s + m2;
    let mut l = MatN::zeros(6, 3);
    l.view_mut((0, 0), (3, 3)).copy_from(&l1);
    l.view_mut((3, 0), (3, 3)).copy_from(&l2);
    Ok(l)
}

/// Observer on the full embedded state. With `ν = Skew(R₀ᵀ(R̂ − y))^∨`:
/// `Ṙ̂ = R̂Ω̂̂ − kₑR̂(R̂ᵀR̂ − I) − R₀ hat(L₁ν)` and `Ω̂̇ = 𝕀⁻¹(𝕀Ω̂ × Ω̂ + u) − L₂ν`.
/// Linearized along the reference it reduces to [`tracking_error_observer_rhs`].
#[allow(clippy::too_many_arguments)]
pub fn nonlinear_state_observer_rhs(
    xhat: &RigidBodyState,
    u: &Vec3,
    y: &Mat3,
    l: &MatN,
    reference: &RigidReference,
    t: f64,
    inertia: &InertiaMatrix,
    k_e: f64,
) -> RigidBodyRate {
    let (_, yk) = measured_outputs(y, reference, t);
    let (_, zk) = measured_outputs(&xhat.r, reference, t);
    let nu = VecN::from_row_slice((zk - yk).as_slice());
    let corr = l * nu;
    let c1 = Vec3::new(corr[0], corr[1], corr[2]);
    let c2 = Vec3::new(corr[3], corr[4], corr[5]);
    let mut rate = dynamics(xhat, u, inertia);
    rate.r_dot -= grad_v(&xhat.r, k_e) + reference.r0(t) * hat(&c1);
    rate.omega_dot -= c2;
    rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltv::decay_rate_fit;
    use crate::ode::{integrate, FnField};
    use crate::rigidbody::{output_matrix, paper_reference, reduced_a};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn l1_dot_matches_finite_differences() {
        let r = paper_reference().unwrap();
        let j = *r.inertia();
        let m1 = Mat3::identity();
        let h = 1e-6;
        for i in 0..40 {
            let t = 0.157 * i as f64;
            let fd = (l1_matrix(&r, t + h, &j, &m1) - l1_matrix(&r, t - h, &j, &m1)) / (2.0 * h);
            assert!((fd - l1_dot_matrix(&r, t, &j)).amax() < 1e-6);
        }
    }

    #[test]
    fn static_reference_collapses_to_m() {
        let j = InertiaMatrix::diagonal([3.0, 2.0, 1.0]).unwrap();
        let still = RigidReference::constant_rate(j, Mat3::identity(), Vec3::zeros()).unwrap();
        let m1 = Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0));
        let m2 = Mat3::from_diagonal(&Vec3::new(0.5, 0.7, 4.0));
        let l = nonkalman_gain(&still, 1.3, &j, &m1, &m2).unwrap();
        assert!((l.view((0, 0), (3, 3)) - m1).amax() < 1e-15);
        assert!((l.view((3, 0), (3, 3)) - m2).amax() < 1e-14);
    }

    #[test]
    fn rejects_indefinite_m() {
        let r = paper_reference().unwrap();
        let bad = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0));
        let id = Mat3::identity();
        assert_eq!(
            nonkalman_gain(&r, 0.0, r.inertia(), &bad, &id),
            Err(RigidBodyError::InvalidGainMatrix("M1"))
        );
        assert_eq!(
            nonkalman_gain(&r, 0.0, r.inertia(), &id, &bad),
            Err(RigidBodyError::InvalidGainMatrix("M2"))
        );
    }

    fn error_flow(m1: Mat3, m2: Mat3) -> impl Fn(f64, &VecN) -> VecN {
        let r = paper_reference().unwrap();
        let c = output_matrix();
        move |t, e: &VecN| {
            let j = *r.inertia();
            let l = nonkalman_gain(&r, t, &j, &m1, &m2).unwrap();
            (reduced_a(&r, &j, t) - &l * &c) * e
        }
    }

    #[test]
    fn error_dynamics_have_the_designed_form() {
        // With w = e₂ − N e₁ the error obeys ė₁ = −M₁e₁ + w; check the e₁ row
        // and the ẇ row against −M₂e₁ using finite differences along a trajectory.
        let r = paper_reference().unwrap();
        let j = *r.inertia();
        let m1 = Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 0.5));
        let m2 = Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 3.0));
        let f = FnField::new(6, error_flow(m1, m2));
        let e0 = VecN::from_row_slice(&[0.3, -0.2, 0.5, 1.0, 0.4, -0.7]);
        let tr = integrate(&f, 0.0, &e0, 2.0, 1e-4).unwrap();
        let w_of = |t: f64, e: &VecN| {
            let e1 = Vec3::new(e[0], e[1], e[2]);
            let e2 = Vec3::new(e[3], e[4], e[5]);
            (e1, e2 - n_matrix(&j, &r.omega0(t)) * e1)
        };
        let k = 5000;
        let (t, e) = (tr.times()[k], &tr.states()[k]);
        let h = tr.times()[k + 1] - t;
        let (e1, w) = w_of(t, e);
        let (e1p, wp) = w_of(t + h, &tr.states()[k + 1]);
        let (e1m, wm) = w_of(t - h, &tr.states()[k - 1]);
        let de1 = (e1p - e1m) / (2.0 * h);
        let dw = (wp - wm) / (2.0 * h);
        assert!((de1 - (-m1 * e1 + w)).amax() < 1e-6);
        assert!((dw - (-m2 * e1)).amax() < 1e-6);
    }

    #[test]
    fn identity_gains_give_rate_one_half() {
        let f = FnField::new(6, error_flow(Mat3::identity(), Mat3::identity()));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let e0 = VecN::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
            let tr = integrate(&f, 0.0, &e0, 30.0, 1e-2).unwrap();
            // ‖(e₁, w)‖ decays like t·e^{−t/2}·(oscillation); the envelope rate is 1/2.
            let fit = decay_rate_fit(&tr, |e| e.norm()).unwrap();
            assert!(fit.rate < 0.0);
            assert!((fit.rate + 0.5).abs() < 0.1, "rate {}", fit.rate);
            assert!(fit.r2 > 0.95, "r2 {}", fit.r2);
        }
    }

    #[test]
    fn nonlinear_observer_linearizes_to_reduced_observer() {
        let r = paper_reference().unwrap();
        let j = *r.inertia();
        let t = 0.9;
        let l = nonkalman_gain(&r, t, &j, &Mat3::identity(), &Mat3::identity()).unwrap();
        let r0 = r.r0(t);
        let w0 = r.omega0(t);
        let eps = 1e-7;
        let dz = Vec3::new(0.3, -0.1, 0.2) * eps;
        let dw = Vec3::new(-0.2, 0.4, 0.1) * eps;
        let dy = Vec3::new(0.1, 0.2, -0.3) * eps;
        let du = Vec3::new(0.5, -0.5, 0.25) * eps;
        let xhat = RigidBodyState::new(r0 * (Mat3::identity() + hat(&dz)), w0 + dw);
        let y = r0 * (Mat3::identity() + hat(&dy));
        let rate = nonlinear_state_observer_rhs(&xhat, &(r.u0(t) + du), &y, &l, &r, t, &j, 1.0);
        // d/dt Skew(R₀ᵀ(R̂ − R₀))^∨ along the observer, to first order.
        let r0_dot = r0 * hat(&w0);
        let z_dot = r0_dot.transpose() * (xhat.r - r0) + r0.transpose() * (rate.r_dot - r0_dot);
        let zk_dot = Vec3::new(
            0.5 * (z_dot[(2, 1)] - z_dot[(1, 2)]),
            0.5 * (z_dot[(0, 2)] - z_dot[(2, 0)]),
            0.5 * (z_dot[(1, 0)] - z_dot[(0, 1)]),
        );
        let dw_dot = rate.omega_dot - r.omega0_dot(t);
        let z = [dz.x, dz.y, dz.z, dw.x, dw.y, dw.z];
        let lin = tracking_error_observer_rhs(
            &z,
            &du,
            &dy,
            &reduced_a(&r, &j, t),
            &crate::rigidbody::reduced_b(&j),
            &l,
        );
        let nl = [zk_dot.x, zk_dot.y, zk_dot.z, dw_dot.x, dw_dot.y, dw_dot.z];
        for i in 0..6 {
            assert!((nl[i] - lin[i]).abs() < 1e-3 * eps, "component {i}: {} vs {}", nl[i], lin[i]);
        }
    }
}

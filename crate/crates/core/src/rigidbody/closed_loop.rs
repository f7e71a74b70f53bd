use super::{
    check_domain, error_coords, extended_dynamics, full_state_controller, measured_outputs,
    nonkalman_gain, nonlinear_state_observer_rhs, observer_based_controller, output_matrix,
    reduced_a, reduced_b, tracking_error_observer_rhs, ControllerGains, InertiaMatrix,
    RigidBodyError, RigidBodyState, RigidReference,
};
use crate::linalg::{self, Mat3, MatN, Vec3, VecN};
use crate::ltv::{
    check_positive, integrate_riccati, kalman_gain, riccati_rhs_with_inverse, weight_inverse,
    LtvError, RiccatiSchedule,
};
use crate::ode::{rk4_step, FnField, OdeError, StepSize, DIVERGENCE_BOUND};

/// How the Kalman gain is obtained along the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMode {
    /// `P` is integrated together with the plant and observer.
    Online,
    /// `P` is integrated first and the gain interpolated on the sample grid.
    Precomputed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObserverConfig {
    /// Full-state feedback on the true error coordinates.
    None,
    Kalman {
        z0: [f64; 6],
        q: MatN,
        r: MatN,
        p0: MatN,
        mode: GainMode,
    },
    NonKalman {
        z0: [f64; 6],
        m1: Mat3,
        m2: Mat3,
    },
    /// Observer on the embedded state `(R̂, Ω̂)` with the Riccati gain.
    Nonlinear {
        xhat0: RigidBodyState,
        q: MatN,
        r: MatN,
        p0: MatN,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub t0: f64,
    pub tf: f64,
    pub step: StepSize,
    /// Stop with [`RigidBodyError::DomainExit`] when `det R ≤ 0`; otherwise
    /// record the time and continue.
    pub abort_on_domain_exit: bool,
}

/// One sampled instant of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: RigidBodyState,
    /// Observer estimate `(Z_k^∨, ΔΩ)`, if an observer runs.
    pub z_o: Option<[f64; 6]>,
    pub u: Vec3,
}

impl Sample {
    /// `‖z_o − (Z_k^∨, ΔΩ)‖`, if an observer runs.
    pub fn observation_error(&self, reference: &RigidReference) -> Option<f64> {
        let z = self.z_o?;
        let truth = error_coords(&self.state, reference, self.t).reduced();
        Some(
            z.iter()
                .zip(truth.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub samples: Vec<Sample>,
    /// Times at which `det R` became non-positive (only when not aborting).
    pub domain_warnings: Vec<f64>,
    /// Why integration stopped before `tf`, if it did.
    pub abort: Option<RigidBodyError>,
}

/// Plant, tracking controller and observer integrated as one system.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub inertia: InertiaMatrix,
    pub gains: ControllerGains,
    pub reference: RigidReference,
    pub observer: ObserverConfig,
}

const PLANT: usize = RigidBodyState::FLAT_DIM;

impl ClosedLoop {
    fn observer_dim(&self) -> usize {
        match self.observer {
            ObserverConfig::None => 0,
            ObserverConfig::Kalman { .. } | ObserverConfig::NonKalman { .. } => 6,
            ObserverConfig::Nonlinear { .. } => PLANT,
        }
    }

    fn riccati_online(&self) -> bool {
        matches!(
            self.observer,
            ObserverConfig::Kalman { mode: GainMode::Online, .. } | ObserverConfig::Nonlinear { .. }
        )
    }

    fn dim(&self) -> usize {
        PLANT + self.observer_dim() + if self.riccati_online() { 36 } else { 0 }
    }

    fn initial_state(&self, s0: &RigidBodyState) -> VecN {
        let mut x = VecN::zeros(self.dim());
        s0.write_flat(&mut x.as_mut_slice()[..PLANT]);
        let obs = &mut x.as_mut_slice()[PLANT..];
        match &self.observer {
            ObserverConfig::None => {}
            ObserverConfig::Kalman { z0, p0, .. } => {
                obs[..6].copy_from_slice(z0);
                if self.riccati_online() {
                    obs[6..].copy_from_slice(&linalg::sym_n(p0).transpose().as_slice()[..36]);
                }
            }
            ObserverConfig::NonKalman { z0, .. } => obs.copy_from_slice(z0),
            ObserverConfig::Nonlinear { xhat0, p0, .. } => {
                xhat0.write_flat(&mut obs[..PLANT]);
                obs[PLANT..].copy_from_slice(&linalg::sym_n(p0).transpose().as_slice()[..36]);
            }
        }
        x
    }

    fn p_of(&self, x: &VecN) -> Option<MatN> {
        self.riccati_online().then(|| {
            let off = PLANT + self.observer_dim();
            MatN::from_row_slice(6, 6, &x.as_slice()[off..off + 36])
        })
    }

    /// Observer estimate `(Z_k^∨, ΔΩ)` read from the combined state.
    fn estimate(&self, t: f64, x: &VecN) -> Option<[f64; 6]> {
        let obs = &x.as_slice()[PLANT..];
        match self.observer {
            ObserverConfig::None => None,
            ObserverConfig::Kalman { .. } | ObserverConfig::NonKalman { .. } => {
                let mut z = [0.0; 6];
                z.copy_from_slice(&obs[..6]);
                Some(z)
            }
            ObserverConfig::Nonlinear { .. } => {
                let xhat = RigidBodyState::from_flat(&obs[..PLANT]);
                Some(error_coords(&xhat, &self.reference, t).reduced())
            }
        }
    }

    fn control(&self, t: f64, x: &VecN) -> Vec3 {
        let (r, j, g) = (&self.reference, &self.inertia, &self.gains);
        match self.estimate(t, x) {
            Some(z) => observer_based_controller(&z, r, t, j, g),
            None => {
                let s = RigidBodyState::from_flat(&x.as_slice()[..PLANT]);
                full_state_controller(&error_coords(&s, r, t), r, t, j, g)
            }
        }
    }

    fn rhs(
        &self,
        t: f64,
        x: &VecN,
        weights: &Option<(MatN, MatN)>,
        schedule: &Option<RiccatiSchedule>,
    ) -> VecN {
        let mut dx = VecN::zeros(x.len());
        let s = RigidBodyState::from_flat(&x.as_slice()[..PLANT]);
        let u = self.control(t, x);
        let (j, reference) = (&self.inertia, &self.reference);
        extended_dynamics(&s, &u, j, self.gains.k_e()).write_flat(&mut dx.as_mut_slice()[..PLANT]);

        let p = self.p_of(x);
        let online_gain = || {
            let (_, r_inv) = weights.as_ref().expect("weights are set for Riccati observers");
            kalman_gain(p.as_ref().expect("P is part of the state"), &output_matrix(), r_inv)
        };
        let gain = match &self.observer {
            ObserverConfig::None => return dx,
            ObserverConfig::Kalman { mode: GainMode::Online, .. } | ObserverConfig::Nonlinear { .. } => {
                online_gain()
            }
            ObserverConfig::Kalman { mode: GainMode::Precomputed, .. } => schedule
                .as_ref()
                .expect("schedule is set for precomputed gains")
                .gain_at(t),
            ObserverConfig::NonKalman { m1, m2, .. } => nonkalman_gain(reference, t, j, m1, m2)
                .expect("M1 and M2 are validated before integration"),
        };

        let a = reduced_a(reference, j, t);
        let out = dx.as_mut_slice();
        match &self.observer {
            ObserverConfig::Nonlinear { .. } => {
                let xhat = RigidBodyState::from_flat(&x.as_slice()[PLANT..2 * PLANT]);
                nonlinear_state_observer_rhs(&xhat, &u, &s.r, &gain, reference, t, j, self.gains.k_e())
                    .write_flat(&mut out[PLANT..2 * PLANT]);
            }
            _ => {
                let z = self.estimate(t, x).expect("linear observers carry z_o");
                let (_, dy_k) = measured_outputs(&s.r, reference, t);
                let dz = tracking_error_observer_rhs(&z, &(u - reference.u0(t)), &dy_k, &a, &reduced_b(j), &gain);
                out[PLANT..PLANT + 6].copy_from_slice(dz.as_slice());
            }
        }
        if let (Some(p), Some((q, r_inv))) = (p, weights) {
            let dp = riccati_rhs_with_inverse(&p, &a, &output_matrix(), r_inv, q);
            let off = PLANT + self.observer_dim();
            out[off..off + 36].copy_from_slice(dp.transpose().as_slice());
        }
        dx
    }

    fn validate(&self) -> Result<(), RigidBodyError> {
        match &self.observer {
            ObserverConfig::NonKalman { m1, m2, .. } => {
                nonkalman_gain(&self.reference, 0.0, &self.inertia, m1, m2).map(|_| ())
            }
            ObserverConfig::Kalman { q, r, p0, .. } | ObserverConfig::Nonlinear { q, r, p0, .. } => {
                for (what, m, n) in [("Q", q, 6), ("R", r, 3), ("P0", p0, 6)] {
                    if m.shape() != (n, n) {
                        return Err(LtvError::DimensionMismatch {
                            what,
                            expected: (n, n),
                            got: m.shape(),
                        }
                        .into());
                    }
                }
                weight_inverse(r)?;
                check_positive(0.0, &linalg::sym_n(p0))?;
                Ok(())
            }
            ObserverConfig::None => Ok(()),
        }
    }

    /// Integrate from the plant state `s0`, sampling every `opts.step.h`.
    /// Any failure during integration is returned as the error.
    pub fn simulate(&self, s0: &RigidBodyState, opts: &SimOptions) -> Result<ClosedLoopRun, RigidBodyError> {
        let run = self.simulate_recorded(s0, opts)?;
        match run.abort {
            Some(e) => Err(e),
            None => Ok(run),
        }
    }

    /// Like [`ClosedLoop::simulate`], but a failure during integration ends the
    /// run early and is stored in [`ClosedLoopRun::abort`] alongside the samples
    /// taken so far. Setup errors are still returned directly.
    pub fn simulate_recorded(
        &self,
        s0: &RigidBodyState,
        opts: &SimOptions,
    ) -> Result<ClosedLoopRun, RigidBodyError> {
        self.validate()?;
        let weights = match &self.observer {
            ObserverConfig::Kalman { q, r, .. } | ObserverConfig::Nonlinear { q, r, .. } => {
                Some((linalg::sym_n(q), weight_inverse(r)?))
            }
            _ => None,
        };
        let schedule = match &self.observer {
            ObserverConfig::Kalman { q, r, p0, mode: GainMode::Precomputed, .. } => {
                let m = super::linearized_model(&self.reference, &self.inertia);
                Some(integrate_riccati(
                    &m,
                    p0,
                    |_| q.clone(),
                    |_| r.clone(),
                    opts.t0,
                    opts.tf,
                    opts.step,
                )?)
            }
            _ => None,
        };

        let n = opts.step.intervals(opts.t0, opts.tf)?;
        let inner = opts.step.inner();
        let field = FnField::new(self.dim(), |t, x: &VecN| self.rhs(t, x, &weights, &schedule));
        let mut x = self.initial_state(s0);
        let mut run = ClosedLoopRun {
            samples: Vec::with_capacity(n + 1),
            domain_warnings: Vec::new(),
            abort: None,
        };
        let mut inside = true;
        let mut body = |run: &mut ClosedLoopRun| -> Result<(), RigidBodyError> {
            self.check_step(opts.t0, &x, opts, &mut inside, &mut run.domain_warnings)?;
            run.samples.push(self.sample(opts.t0, &x));
            for i in 0..n {
                let base = opts.t0 + i as f64 * opts.step.h;
                for k in 0..opts.step.substeps {
                    let t = base + k as f64 * inner;
                    x = rk4_step(&field, t, &x, inner)?;
                    if self.riccati_online() {
                        let off = PLANT + self.observer_dim();
                        let p = linalg::sym_n(&MatN::from_row_slice(6, 6, &x.as_slice()[off..off + 36]));
                        x.as_mut_slice()[off..off + 36].copy_from_slice(p.transpose().as_slice());
                    }
                    self.check_step(t + inner, &x, opts, &mut inside, &mut run.domain_warnings)?;
                }
                let t = opts.t0 + (i + 1) as f64 * opts.step.h;
                run.samples.push(self.sample(t, &x));
            }
            Ok(())
        };
        if let Err(e) = body(&mut run) {
            run.abort = Some(e);
        }
        Ok(run)
    }

    fn check_step(
        &self,
        t: f64,
        x: &VecN,
        opts: &SimOptions,
        inside: &mut bool,
        warnings: &mut Vec<f64>,
    ) -> Result<(), RigidBodyError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFiniteState { t }.into());
        }
        let norm = x.norm();
        if norm > DIVERGENCE_BOUND {
            return Err(OdeError::Diverged { t, norm }.into());
        }
        if let Some(p) = self.p_of(x) {
            check_positive(t, &p)?;
        }
        let s = RigidBodyState::from_flat(&x.as_slice()[..PLANT]);
        match check_domain(t, &s) {
            Ok(()) => *inside = true,
            Err(e) if opts.abort_on_domain_exit => return Err(e),
            Err(_) => {
                if *inside {
                    log::warn!("attitude left GL+(3) at t = {t}");
                    warnings.push(t);
                }
                *inside = false;
            }
        }
        Ok(())
    }

    fn sample(&self, t: f64, x: &VecN) -> Sample {
        Sample {
            t,
            state: RigidBodyState::from_flat(&x.as_slice()[..PLANT]),
            z_o: self.estimate(t, x),
            u: self.control(t, x),
        }
    }
}

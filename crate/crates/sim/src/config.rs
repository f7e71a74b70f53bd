//! Scenario files: TOML with matrix shorthands.

use embedtrack_core::linalg::{rodrigues_exp, Mat3, MatN, Vec3};
use embedtrack_core::ode::StepSize;
use embedtrack_core::rigidbody::{
    paper_reference, ClosedLoop, ControllerGains, GainMode, InertiaMatrix, ObserverConfig,
    RigidBodyState, RigidReference, SimOptions,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// A square matrix given as `scalar_times_identity = s`, `diag = [..]` or
/// `matrix = [[..], ..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    ScalarTimesIdentity { scalar_times_identity: f64 },
    Diag { diag: Vec<f64> },
    Matrix { matrix: Vec<Vec<f64>> },
}

impl MatrixSpec {
    pub fn scalar(s: f64) -> Self {
        Self::ScalarTimesIdentity {
            scalar_times_identity: s,
        }
    }

    pub fn to_matrix(&self, field: &str, n: usize) -> Result<MatN, ConfigError> {
        let m = match self {
            Self::ScalarTimesIdentity {
                scalar_times_identity: s,
            } => MatN::identity(n, n) * *s,
            Self::Diag { diag } => {
                if diag.len() != n {
                    return Err(invalid(field, format!("diag needs {n} entries, got {}", diag.len())));
                }
                MatN::from_diagonal(&embedtrack_core::linalg::VecN::from_row_slice(diag))
            }
            Self::Matrix { matrix } => {
                if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
                    return Err(invalid(field, format!("matrix must be {n}x{n}")));
                }
                MatN::from_fn(n, n, |i, j| matrix[i][j])
            }
        };
        if m.iter().any(|v| !v.is_finite()) {
            return Err(invalid(field, "entries must be finite"));
        }
        Ok(m)
    }

    fn to_mat3(&self, field: &str) -> Result<Mat3, ConfigError> {
        let m = self.to_matrix(field, 3)?;
        Ok(Mat3::from_fn(|i, j| m[(i, j)]))
    }
}

/// An attitude given as axis/angle (radians), axis/`angle_pi` (multiples of π),
/// or an explicit 3×3 matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttitudeSpec {
    AxisAngle {
        axis: [f64; 3],
        angle: f64,
    },
    AxisAnglePi {
        axis: [f64; 3],
        angle_pi: f64,
    },
    Matrix {
        matrix: [[f64; 3]; 3],
    },
}

impl AttitudeSpec {
    pub fn to_matrix(&self, field: &str) -> Result<Mat3, ConfigError> {
        let from_axis = |axis: &[f64; 3], angle: f64| {
            let a = Vec3::from_row_slice(axis);
            if !(a.norm() > 0.0) || !angle.is_finite() {
                return Err(invalid(field, "axis must be non-zero and angle finite"));
            }
            rodrigues_exp(&a.normalize(), angle).map_err(|e| invalid(field, e.to_string()))
        };
        match self {
            Self::AxisAngle { axis, angle } => from_axis(axis, *angle),
            Self::AxisAnglePi { axis, angle_pi } => from_axis(axis, angle_pi * std::f64::consts::PI),
            Self::Matrix { matrix } => {
                let m = Mat3::from_fn(|i, j| matrix[i][j]);
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(invalid(field, "entries must be finite"));
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    /// Principal moments of inertia.
    pub inertia: [f64; 3],
    pub k_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub k_p: f64,
    pub k_d: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    Paper,
    ConstantRate {
        omega: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attitude: Option<AttitudeSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub attitude: AttitudeSpec,
    pub omega: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainModeSpec {
    #[default]
    Online,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObserverSpec {
    None,
    Kalman {
        z0: [f64; 6],
        q: MatrixSpec,
        r: MatrixSpec,
        p0: MatrixSpec,
        #[serde(default)]
        gain_mode: GainModeSpec,
    },
    Nonkalman {
        z0: [f64; 6],
        m1: MatrixSpec,
        m2: MatrixSpec,
    },
    Nonlinear {
        /// Initial estimate; the reference state at `t0` when omitted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<StateSpec>,
        q: MatrixSpec,
        r: MatrixSpec,
        p0: MatrixSpec,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t0: f64,
    pub tf: f64,
    pub h: f64,
    /// RK4 steps per sample interval.
    #[serde(default = "one")]
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    pub reference: ReferenceSpec,
    pub initial: StateSpec,
    pub observer: ObserverSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub abort_on_domain_exit: bool,
}

/// Everything needed to run a scenario.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub closed_loop: ClosedLoop,
    pub initial: RigidBodyState,
    pub options: SimOptions,
}

impl Scenario {
    /// The published rigid-body experiment over `[0, 20]`.
    pub fn paper() -> Self {
        Self {
            name: Some("paper".into()),
            plant: PlantSpec {
                inertia: [3.0, 2.0, 1.0],
                k_e: 1.0,
            },
            controller: ControllerSpec {
                k_p: 4.0,
                k_d: MatrixSpec::scalar(4.0),
            },
            reference: ReferenceSpec::Paper,
            initial: StateSpec {
                attitude: AttitudeSpec::AxisAnglePi {
                    axis: [0.0, 1.0, 0.0],
                    angle_pi: 0.9,
                },
                omega: [1.0, 1.0, 1.0],
            },
            observer: ObserverSpec::Kalman {
                z0: [0.0, 0.0, 0.0, 1.0, 2.0, 1.0],
                q: MatrixSpec::scalar(100.0),
                r: MatrixSpec::scalar(0.01),
                p0: MatrixSpec::scalar(100.0),
                gain_mode: GainModeSpec::Online,
            },
            time: TimeSpec {
                t0: 0.0,
                tf: 20.0,
                h: 1e-3,
                substeps: 20,
            },
            abort_on_domain_exit: true,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let s: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        s.assemble()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenarios serialize to TOML")
    }

    pub fn inertia(&self) -> Result<InertiaMatrix, ConfigError> {
        InertiaMatrix::diagonal(self.plant.inertia)
            .map_err(|_| invalid("plant.inertia", "moments must be positive and finite"))
    }

    pub fn reference(&self) -> Result<RigidReference, ConfigError> {
        let inertia = self.inertia()?;
        let r = match &self.reference {
            ReferenceSpec::Paper if self.plant.inertia == [3.0, 2.0, 1.0] => paper_reference(),
            ReferenceSpec::Paper => RigidReference::paper_with_inertia(inertia),
            ReferenceSpec::ConstantRate { omega, attitude } => {
                let r0 = match attitude {
                    Some(a) => a.to_matrix("reference.attitude")?,
                    None => Mat3::identity(),
                };
                RigidReference::constant_rate(inertia, r0, Vec3::from_row_slice(omega))
            }
        };
        r.map_err(|e| invalid("reference", e.to_string()))
    }

    pub fn step(&self) -> StepSize {
        StepSize::with_substeps(self.time.h, self.time.substeps.max(1))
    }

    fn spd(m: &MatN, field: &str) -> Result<(), ConfigError> {
        let sym = (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
        if !sym || m.clone().cholesky().is_none() {
            return Err(invalid(field, "must be symmetric positive definite"));
        }
        Ok(())
    }

    /// Validate and build the closed loop, initial state and integration options.
    pub fn assemble(&self) -> Result<Assembled, ConfigError> {
        let t = &self.time;
        if !(t.t0.is_finite() && t.tf.is_finite() && t.tf > t.t0) {
            return Err(invalid("time.tf", "must be finite and greater than time.t0"));
        }
        if !(t.h > 0.0 && t.h.is_finite()) {
            return Err(invalid("time.h", "must be positive"));
        }
        if t.substeps == 0 {
            return Err(invalid("time.substeps", "must be at least 1"));
        }
        self.step()
            .intervals(t.t0, t.tf)
            .map_err(|e| invalid("time.h", e.to_string()))?;
        if !(self.plant.k_e > 0.0 && self.plant.k_e.is_finite()) {
            return Err(invalid("plant.k_e", "must be positive"));
        }
        let inertia = self.inertia()?;
        let reference = self.reference()?;
        let k_d = self.controller.k_d.to_mat3("controller.k_d")?;
        let gains = ControllerGains::new(self.controller.k_p, k_d, self.plant.k_e).map_err(|e| {
            let field = if self.controller.k_p > 0.0 { "controller.k_d" } else { "controller.k_p" };
            invalid(field, e.to_string())
        })?;
        let state = |s: &StateSpec, field: &str| -> Result<RigidBodyState, ConfigError> {
            let r = s.attitude.to_matrix(&format!("{field}.attitude"))?;
            if s.omega.iter().any(|v| !v.is_finite()) {
                return Err(invalid(&format!("{field}.omega"), "entries must be finite"));
            }
            Ok(RigidBodyState::new(r, Vec3::from_row_slice(&s.omega)))
        };
        let initial = state(&self.initial, "initial")?;
        let weights = |q: &MatrixSpec, r: &MatrixSpec, p0: &MatrixSpec| {
            let q = q.to_matrix("observer.q", 6)?;
            let r = r.to_matrix("observer.r", 3)?;
            let p0 = p0.to_matrix("observer.p0", 6)?;
            let sym = (&q - q.transpose()).amax() <= 1e-12 * q.amax().max(1.0);
            if !sym || q.symmetric_eigenvalues().min() < 0.0 {
                return Err(invalid("observer.q", "must be symmetric positive semidefinite"));
            }
            Self::spd(&r, "observer.r")?;
            Self::spd(&p0, "observer.p0")?;
            Ok::<_, ConfigError>((q, r, p0))
        };
        let observer = match &self.observer {
            ObserverSpec::None => ObserverConfig::None,
            ObserverSpec::Kalman {
                z0,
                q,
                r,
                p0,
                gain_mode,
            } => {
                let (q, r, p0) = weights(q, r, p0)?;
                ObserverConfig::Kalman {
                    z0: *z0,
                    q,
                    r,
                    p0,
                    mode: match gain_mode {
                        GainModeSpec::Online => GainMode::Online,
                        GainModeSpec::Precomputed => GainMode::Precomputed,
                    },
                }
            }
            ObserverSpec::Nonkalman { z0, m1, m2 } => {
                let m1 = m1.to_mat3("observer.m1")?;
                let m2 = m2.to_mat3("observer.m2")?;
                Self::spd(&MatN::from_fn(3, 3, |i, j| m1[(i, j)]), "observer.m1")?;
                Self::spd(&MatN::from_fn(3, 3, |i, j| m2[(i, j)]), "observer.m2")?;
                ObserverConfig::NonKalman { z0: *z0, m1, m2 }
            }
            ObserverSpec::Nonlinear { initial, q, r, p0 } => {
                let (q, r, p0) = weights(q, r, p0)?;
                let xhat0 = match initial {
                    Some(s) => state(s, "observer.initial")?,
                    None => RigidBodyState::new(reference.r0(t.t0), reference.omega0(t.t0)),
                };
                ObserverConfig::Nonlinear { xhat0, q, r, p0 }
            }
        };
        if let ObserverSpec::Kalman { z0, .. } | ObserverSpec::Nonkalman { z0, .. } = &self.observer {
            if z0.iter().any(|v| !v.is_finite()) {
                return Err(invalid("observer.z0", "entries must be finite"));
            }
        }
        Ok(Assembled {
            closed_loop: ClosedLoop {
                inertia,
                gains,
                reference,
                observer,
            },
            initial,
            options: SimOptions {
                t0: t.t0,
                tf: t.tf,
                step: self.step(),
                abort_on_domain_exit: self.abort_on_domain_exit,
            },
        })
    }
}

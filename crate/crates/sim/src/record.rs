//! Per-step run records, the CSV trace and the key=value summary.

use embedtrack_core::linalg::{frob_norm, Mat3};
use embedtrack_core::ltv::decay_rate_fit_series;
use embedtrack_core::rigidbody::{v_tilde, ClosedLoop, ClosedLoopRun};
use std::fmt::Write as _;

pub const CSV_HEADER: &str =
    "t,dR_norm,dOmega_norm,eo_norm,Vtilde,orth_drift,u1,u2,u3,zo1,zo2,zo3,zo4,zo5,zo6";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub t: f64,
    pub dr_norm: f64,
    pub domega_norm: f64,
    /// Observer error norm; zero for full-state feedback.
    pub eo_norm: f64,
    pub v_tilde: f64,
    pub orth_drift: f64,
    pub u: [f64; 3],
    /// Observer estimate; zero for full-state feedback.
    pub z_o: [f64; 6],
}

impl Row {
    /// `√(‖ΔR‖² + ‖ΔΩ‖²)`.
    pub fn tracking_norm(&self) -> f64 {
        self.dr_norm.hypot(self.domega_norm)
    }

    fn fields(&self) -> impl Iterator<Item = f64> + '_ {
        [
            self.t,
            self.dr_norm,
            self.domega_norm,
            self.eo_norm,
            self.v_tilde,
            self.orth_drift,
        ]
        .into_iter()
        .chain(self.u)
        .chain(self.z_o)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<Row>,
    pub has_observer: bool,
    pub domain_warnings: Vec<f64>,
    /// Reason the run stopped before `tf`.
    pub abort: Option<String>,
}

/// Decay of a norm series: the `< 1 %` endpoint test plus the log-linear fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCheck {
    pub initial: f64,
    pub last: f64,
    pub rate: f64,
    pub r2: f64,
    pub passed: bool,
}

impl DecayCheck {
    pub fn of(times: &[f64], norms: &[f64]) -> Self {
        let initial = norms.first().copied().unwrap_or(f64::NAN);
        let last = norms.last().copied().unwrap_or(f64::NAN);
        let (rate, r2) = decay_rate_fit_series(times, norms)
            .map(|f| (f.rate, f.r2))
            .unwrap_or((f64::NAN, f64::NAN));
        let passed = last < 0.01 * initial && rate < 0.0 && r2 > 0.95;
        Self {
            initial,
            last,
            rate,
            r2,
            passed,
        }
    }
}

impl RunRecord {
    pub fn from_run(cl: &ClosedLoop, run: &ClosedLoopRun) -> Self {
        let rows = run
            .samples
            .iter()
            .map(|s| {
                let r0 = cl.reference.r0(s.t);
                let r = &s.state.r;
                Row {
                    t: s.t,
                    dr_norm: frob_norm(&(r - r0)),
                    domega_norm: (s.state.omega - cl.reference.omega0(s.t)).norm(),
                    eo_norm: s.observation_error(&cl.reference).unwrap_or(0.0),
                    v_tilde: v_tilde(r, cl.gains.k_e()),
                    orth_drift: frob_norm(&(r.transpose() * r - Mat3::identity())),
                    u: [s.u.x, s.u.y, s.u.z],
                    z_o: s.z_o.unwrap_or([0.0; 6]),
                }
            })
            .collect();
        Self {
            rows,
            has_observer: run.samples.first().is_some_and(|s| s.z_o.is_some()),
            domain_warnings: run.domain_warnings.clone(),
            abort: run.abort.as_ref().map(|e| e.to_string()),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn tracking_norms(&self) -> Vec<f64> {
        self.rows.iter().map(Row::tracking_norm).collect()
    }

    pub fn observer_norms(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eo_norm).collect()
    }

    pub fn tracking_decay(&self) -> DecayCheck {
        DecayCheck::of(&self.times(), &self.tracking_norms())
    }

    pub fn observer_decay(&self) -> Option<DecayCheck> {
        self.has_observer
            .then(|| DecayCheck::of(&self.times(), &self.observer_norms()))
    }

    /// The trace as CSV; floats carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 15 * 24);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.fields().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// `key=value` lines describing the run.
    pub fn summary(&self, name: &str) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
        put("scenario", name.to_string());
        put("rows", self.rows.len().to_string());
        put("status", if self.abort.is_some() { "aborted" } else { "ok" }.into());
        put("abort_reason", self.abort.clone().unwrap_or_else(|| "none".into()));
        put("domain_warnings", self.domain_warnings.len().to_string());
        if let (Some(first), Some(last)) = (self.rows.first(), self.rows.last()) {
            put("t_final", format!("{:e}", last.t));
            put("initial_attitude_error", format!("{:.6}", first.dr_norm));
            put("final_dR_norm", format!("{:e}", last.dr_norm));
            put("final_dOmega_norm", format!("{:e}", last.domega_norm));
            put("final_eo_norm", format!("{:e}", last.eo_norm));
            let drift = self.rows.iter().map(|r| r.orth_drift).fold(0.0, f64::max);
            put("max_orth_drift", format!("{drift:e}"));
        }
        let mut decay = |prefix: &str, d: Option<DecayCheck>| match d {
            Some(d) => {
                put(&format!("{prefix}_initial"), format!("{:e}", d.initial));
                put(&format!("{prefix}_final"), format!("{:e}", d.last));
                put(&format!("{prefix}_rate"), format!("{:e}", d.rate));
                put(&format!("{prefix}_r2"), format!("{:.6}", d.r2));
                put(&format!("{prefix}_decay"), pass(d.passed));
            }
            None => put(&format!("{prefix}_decay"), "n/a".into()),
        };
        decay("tracking", Some(self.tracking_decay()));
        decay("observer", self.observer_decay());
        kv
    }
}

pub fn pass(ok: bool) -> String {
    if ok { "pass" } else { "fail" }.to_string()
}

pub fn format_kv(kv: &[(String, String)]) -> String {
    kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

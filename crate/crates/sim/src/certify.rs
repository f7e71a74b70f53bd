//! Numerical certificates for a scenario's plant and linearized model.

use crate::record::pass;
use embedtrack_core::embedding::{
    check_tangency, estimate_decay_constant, gradient_check, unforced_flow,
    verify_exponential_decay, EmbeddedSystem,
};
use embedtrack_core::linalg::{rodrigues_exp, Mat3, MatN, Vec3, VecN};
use embedtrack_core::ltv::{check_uniform_complete, GramianKind};
use embedtrack_core::ode::integrate;
use embedtrack_core::rigidbody::{
    linearized_model, InertiaMatrix, RigidBodyEmbedding, RigidBodyState, RigidReference,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};
use std::str::FromStr;

/// Seed for every sampled certificate, so reports are reproducible.
pub const SEED: u64 = 20_240_601;
pub const TANGENCY_TOL: f64 = 1e-10;
/// Gramian grid size over one window.
pub const GRID_POINTS: usize = 8;
/// Multiplicative slack of the sublevel decay bound.
pub const DECAY_SLACK: f64 = 0.05;
/// Initial conformal scaling of the decay runs.
pub const DECAY_SCALE: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Uco,
    Ucc,
    Decay,
    Gradient,
    Tangency,
}

impl FromStr for Which {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uco" => Ok(Self::Uco),
            "ucc" => Ok(Self::Ucc),
            "decay" => Ok(Self::Decay),
            "gradient" => Ok(Self::Gradient),
            "tangency" => Ok(Self::Tangency),
            _ => Err(format!(
                "unknown certificate {s:?} (expected uco, ucc, decay, gradient or tangency)"
            )),
        }
    }
}

impl Which {
    pub fn name(self) -> &'static str {
        match self {
            Self::Uco => "uco",
            Self::Ucc => "ucc",
            Self::Decay => "decay",
            Self::Gradient => "gradient",
            Self::Tangency => "tangency",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub passed: bool,
    pub entries: Vec<(String, String)>,
}

impl Report {
    fn new(which: Which) -> Self {
        Self {
            passed: false,
            entries: vec![("certificate".into(), which.name().into())],
        }
    }
    fn put(&mut self, k: &str, v: impl ToString) {
        self.entries.push((k.into(), v.to_string()));
    }
    fn finish(mut self, passed: bool) -> Self {
        self.passed = passed;
        self.put("result", pass(passed));
        self
    }
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Haar-distributed rotation from a uniformly sampled unit quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n2: f64 = q.iter().map(|v| v * v).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            let [w, x, y, z] = q.map(|v| v / n);
            return Mat3::new(
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            );
        }
    }
}

/// Random ambient state with `R ∈ GL⁺(3)`.
pub fn random_gl_plus_state(rng: &mut impl Rng) -> VecN {
    loop {
        let r = Mat3::from_fn(|_, _| rng.random_range(-1.5..1.5));
        if r.determinant() > 0.05 {
            let w = Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            return RigidBodyState::new(r, w).to_flat();
        }
    }
}

pub fn gramian(
    reference: &RigidReference,
    inertia: &InertiaMatrix,
    kind: GramianKind,
    h: f64,
) -> Result<Report, embedtrack_core::ltv::LtvError> {
    let which = match kind {
        GramianKind::Observability => Which::Uco,
        GramianKind::Controllability => Which::Ucc,
    };
    let mut model = linearized_model(reference, inertia);
    if kind == GramianKind::Controllability {
        // Input matrix D = I₆ acting on the full reduced state.
        model = model.with_input(6, |_| MatN::identity(6, 6));
    }
    let sigma = reference.period().unwrap_or(TAU);
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| sigma * i as f64 / GRID_POINTS as f64)
        .collect();
    let cert = check_uniform_complete(&model, kind, sigma, &grid, h)?;
    let mut rep = Report::new(which);
    rep.put("kind", kind);
    rep.put("sigma", format!("{sigma:e}"));
    rep.put("grid_points", grid.len());
    rep.put("h", format!("{h:e}"));
    rep.put("alpha1", format!("{:e}", cert.alpha1));
    rep.put("alpha2", format!("{:e}", cert.alpha2));
    if let Some((a3, a4)) = cert.transported {
        rep.put("alpha3", format!("{a3:e}"));
        rep.put("alpha4", format!("{a4:e}"));
    }
    rep.put("grid_limited", cert.grid_limited);
    Ok(rep.finish(cert.passed))
}

/// Outcome of the sublevel decay certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayRun {
    pub b_hat: f64,
    /// Decay constant from conformal samples `(1 + ε)Q` only.
    pub b_conformal: f64,
    /// Smallest `ε` among the conformal samples.
    pub eps_min: f64,
    pub runs: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

/// Open-loop decay from `1.05·Q` for `runs` random rotations, bounded with
/// `b̂` estimated from `samples` points of the sublevel set `Ṽ < Ṽ(1.05 I)`.
pub fn decay_certificate(
    inertia: &InertiaMatrix,
    k_e: f64,
    runs: usize,
    samples: usize,
    horizon: f64,
    h: f64,
) -> Result<DecayRun, String> {
    let sys = RigidBodyEmbedding {
        inertia: *inertia,
        k_e,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let level = sys.constraint(&RigidBodyState::new(Mat3::identity() * DECAY_SCALE, Vec3::zeros()).to_flat());
    let mut general = Vec::with_capacity(samples);
    while general.len() < samples {
        let e = Mat3::from_fn(|_, _| rng.random_range(-0.05..0.05));
        let x = RigidBodyState::new(random_rotation(&mut rng) * (Mat3::identity() + e), Vec3::zeros()).to_flat();
        let v = sys.constraint(&x);
        if v < level && v > 1e-10 {
            general.push(x);
        }
    }
    let mut eps_min = f64::INFINITY;
    let conformal: Vec<VecN> = (0..samples)
        .map(|_| {
            let eps = rng.random_range(1e-3..DECAY_SCALE - 1.0);
            eps_min = eps_min.min(eps);
            RigidBodyState::new(random_rotation(&mut rng) * (1.0 + eps), Vec3::zeros()).to_flat()
        })
        .collect();
    let b_hat = estimate_decay_constant(&sys, level, &general).map_err(|e| e.to_string())?.b;
    let b_conformal = estimate_decay_constant(&sys, level, &conformal)
        .map_err(|e| e.to_string())?
        .b;
    let mut violations = 0;
    let mut worst_margin = f64::INFINITY;
    for _ in 0..runs {
        let x0 = RigidBodyState::new(random_rotation(&mut rng) * DECAY_SCALE, Vec3::zeros()).to_flat();
        let tr = integrate(&unforced_flow(&sys), 0.0, &x0, horizon, h).map_err(|e| e.to_string())?;
        let rep = verify_exponential_decay(&tr, |x| sys.constraint(x), b_hat, DECAY_SLACK);
        violations += rep.violations;
        worst_margin = worst_margin.min(rep.worst_margin);
    }
    Ok(DecayRun {
        b_hat,
        b_conformal,
        eps_min,
        runs,
        violations,
        worst_margin,
    })
}

pub fn decay(inertia: &InertiaMatrix, k_e: f64, h: f64) -> Result<Report, String> {
    let run = decay_certificate(inertia, k_e, 10, 1000, 5.0, h)?;
    let mut rep = Report::new(Which::Decay);
    rep.put("k_e", k_e);
    rep.put("b_hat", format!("{:e}", run.b_hat));
    rep.put("b_conformal", format!("{:e}", run.b_conformal));
    rep.put("b_conformal_oracle", format!("{:e}", 4.0 * k_e * (1.0 + run.eps_min).powi(2)));
    rep.put("runs", run.runs);
    rep.put("violations", run.violations);
    rep.put("worst_margin", format!("{:e}", run.worst_margin));
    Ok(rep.finish(run.violations == 0))
}

pub fn gradient(inertia: &InertiaMatrix, k_e: f64) -> Result<Report, String> {
    let sys = RigidBodyEmbedding {
        inertia: *inertia,
        k_e,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let samples: Vec<VecN> = (0..100).map(|_| random_gl_plus_state(&mut rng)).collect();
    let g = gradient_check(&sys, &samples, 1e-6).map_err(|e| e.to_string())?;
    let mut rep = Report::new(Which::Gradient);
    rep.put("samples", samples.len());
    rep.put("max_rel_error", format!("{:e}", g.max_rel_error));
    rep.put("tol", format!("{:e}", g.tol));
    Ok(rep.finish(g.passed))
}

pub fn tangency(inertia: &InertiaMatrix, k_e: f64) -> Report {
    let sys = RigidBodyEmbedding {
        inertia: *inertia,
        k_e,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let samples: Vec<(VecN, VecN)> = (0..100)
        .map(|_| {
            let x = random_gl_plus_state(&mut rng);
            let u = VecN::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
            (x, u)
        })
        .collect();
    let t = check_tangency(&sys, &samples, TANGENCY_TOL);
    let mut rep = Report::new(Which::Tangency);
    rep.put("samples", t.samples);
    rep.put("max_residual", format!("{:e}", t.max_residual));
    rep.put("tol", format!("{:e}", t.tol));
    rep.finish(t.passed)
}

/// Largest `‖R₁ − R₂‖` over `pairs` random rotation pairs.
pub fn max_rotation_distance(pairs: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    (0..pairs)
        .map(|_| (random_rotation(&mut rng) - random_rotation(&mut rng)).norm())
        .fold(0.0, f64::max)
}

/// `‖R − Q‖` for the rotation `exp(θ ê₂)` against the identity.
pub fn attitude_distance_e2(theta_pi: f64) -> f64 {
    (rodrigues_exp(&Vec3::y(), theta_pi * PI).unwrap() - Mat3::identity()).norm()
}

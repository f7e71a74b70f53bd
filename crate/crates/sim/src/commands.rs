//! The CLI's commands, returning exit statuses instead of exiting.

use crate::certify::{self, Report, Which};
use crate::config::{ConfigError, ObserverSpec, Scenario};
use crate::plot::{log_plot, Series};
use crate::record::{format_kv, RunRecord};
use embedtrack_core::linalg::MatN;
use embedtrack_core::ltv::{integrate_riccati, GramianKind};
use embedtrack_core::rigidbody::{linearized_model, nonkalman_gain};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok = 0,
    ConfigError = 1,
    Numerical = 2,
    CertificateFailed = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Numerical(String),
}

impl CommandError {
    pub fn status(&self) -> Status {
        match self {
            Self::Config(_) => Status::ConfigError,
            Self::Io { .. } | Self::Numerical(_) => Status::Numerical,
        }
    }
}

fn write(dir: &Path, file: &str, contents: &str) -> Result<PathBuf, CommandError> {
    let io = |source| CommandError::Io {
        path: dir.join(file),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let path = dir.join(file);
    std::fs::write(&path, contents).map_err(io)?;
    Ok(path)
}

/// Result of a simulate-type command.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub record: RunRecord,
    pub summary: Vec<(String, String)>,
    pub status: Status,
}

pub fn simulate(scenario: &Scenario, out: &Path) -> Result<SimOutcome, CommandError> {
    let assembled = scenario.assemble()?;
    let name = scenario.name.clone().unwrap_or_else(|| "scenario".into());
    log::info!("simulating {name} over [{}, {}]", assembled.options.t0, assembled.options.tf);
    let run = assembled
        .closed_loop
        .simulate_recorded(&assembled.initial, &assembled.options)
        .map_err(|e| CommandError::Numerical(e.to_string()))?;
    let record = RunRecord::from_run(&assembled.closed_loop, &run);
    let summary = record.summary(&name);
    write(out, "trace.csv", &record.to_csv())?;
    write(out, "summary.txt", &format_kv(&summary))?;
    let status = if record.abort.is_some() {
        Status::Numerical
    } else {
        Status::Ok
    };
    Ok(SimOutcome {
        record,
        summary,
        status,
    })
}

pub fn errors_svg(record: &RunRecord) -> String {
    let times = record.times();
    let tracking = record.tracking_norms();
    let observer = record.observer_norms();
    let mut series = vec![Series {
        label: "tracking error",
        color: "#1f77b4",
        values: &tracking,
    }];
    if record.has_observer {
        series.push(Series {
            label: "observation error",
            color: "#d62728",
            values: &observer,
        });
    }
    log_plot("Tracking and observation errors", &times, &series)
}

pub fn reproduce_paper(out: &Path) -> Result<SimOutcome, CommandError> {
    let outcome = simulate(&Scenario::paper(), out)?;
    write(out, "errors.svg", &errors_svg(&outcome.record))?;
    Ok(outcome)
}

pub fn certify(scenario: &Scenario, which: Which, out: &Path) -> Result<Report, CommandError> {
    let assembled = scenario.assemble()?;
    let cl = &assembled.closed_loop;
    let (inertia, k_e, h) = (&cl.inertia, cl.gains.k_e(), scenario.time.h);
    let numerical = CommandError::Numerical;
    let report = match which {
        Which::Uco => certify::gramian(&cl.reference, inertia, GramianKind::Observability, h)
            .map_err(|e| numerical(e.to_string()))?,
        Which::Ucc => certify::gramian(&cl.reference, inertia, GramianKind::Controllability, h)
            .map_err(|e| numerical(e.to_string()))?,
        Which::Decay => certify::decay(inertia, k_e, h).map_err(numerical)?,
        Which::Gradient => certify::gradient(inertia, k_e).map_err(numerical)?,
        Which::Tangency => certify::tangency(inertia, k_e),
    };
    write(out, &format!("certify_{}.txt", which.name()), &format_kv(&report.entries))?;
    Ok(report)
}

/// The observer gain schedule `L(t)` on the scenario's sample grid.
pub fn gain_schedule(scenario: &Scenario) -> Result<(Vec<f64>, Vec<MatN>), CommandError> {
    let assembled = scenario.assemble()?;
    let cl = &assembled.closed_loop;
    let opts = &assembled.options;
    match &scenario.observer {
        ObserverSpec::None => Err(ConfigError::Invalid {
            field: "observer.kind".into(),
            reason: "gain schedules need an observer".into(),
        }
        .into()),
        ObserverSpec::Kalman { q, r, p0, .. } | ObserverSpec::Nonlinear { q, r, p0, .. } => {
            let q = q.to_matrix("observer.q", 6)?;
            let r = r.to_matrix("observer.r", 3)?;
            let p0 = p0.to_matrix("observer.p0", 6)?;
            let model = linearized_model(&cl.reference, &cl.inertia);
            let sched = integrate_riccati(
                &model,
                &p0,
                |_| q.clone(),
                |_| r.clone(),
                opts.t0,
                opts.tf,
                opts.step,
            )
            .map_err(|e| CommandError::Numerical(e.to_string()))?;
            Ok((sched.times, sched.l))
        }
        ObserverSpec::Nonkalman { .. } => {
            let embedtrack_core::rigidbody::ObserverConfig::NonKalman { m1, m2, .. } = &cl.observer
            else {
                unreachable!("assembled from a non-Kalman spec")
            };
            let n = opts.step.intervals(opts.t0, opts.tf).expect("validated grid");
            let times: Vec<f64> = (0..=n).map(|i| opts.t0 + i as f64 * opts.step.h).collect();
            let gains = times
                .iter()
                .map(|&t| nonkalman_gain(&cl.reference, t, &cl.inertia, m1, m2))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CommandError::Numerical(e.to_string()))?;
            Ok((times, gains))
        }
    }
}

pub fn gains_csv(times: &[f64], gains: &[MatN]) -> String {
    let mut out = String::from("t");
    for i in 1..=6 {
        for j in 1..=3 {
            write!(out, ",L{i}{j}").unwrap();
        }
    }
    out.push('\n');
    for (t, l) in times.iter().zip(gains) {
        write!(out, "{t:.16e}").unwrap();
        for i in 0..6 {
            for j in 0..3 {
                write!(out, ",{:.16e}", l[(i, j)]).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn gains(scenario: &Scenario, out: &Path) -> Result<PathBuf, CommandError> {
    let (times, gains) = gain_schedule(scenario)?;
    write(out, "gains.csv", &gains_csv(&times, &gains))
}

/// Per-scenario outcome of [`batch`].
pub type BatchResult = (PathBuf, Result<Status, CommandError>);

/// Simulate every `*.toml` in `dir` concurrently, each into `out/<stem>`.
pub fn batch(dir: &Path, out: &Path) -> Result<Vec<BatchResult>, CommandError> {
    let entries = std::fs::read_dir(dir).map_err(|source| CommandError::Config(ConfigError::Io {
        path: dir.to_path_buf(),
        source,
    }))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    let results = std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .iter()
            .map(|path| {
                scope.spawn(move || {
                    let stem = path.file_stem().unwrap_or_default();
                    let scenario = Scenario::load(path)?;
                    simulate(&scenario, &out.join(stem)).map(|o| o.status)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect::<Vec<_>>()
    });
    Ok(files.into_iter().zip(results).collect())
}

use embedtrack_sim::config::{AttitudeSpec, MatrixSpec, ObserverSpec, ReferenceSpec, Scenario};
use embedtrack_sim::record::CSV_HEADER;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_embedtrack"))
}

fn write_scenario(dir: &Path, name: &str, s: &Scenario) -> std::path::PathBuf {
    let p = dir.join(format!("{name}.toml"));
    std::fs::write(&p, s.to_toml()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn short(tf: f64) -> Scenario {
    let mut s = Scenario::paper();
    s.time.tf = tf;
    s
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn on_reference_scenario_has_zero_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short(1.0);
    s.initial.attitude = AttitudeSpec::Matrix {
        matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };
    if let ObserverSpec::Kalman { z0, .. } = &mut s.observer {
        *z0 = [0.0; 6];
    }
    let cfg = write_scenario(dir.path(), "onref", &s);
    let out = dir.path().join("o");
    let o = run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("trace.csv"));
    assert_eq!(rows.len(), 1001);
    for r in rows {
        assert_eq!(r.len(), 15);
        for v in [r[1], r[2], r[3], r[4], r[5]].into_iter().chain(r[9..].iter().copied()) {
            assert!(v.abs() <= 1e-9, "{r:?}");
        }
    }
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("status=ok"));
}

#[test]
fn reversed_attitude_exits_with_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short(0.5);
    s.initial.attitude = AttitudeSpec::Matrix {
        matrix: [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
    };
    let cfg = write_scenario(dir.path(), "flip", &s);
    let out = dir.path().join("o");
    let o = run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("status=aborted"));
    assert!(summary.contains("abort_reason=attitude left GL+(3)"), "{summary}");
}

#[test]
fn config_errors_exit_one_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short(1.0);
    s.controller.k_d = MatrixSpec::Diag {
        diag: vec![1.0, -2.0, 1.0],
    };
    let cfg = write_scenario(dir.path(), "bad", &s);
    let o = run(&["simulate", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("controller.k_d"));

    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "[plant]\ninertia = [1.0,\n").unwrap();
    let o = run(&["simulate", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    assert_eq!(run(&["simulate", "/nonexistent/x.toml"]).status.code(), Some(1));
    assert_eq!(run(&["certify", "x.toml", "bogus"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn certificates_pass_on_the_paper_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/paper.toml");
    for which in ["uco", "ucc", "tangency", "gradient"] {
        let o = run(&["certify", cfg.to_str().unwrap(), which, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{which}");
        let report = std::fs::read_to_string(dir.path().join(format!("certify_{which}.txt"))).unwrap();
        assert!(report.contains("result=pass"));
        assert_eq!(report, String::from_utf8_lossy(&o.stdout));
    }
    let report = std::fs::read_to_string(dir.path().join("certify_uco.txt")).unwrap();
    let alpha1: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("alpha1="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(alpha1 > 0.0);
    let tangency = std::fs::read_to_string(dir.path().join("certify_tangency.txt")).unwrap();
    let residual: f64 = tangency
        .lines()
        .find_map(|l| l.strip_prefix("max_residual="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual <= 1e-10);
}

fn gains_rows(s: &Scenario, dir: &Path) -> Vec<Vec<f64>> {
    let cfg = write_scenario(dir, "g", s);
    let out = dir.join("g");
    let o = run(&["gains", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("gains.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 19);
    lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn nonkalman_gains_are_periodic() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short(4.0 * std::f64::consts::PI);
    let steps = 2000;
    s.time.h = 2.0 * std::f64::consts::PI / steps as f64;
    s.time.substeps = 1;
    s.observer = ObserverSpec::Nonkalman {
        z0: [0.0; 6],
        m1: MatrixSpec::scalar(1.0),
        m2: MatrixSpec::scalar(1.0),
    };
    let rows = gains_rows(&s, dir.path());
    assert_eq!(rows.len(), 2 * steps + 1);
    let mut worst = 0.0_f64;
    for i in 0..=steps {
        let norm: f64 = (1..19).map(|k| (rows[i + steps][k] - rows[i][k]).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(norm);
    }
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn constant_rate_reference_gives_constant_gains() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short(1.0);
    s.reference = ReferenceSpec::ConstantRate {
        omega: [0.3, -0.2, 0.5],
        attitude: None,
    };
    s.observer = ObserverSpec::Nonkalman {
        z0: [0.0; 6],
        m1: MatrixSpec::scalar(1.0),
        m2: MatrixSpec::scalar(2.0),
    };
    let rows = gains_rows(&s, dir.path());
    assert!(rows.iter().all(|r| r[1..] == rows[0][1..]));
}

#[test]
fn kalman_gains_stay_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let rows = gains_rows(&Scenario::paper(), dir.path());
    assert_eq!(rows.len(), 20001);
    let peak = rows
        .iter()
        .flat_map(|r| r[1..].iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    assert!(peak.is_finite() && peak <= 1e4 + 1e-6, "{peak}");
    let late = rows[10000..]
        .iter()
        .flat_map(|r| r[1..].iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    assert!(late < 1e3);
}

#[test]
fn gains_need_an_observer() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short(1.0);
    s.observer = ObserverSpec::None;
    let cfg = write_scenario(dir.path(), "none", &s);
    let o = run(&["gains", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "short", &short(1.0));
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let o = run(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        outputs.push((
            std::fs::read(out.join("trace.csv")).unwrap(),
            std::fs::read(out.join("summary.txt")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn batch_runs_each_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = dir.path().join("scenarios");
    std::fs::create_dir(&scenarios).unwrap();
    write_scenario(&scenarios, "a", &short(0.5));
    let mut b = short(0.5);
    b.observer = ObserverSpec::None;
    write_scenario(&scenarios, "b", &b);
    let out = dir.path().join("out");
    let o = run(&["--batch", scenarios.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for stem in ["a", "b"] {
        assert!(out.join(stem).join("trace.csv").exists());
    }

    std::fs::write(scenarios.join("c.toml"), "nonsense").unwrap();
    let o = run(&["--batch", scenarios.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

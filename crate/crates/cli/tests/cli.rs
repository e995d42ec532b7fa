//! End-to-end checks of the `bearing-forms` binary: exit codes, artifacts,
//! export round trips and sweeps.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    bin_env(args, &[])
}

fn bin_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bearing-forms"));
    cmd.args(args).env_remove("BEARING_FORMS_JOBS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn extra_scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

/// The square scenario with `from` replaced by `to`, written into `dir`.
fn square_variant(dir: &Path, file: &str, from: &str, to: &str) -> PathBuf {
    let src = stdout(&bin(&["scenarios", "export", "square4_2d"]));
    assert!(src.contains(from), "{from} not in the square scenario");
    let path = dir.join(file);
    std::fs::write(&path, src.replace(from, to)).unwrap();
    path
}

/// `(section, key) -> value` rows of a report CSV.
fn report(path: &Path) -> Vec<(String, String, String)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_string(), rec[1].to_string(), rec[2].to_string())
        })
        .collect()
}

fn lookup(rows: &[(String, String, String)], section: &str, key: &str) -> String {
    rows.iter()
        .find(|(s, k, _)| s == section && k == key)
        .map(|(_, _, v)| v.clone())
        .unwrap_or_else(|| panic!("no {section}.{key}"))
}

#[test]
fn analyze_exit_codes() {
    let dir = TempDir::new().unwrap();
    let o = bin(&["analyze", "cube8_3d", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("bpe: yes"));
    let rows = report(&dir.path().join("analysis.csv"));
    assert_eq!(lookup(&rows, "verdict", "bpe"), "yes");
    assert_eq!(lookup(&rows, "graph", "min_pe_bearings"), "7");

    let o = bin(&[
        "analyze",
        p(&extra_scenario("static_p3.toml")),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stdout(&o).contains("bpe: no"));

    let o = bin(&[
        "analyze",
        p(&extra_scenario("cube8_3d_full.toml")),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn malformed_scenario_reports_position() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "name = \"x\"\ndynamics = \"single\"\n[graph]\nn = = 3\n",
    )
    .unwrap();
    let o = bin(&["analyze", p(&bad)]);
    assert_eq!(code(&o), 64);
    assert!(stderr(&o).contains("bad.toml:4:"), "{}", stderr(&o));

    let o = bin(&["analyze", p(&dir.path().join("missing.toml"))]);
    assert_eq!(code(&o), 64, "{}", stderr(&o));
}

#[test]
fn scenarios_list_and_export() {
    let o = bin(&["scenarios", "list"]);
    assert_eq!(code(&o), 0);
    let names: Vec<String> = stdout(&o)
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();
    assert_eq!(names, ["cube8_3d", "square4_2d", "pyramid4_3d"]);

    let o = bin(&["scenarios", "export", "tetrahedron"]);
    assert_eq!(code(&o), 64);

    let dir = TempDir::new().unwrap();
    let file = dir.path().join("square.toml");
    let o = bin(&["scenarios", "export", "square4_2d", "--output", p(&file)]);
    assert_eq!(code(&o), 0);
    let exported = std::fs::read_to_string(&file).unwrap();
    assert_eq!(
        exported,
        stdout(&bin(&["scenarios", "export", "square4_2d"]))
    );

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (spec, out) in [("square4_2d", &a), (p(&file), &b)] {
        let o = bin(&["simulate", spec, "--horizon", "2", "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let (ra, rb) = (
        report(&a.join("trace_report.csv")),
        report(&b.join("trace_report.csv")),
    );
    assert_eq!(
        lookup(&ra, "scenario", "sha256"),
        lookup(&rb, "scenario", "sha256")
    );
    assert_eq!(
        lookup(&ra, "artifacts", "trace_sha256"),
        lookup(&rb, "artifacts", "trace_sha256")
    );
    assert_eq!(
        std::fs::read(a.join("trace.csv")).unwrap(),
        std::fs::read(b.join("trace.csv")).unwrap()
    );
    for f in ["trace_errors.svg", "trace_paths.svg"] {
        let svg = std::fs::read_to_string(a.join(f)).unwrap();
        assert!(svg.starts_with("<svg") && !svg.contains("<script"));
    }
}

#[test]
fn step_size_flag_converges() {
    let dir = TempDir::new().unwrap();
    let mut finals = Vec::new();
    for dt in ["0.002", "0.001"] {
        let out = dir.path().join(dt);
        let o = bin(&[
            "simulate",
            "pyramid4_3d",
            "--dt",
            dt,
            "--horizon",
            "4",
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let rows = report(&out.join("trace_report.csv"));
        assert_eq!(lookup(&rows, "integrator", "dt"), dt);
        finals.push(
            lookup(&rows, "terminal", "err_delta")
                .parse::<f64>()
                .unwrap(),
        );
    }
    assert!((finals[0] - finals[1]).abs() < 1e-6, "{finals:?}");
}

#[test]
fn gain_violation_and_force() {
    let dir = TempDir::new().unwrap();
    let weak = square_variant(dir.path(), "weak.toml", "k_d = 11.0", "k_d = 5.0");
    let o = bin(&[
        "simulate",
        p(&weak),
        "--horizon",
        "1",
        "--out",
        p(&dir.path().join("a")),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("--force"));
    let o = bin(&[
        "simulate",
        p(&weak),
        "--horizon",
        "1",
        "--force",
        "--out",
        p(&dir.path().join("b")),
    ]);
    assert!(matches!(code(&o), 0 | 4), "{}", stderr(&o));
    assert!(dir.path().join("b/trace.csv").exists());
}

#[test]
fn coincident_start_is_a_bearing_loss() {
    let dir = TempDir::new().unwrap();
    let clash = square_variant(
        dir.path(),
        "clash.toml",
        "positions = [[-1.0, 1.5], [-1.0, 2.0]",
        "positions = [[-1.0, 2.0], [-1.0, 2.0]",
    );
    let o = bin(&[
        "simulate",
        p(&clash),
        "--horizon",
        "1",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn observe_writes_estimates() {
    let dir = TempDir::new().unwrap();
    let o = bin(&[
        "observe",
        "cube8_3d",
        "--horizon",
        "2",
        "--seed",
        "3",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = report(&dir.path().join("observer_report.csv"));
    let z0: f64 = lookup(&rows, "observer", "zeta_initial").parse().unwrap();
    let z1: f64 = lookup(&rows, "observer", "zeta_final").parse().unwrap();
    assert!((z0 - 1.0).abs() < 1e-12 && z1 < z0);
}

fn sweep_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn sweep_gain_boundary_and_determinism() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("gain");
    let o = bin(&[
        "sweep",
        "square4_2d",
        "--grid",
        "k_d=7.5,8.5",
        "--horizon",
        "0.5",
        "--jobs",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = sweep_rows(&out.join("sweep.csv"));
    let gain: Vec<&str> = rows.iter().map(|r| r[6].as_str()).collect();
    assert_eq!(gain, ["false", "true"]);

    let static_p3 = extra_scenario("static_p3.toml");
    let mut bytes = Vec::new();
    for (jobs, env) in [("1", None), ("4", None), ("", Some("3"))] {
        let out = dir.path().join(format!("seed{jobs}{}", env.unwrap_or("")));
        let mut args = vec![
            "sweep",
            p(&static_p3),
            "--grid",
            "seed=5,5,6",
            "--horizon",
            "1",
            "--out",
            p(&out),
        ];
        if !jobs.is_empty() {
            args.extend(["--jobs", jobs]);
        }
        let envs: Vec<(&str, &str)> = env.map(|v| ("BEARING_FORMS_JOBS", v)).into_iter().collect();
        let o = bin_env(&args, &envs);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        bytes.push(std::fs::read(out.join("sweep.csv")).unwrap());
    }
    assert!(
        bytes.windows(2).all(|w| w[0] == w[1]),
        "sweep output depends on the thread count"
    );
    let rows = sweep_rows(&dir.path().join("seed1/sweep.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(
        rows[0][1..],
        rows[1][1..],
        "equal seeds must give equal rows"
    );
    assert_ne!(rows[0][9], rows[2][9]);
}

#[test]
fn sweep_rejects_bad_input() {
    let o = bin(&["sweep", "square4_2d", "--grid", "k_q=1,2"]);
    assert_eq!(code(&o), 64);
    let o = bin_env(
        &["sweep", "square4_2d", "--grid", "k_p=1", "--horizon", "0.1"],
        &[("BEARING_FORMS_JOBS", "zero")],
    );
    assert_eq!(code(&o), 64, "{}", stderr(&o));
    let o = bin(&["simulate"]);
    assert_eq!(code(&o), 64);
}

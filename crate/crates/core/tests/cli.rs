use std::path::Path;
use std::process::{Command, Output};

use fracspec::eigen::dense_p2_oracle;
use fracspec::energy::EnergyContext;
use fracspec::grid::{FracParams, Grid};
use fracspec::kernel::{assemble, KernelMode};
use serde_json::Value;

fn run_config(dir: &Path, name: &str, body: &str, extra: &[&str]) -> Output {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fracspec"))
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .unwrap()
}

fn summary(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn eig_matches_dense_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(
        dir.path(),
        "run.json",
        r#"{"command": "eig", "N": 64, "s": 0.5, "p": 2,
            "outputs": {"summary_path": "s.json", "fields_path": "f.csv", "history_path": "h.csv"}}"#,
        &[],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(dir.path(), "s.json");
    let fp = FracParams::new(0.5, 2.0, 2.0).unwrap();
    let k = assemble(&fp, &Grid::new(0.0, 1.0, 64).unwrap(), KernelMode::Midpoint).unwrap();
    let (oracle, _) = dense_p2_oracle(&EnergyContext::unperturbed(&k)).unwrap();
    let lambda = s["lambda"].as_f64().unwrap();
    assert!(
        (lambda - oracle).abs() / oracle <= 1e-8,
        "{lambda} {oracle}"
    );
    assert_eq!(s["command"], "eig");
    assert_eq!(s["converged"], true);
    assert!(s.get("optimality_residual").is_none());
    assert_eq!(s["config_echo"]["N"], 64);
    assert_eq!(s["config_echo"]["q"], 2.0);

    let fields = std::fs::read_to_string(dir.path().join("f.csv")).unwrap();
    let mut lines = fields.lines();
    assert_eq!(lines.next(), Some("x,u,V"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 64);
    assert_eq!(rows[0][0], 0.5 / 64.0);
    assert!(rows.iter().all(|r| r[1] > 0.0 && r[2] == 0.0));
    let hist = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    assert!(hist.starts_with("iter,lambda,residual\n"));
}

#[test]
fn zero_cells_names_n() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(
        dir.path(),
        "run.json",
        r#"{"command": "eig", "N": 0, "s": 0.5, "p": 2}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`N`"), "{err}");
}

#[test]
fn malformed_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            r#"{"command": "eig", "N": 8, "s": 0.5, "p": 2, "bogus": 1}"#,
            "bogus",
        ),
        (r#"{"command": "eig", "N": 8, "s": 0.5, "p": "two"}"#, "p"),
        (
            r#"{"command": "opt-min-ball", "N": 8, "s": 0.5, "p": 2, "ball": {"M": -1}}"#,
            "ball.M",
        ),
        (
            r#"{"command": "eig", "N": 8, "s": 0.5, "p": 2, "potential": {"file": "nope.csv"}}"#,
            "nope.csv",
        ),
        ("{", "EOF"),
    ];
    for (body, needle) in cases {
        let out = run_config(dir.path(), "run.json", body, &[]);
        assert_eq!(out.status.code(), Some(1), "{body}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{body}: {err}");
    }
    let out = Command::new(env!("CARGO_BIN_EXE_fracspec"))
        .args(["--config", "/nonexistent/run.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn file_potential_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("v.csv"), "1\n2\n3\n").unwrap();
    let out = run_config(
        dir.path(),
        "run.json",
        r#"{"command": "eig", "N": 4, "s": 0.5, "p": 2, "potential": {"file": "v.csv"}}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("3 values"));
}

#[test]
fn constant_potential_shifts_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let base = |pot: &str, file: &str| {
        format!(
            r#"{{"command": "eig", "N": 32, "s": 0.4, "p": 3, "potential": {pot},
                "outputs": {{"summary_path": "{file}"}}}}"#
        )
    };
    assert_eq!(
        run_config(dir.path(), "a.json", &base(r#""zero""#, "a.out.json"), &[])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run_config(
            dir.path(),
            "b.json",
            &base(r#"{"constant": 3}"#, "b.out.json"),
            &[]
        )
        .status
        .code(),
        Some(0)
    );
    let a = summary(dir.path(), "a.out.json")["lambda"]
        .as_f64()
        .unwrap();
    let b = summary(dir.path(), "b.out.json")["lambda"]
        .as_f64()
        .unwrap();
    assert!((b - a - 3.0).abs() < 1e-8, "{a} {b}");
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let body = |file: &str| {
        format!(
            r#"{{"command": "eig", "N": 200, "s": 0.5, "p": 2.5,
                "potential": {{"random": {{"seed": 7, "amplitude": 2}}}},
                "outputs": {{"summary_path": "{file}", "fields_path": "{file}.csv"}}}}"#
        )
    };
    let mut texts = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let name = format!("out{i}.json");
        let path = dir.path().join(format!("run{i}.json"));
        std::fs::write(&path, body(&name)).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_fracspec"))
            .arg("--config")
            .arg(&path)
            .env("FRACSPEC_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        let mut v = summary(dir.path(), &name);
        v.as_object_mut().unwrap().remove("wall_time_ms");
        let mut obj = v;
        obj["config_echo"]["outputs"] = Value::Null;
        texts.push((
            serde_json::to_string(&obj).unwrap(),
            std::fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap(),
        ));
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn optimizer_commands_write_outer_history() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, extra) in [
        ("opt-max-ball", r#""ball": {"M": 3}"#),
        ("opt-min-ball", r#""ball": {"M": 3}, "q": 4"#),
        (
            "opt-min-rearr",
            r#""v0": {"sine": {"amplitude": 2, "frequency": 3}}"#,
        ),
    ] {
        let body = format!(
            r#"{{"command": "{cmd}", "N": 16, "s": 0.5, "p": 2, {extra},
                "outputs": {{"summary_path": "{cmd}.json", "history_path": "{cmd}.csv", "fields_path": "{cmd}.f.csv"}}}}"#
        );
        let out = run_config(dir.path(), "run.json", &body, &[]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let s = summary(dir.path(), &format!("{cmd}.json"));
        assert!(s["optimality_residual"].as_f64().unwrap() <= 1e-5);
        let h = std::fs::read_to_string(dir.path().join(format!("{cmd}.csv"))).unwrap();
        assert!(h.starts_with("k,lambda,opt_residual\n"));
    }
    // the optimal ball-min potential reloads through the file spec
    let body = r#"{"command": "eig", "N": 16, "s": 0.5, "p": 2, "q": 4,
                   "potential": {"file": "opt-min-ball.f.csv"}, "outputs": {"summary_path": "re.json"}}"#;
    assert_eq!(
        run_config(dir.path(), "re.json.cfg", body, &[])
            .status
            .code(),
        Some(0)
    );
    let a = summary(dir.path(), "opt-min-ball.json")["lambda"]
        .as_f64()
        .unwrap();
    let b = summary(dir.path(), "re.json")["lambda"].as_f64().unwrap();
    assert!((a - b).abs() < 1e-8);
}

#[test]
fn unconverged_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(
        dir.path(),
        "run.json",
        r#"{"command": "opt-max-ball", "N": 16, "s": 0.5, "p": 2, "ball": {"M": 3},
            "outer": {"max_iters": 2}, "outputs": {"summary_path": "s.json"}}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(summary(dir.path(), "s.json")["converged"], false);
}

#[test]
fn check_command_and_kernel_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(
        dir.path(),
        "run.json",
        r#"{"command": "check", "N": 16, "s": 0.5, "p": 2,
            "checks": {"picone_fields": 10, "concavity_pairs": 5, "simplicity_starts": 3},
            "outputs": {"summary_path": "s.json"}}"#,
        &["--dump-kernel"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(dir.path(), "s.json");
    assert_eq!(s["checks"]["all_passed"], true);
    assert_eq!(s["checks"]["positivity"].as_array().unwrap().len(), 3);
    let k: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("kernel.json")).unwrap())
            .unwrap();
    assert_eq!(k["N"], 16);
    assert_eq!(k["weights"].as_array().unwrap().len(), 16);
    assert_eq!(k["mode"], "midpoint");
}

#[test]
fn summary_to_stdout_without_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(
        dir.path(),
        "run.json",
        r#"{"command": "eig", "N": 8, "s": 0.5, "p": 2}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["lambda"].as_f64().unwrap() > 0.0);
}

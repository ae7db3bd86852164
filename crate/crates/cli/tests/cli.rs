use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kspl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kspl"))
        .args(args)
        .env("KSPL_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn run_config(dir: &Path, body: &str, extra: &[&str]) -> (Output, std::path::PathBuf) {
    let cfg = write_config(dir, "config.json", body);
    let out = dir.join("out");
    let mut args = vec!["run", cfg.as_str(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (kspl(&args), out)
}

#[test]
fn catalog_lists_required_entries_once() {
    let out = kspl(&["catalog"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let heads: Vec<(String, String)> = text
        .lines()
        .filter(|l| !l.starts_with(' '))
        .map(|l| {
            let mut it = l.split_whitespace();
            (it.next().unwrap().to_string(), it.next().unwrap().to_string())
        })
        .collect();
    for want in ["constant", "linear", "sqnorm", "exp_inner"] {
        assert_eq!(heads.iter().filter(|h| h.0 == "phi" && h.1 == want).count(), 1, "{want}");
    }
    for want in ["zero", "linear", "sine", "cubic_clipped"] {
        assert_eq!(heads.iter().filter(|h| h.0 == "f" && h.1 == want).count(), 1, "{want}");
    }
}

#[test]
fn catalog_examples_run_through_config_parsing() {
    let out = kspl(&["catalog"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut kind = String::new();
    for line in text.lines() {
        if !line.starts_with(' ') {
            kind = line.split_whitespace().next().unwrap().to_string();
            continue;
        }
        let Some(example) = line.trim().strip_prefix("example: ") else {
            continue;
        };
        let dir = tempfile::tempdir().unwrap();
        let body = if kind == "phi" {
            format!(
                r#"{{"kind": "splitting", "problem": {{"d": 1, "T": 0.1, "phi": {example}}},
                    "splitting": {{"steps": 1, "mode": "mc", "solve": {{"mc": {{"outer": 4}}}}}}}}"#
            )
        } else {
            format!(
                r#"{{"kind": "splitting", "problem": {{"d": 1, "T": 0.1, "phi": {{"name": "sqnorm"}}, "f": {example}}},
                    "splitting": {{"steps": 2, "mode": "mc", "solve": {{"mc": {{"outer": 4}}}}}}}}"#
            )
        };
        let (res, out_dir) = run_config(dir.path(), &body, &[]);
        assert!(
            res.status.success(),
            "{example}: {}",
            String::from_utf8_lossy(&res.stderr)
        );
        assert!(out_dir.join("values.csv").exists());
    }
}

#[test]
fn malformed_configs_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let (res, _) = run_config(
        dir.path(),
        r#"{"kind": "kolmogorov", "problem": {"d": 2, "T": 1, "phi": {"name": "sqnorm"}}, "plan": {"hiden": [3]}}"#,
        &[],
    );
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("plan.hiden"), "{err}");

    let (res, _) = run_config(dir.path(), r#"{"kind": "rate", "problem": {"d": 1, "T": 1, "phi": "#, &[]);
    assert_eq!(res.status.code(), Some(2));

    let (res, _) = run_config(
        dir.path(),
        r#"{"kind": "kolmogorov", "problem": {"d": 2, "T": -1, "phi": {"name": "sqnorm"}}}"#,
        &[],
    );
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("T must be positive"));

    let res = kspl(&["run", "/nonexistent/config.json"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn numerical_guard_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let (res, _) = run_config(
        dir.path(),
        r#"{"kind": "splitting", "problem": {"d": 1, "T": 1, "phi": {"name": "sqnorm"}, "f": {"name": "linear", "lambda": 1}},
            "splitting": {"steps": 4, "mode": "mc", "solve": {"mc": {"outer": 1000, "inner": [100], "cap": 1e6}}}}"#,
        &[],
    );
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));

    let (res, _) = run_config(
        dir.path(),
        r#"{"kind": "kolmogorov", "problem": {"d": 2, "T": 1, "phi": {"name": "sqnorm"}},
            "plan": {"hidden": [8, 8], "total_steps": 400, "optimizer": {"kind": "plain-sgd", "step_size": 5}}}"#,
        &[],
    );
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn rate_config_writes_closed_form_table() {
    let dir = tempfile::tempdir().unwrap();
    let body = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/rate_closed_form.json")).unwrap();
    let (res, out) = run_config(dir.path(), &body, &[]);
    assert!(res.status.success());
    let csv = fs::read_to_string(out.join("rate.csv")).unwrap();
    let errors: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let e = std::f64::consts::E;
    for (err, n) in errors.iter().zip([2i32, 4, 8, 16]) {
        let want = e - (1.0 + 1.0 / n as f64).powi(n);
        assert!((err - want).abs() < 1e-12, "N = {n}: {err} vs {want}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config"]["kind"], "rate");
    assert_eq!(manifest["resolved"]["oracle"], "closed_form");
}

#[test]
fn kolmogorov_run_writes_snapshot_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (res, out) = run_config(
        dir.path(),
        r#"{"kind": "kolmogorov", "seed": 4, "problem": {"d": 3, "T": 0.25, "phi": {"name": "linear", "coeffs": [1, 2, 3]}},
            "plan": {"hidden": [8, 8], "batch_size": 32, "total_steps": 200, "eval_every": 50}, "eval_points": 2000}"#,
        &["--seed", "9"],
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let bin = fs::read(out.join("step_000.bin")).unwrap();
    assert_eq!(&bin[..5], b"KSPL1");
    assert!(out.join("step_000.json").exists());
    let log = fs::read_to_string(out.join("training_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 4);
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    for m in ["loss_net", "loss_exact", "l2_error", "relative_l2_error"] {
        assert!(results.contains(m), "{results}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["resolved"]["plan"]["seed"], 9);
}

#[test]
fn thread_count_and_repeats_leave_outputs_unchanged() {
    let body = r#"{"kind": "splitting", "seed": 11, "problem": {"d": 2, "T": 0.3, "phi": {"name": "sqnorm"}, "f": {"name": "sine"}},
        "plan": {"hidden": [6, 6], "batch_size": 16, "total_steps": 60, "eval_every": 20},
        "splitting": {"steps": 2, "mode": "nn"}, "eval_points": 5000}"#;
    let mut tables = Vec::new();
    for threads in ["1", "3", "1"] {
        let dir = tempfile::tempdir().unwrap();
        let (res, out) = run_config(dir.path(), body, &["--threads", threads]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        let files: Vec<Vec<u8>> = ["values.csv", "training_log.csv", "step_000.bin", "step_001.bin"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        tables.push(files);
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[0], tables[2]);
}

#[test]
fn oracle_check_small_budget_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (res, out) = run_config(
        dir.path(),
        r#"{"kind": "oracle-check", "seed": 3, "oracle_check": {"dims": [2], "fk_samples": 20000, "picard_outer": 20000}}"#,
        &[],
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("oracle_check.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 13);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}

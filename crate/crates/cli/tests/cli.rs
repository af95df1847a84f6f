use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qmetrix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmetrix"))
        .args(args)
        .env_remove("QMETRIX_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = qmetrix(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Data rows of a CSV table as string fields.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(text: &str, name: &str) -> Vec<f64> {
    let header: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    rows(text).iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn law_ggm_table() {
    let text = ok(&["law", "--measure", "ggm", "--grid", "0:0.05:0.5", "--d", "2"]);
    assert!(text.starts_with("# schema: qmetrix.law.v1\n"));
    let sd = column(&text, "stddev");
    assert_eq!(sd.len(), 11);
    assert!((sd[10] - 0.25).abs() < 1e-15);
}

#[test]
fn law_entropy_is_nonincreasing() {
    let sd = column(&ok(&["law", "--measure", "entropy", "--grid", "0:0.1:1"]), "stddev");
    assert!(sd.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn law_unequal_spectrum_scales_stddev() {
    let std = column(&ok(&["law", "--d", "3"]), "stddev");
    let uneq = column(&ok(&["law", "--d", "3", "--spectrum", "unequal-d3"]), "stddev");
    for (a, b) in std.iter().zip(&uneq) {
        assert!((b - a * 0.5625f64.powf(-0.5)).abs() < 1e-12);
    }
}

#[test]
fn law_rejects_out_of_range_grid() {
    assert!(!qmetrix(&["law", "--grid", "0:0.1:0.7"]).status.success());
}

#[test]
fn optimize_writes_row_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("opt.csv");
    let out_s = out.to_str().unwrap();
    ok(&[
        "optimize",
        "--N",
        "2",
        "--d",
        "2",
        "--measure",
        "ggm",
        "--target",
        "0.25",
        "--seed",
        "5",
        "--restarts",
        "2",
        "--out",
        out_s,
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# schema: qmetrix.optimize.v1\n"));
    assert!(
        text.lines().nth(1).unwrap() == "target,q_best,stddev,residual,generations,feasible_fraction,seed,converged"
    );
    let q = column(&text, "q_best")[0];
    assert!((q - 14.928203230275509).abs() < 1e-3, "{q}");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("opt.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "optimize");
    assert_eq!(manifest["seeds"][0], 5);
    assert_eq!(manifest["config"]["target"], "0.25");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 1);
}

#[test]
fn sweep_keeps_going_past_infeasible_targets() {
    let text = ok(&[
        "sweep",
        "--N",
        "2",
        "--measure",
        "ggm",
        "--grid",
        "0.4:0.1:0.6",
        "--seed",
        "1",
        "--restarts",
        "1",
        "--generations",
        "60",
    ]);
    let r = rows(&text);
    assert_eq!(r.len(), 3);
    assert_eq!(r[0][7], "true");
    assert_eq!(r[2][7], "false");
}

#[test]
fn conflicting_flags_fail() {
    let out = qmetrix(&["optimize", "--target", "0.1", "--grid", "0:0.1:0.5", "--seed", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("either --target or --grid"));
    assert!(!qmetrix(&["sweep", "--target", "0.1", "--seed", "1"]).status.success());
    assert!(!qmetrix(&["verify", "--criteria", "11"]).status.success());
}

#[test]
fn missing_seed_is_generated_and_printed() {
    let out = qmetrix(&["sample-gm", "--nu", "50", "--N", "3"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("using --seed"));
}

fn sample(dir: &Path, name: &str, extra: &[&str]) -> Vec<u8> {
    let out = dir.join(name);
    let mut args = vec!["sample-gm", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    ok(&args);
    fs::read(out).unwrap()
}

#[test]
fn sampler_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let flags = ["--nu", "100000", "--N", "3", "--seed", "7"];
    let a = sample(dir.path(), "a.csv", &flags);
    let b = sample(dir.path(), "b.csv", &[&flags[..], &["--threads", "1"]].concat());
    assert_eq!(a, b);
    assert!(String::from_utf8_lossy(&a).starts_with("# schema: qmetrix.sample-gm.v1\n"));

    // Replaying from the manifest config reproduces the file.
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    let cfg: String = m["config"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| format!("{k} = {}\n", v.as_str().unwrap()))
        .collect();
    let cfg_path = dir.path().join("replay.conf");
    fs::write(&cfg_path, cfg).unwrap();
    let c = sample(dir.path(), "c.csv", &["--config", cfg_path.to_str().unwrap()]);
    assert_eq!(a, c);

    let cmp = ok(&[
        "sample-gm",
        "--compare",
        dir.path().join("a.csv").to_str().unwrap(),
        dir.path().join("c.csv").to_str().unwrap(),
    ]);
    assert!(cmp.lines().skip(1).all(|l| l.ends_with(",false")));
}

#[test]
fn config_file_values_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("law.conf");
    fs::write(&cfg, "# law settings\nmeasure = entropy\ngrid = 0:0.5:1\n").unwrap();
    let text = ok(&["law", "--config", cfg.to_str().unwrap()]);
    assert_eq!(column(&text, "value"), vec![0.0, 0.5, 1.0]);
    let text = ok(&["law", "--config", cfg.to_str().unwrap(), "--grid", "0:0.25:1"]);
    assert_eq!(column(&text, "value").len(), 5);

    fs::write(&cfg, "colour = blue\n").unwrap();
    assert!(!qmetrix(&["law", "--config", cfg.to_str().unwrap()]).status.success());
}

#[test]
fn fit_reads_a_result_table() {
    let dir = tempfile::tempdir().unwrap();
    let law = dir.path().join("law.csv");
    ok(&["law", "--measure", "ggm", "--out", law.to_str().unwrap()]);
    let json = ok(&[
        "fit",
        "--input",
        law.to_str().unwrap(),
        "--family",
        "quadratic-inv-sqrt",
        "--x",
        "value",
        "--x-min",
        "0.05",
    ]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["family"], "quadratic-inv-sqrt");
    assert_eq!(v["points_used"], 10);
    assert_eq!(v["params"].as_array().unwrap().len(), 3);
}

#[test]
fn svg_is_written_next_to_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("law.csv");
    let svg = dir.path().join("law.svg");
    ok(&["law", "--out", csv.to_str().unwrap(), "--svg", svg.to_str().unwrap()]);
    assert!(fs::read_to_string(&svg).unwrap().contains("<polyline"));
    let m = fs::read_to_string(dir.path().join("law.csv.manifest.json")).unwrap();
    assert!(m.contains("law.svg"));
}

#[test]
fn verify_runs_a_single_criterion() {
    let text = ok(&["verify", "--criteria", "10"]);
    assert!(text.starts_with("PASS criterion 10"), "{text}");
}

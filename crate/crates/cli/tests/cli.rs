use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ssb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssb"))
        .args(args)
        .env_remove("SSB_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn out_arg(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn phase_diagram_grid_has_31_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "nested/pd");
    let o = ssb(&["phase-diagram", "--sigma", "0.5:2.0:0.05", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(Path::new(&out).join("phase_diagram.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sigma_w,c_star,xi_delta");
    assert_eq!(lines.len(), 32);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["command"], "phase-diagram");
    assert_eq!(manifest["config"]["sigma"], "0.5:2.0:0.05");
    assert!(manifest["version"].is_string());
}

#[test]
fn malformed_grid_is_a_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "pd");
    let o = ssb(&["phase-diagram", "--sigma", "2:1:0.1", "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("malformed grid"));
    assert!(!Path::new(&out).exists());
    assert_eq!(code(&ssb(&["phase-diagram", "--no-such-flag"])), 2);
}

#[test]
fn outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = out_arg(dir.path(), name);
        let o = ssb(&[
            "ensemble-compare",
            "--n",
            "4",
            "--networks",
            "6",
            "--depth",
            "20",
            "--seed",
            "5",
            "--out",
            &out,
        ]);
        assert_eq!(code(&o), 0);
        (
            fs::read(Path::new(&out).join("ensemble_compare.csv")).unwrap(),
            fs::read(Path::new(&out).join("ensemble_compare.json")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn ensemble_assert_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "ec");
    let base = [
        "ensemble-compare",
        "--n",
        "4",
        "--networks",
        "4",
        "--depth",
        "30",
        "--sigma",
        "0.5,1.5",
        "--out",
        &out,
    ];
    let mut strict = base.to_vec();
    strict.extend(["--assert", "--tol", "1e-9"]);
    assert_eq!(code(&ssb(&strict)), 1);
    let mut loose = base.to_vec();
    loose.extend(["--assert", "--tol", "10"]);
    assert_eq!(code(&ssb(&loose)), 0);
}

#[test]
fn config_file_fills_in_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# grid from the file\nsigma = 0.5,1.5\nseed = 3\n").unwrap();
    let out = out_arg(dir.path(), "pd");
    let o = ssb(&[
        "phase-diagram",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "8",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["sigma"], "0.5,1.5");
    assert_eq!(manifest["config"]["common"]["seed"], 8);
    fs::write(&cfg, "bogus_key = 1\n").unwrap();
    assert_eq!(
        code(&ssb(&[
            "phase-diagram",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            &out
        ])),
        2
    );
}

#[test]
fn zero_learning_rate_gives_flat_copy_loss() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "tc");
    let o = ssb(&[
        "train-copy",
        "--n",
        "4",
        "--steps",
        "6",
        "--eval-every",
        "2",
        "--lr",
        "0",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(Path::new(&out).join("metrics.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!records.is_empty());
    assert!(Path::new(&out).join("model.bin").is_file());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join("summary.json")).unwrap()).unwrap();
    assert!((summary["chance_recall_loss"].as_f64().unwrap() - 8f64.ln()).abs() < 1e-12);
}

#[test]
fn vortex_command_paths() {
    let o = ssb(&["vortices", "--self-test"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS"));
    assert_eq!(code(&ssb(&["vortices"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let missing = out_arg(dir.path(), "nothing/model");
    assert_eq!(code(&ssb(&["vortices", "--checkpoint", &missing])), 2);

    let out = out_arg(dir.path(), "v");
    let o = ssb(&[
        "vortices",
        "--random-init",
        "--channels",
        "2",
        "--height",
        "6",
        "--width",
        "6",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(Path::new(&out).join("vortices.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert_eq!(csv.lines().next(), Some("t,n_plus,n_minus"));

    // a non-conv checkpoint is a format error
    let tc = out_arg(dir.path(), "tc");
    assert_eq!(
        code(&ssb(&["train-copy", "--n", "4", "--steps", "1", "--out", &tc])),
        0
    );
    assert_eq!(
        code(&ssb(&[
            "vortices",
            "--checkpoint",
            &out_arg(Path::new(&tc), "model")
        ])),
        3
    );
}

#[test]
fn conv_checkpoint_feeds_vortices() {
    let dir = tempfile::tempdir().unwrap();
    let cc = out_arg(dir.path(), "cc");
    let o = ssb(&[
        "train-conv-copy",
        "--channels",
        "2",
        "--height",
        "4",
        "--width",
        "4",
        "--steps",
        "2",
        "--eval-every",
        "1",
        "--out",
        &cc,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = out_arg(dir.path(), "v");
    let o = ssb(&[
        "vortices",
        "--checkpoint",
        &out_arg(Path::new(&cc), "model"),
        "--steps",
        "5",
        "--dump",
        "--out",
        &v,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(Path::new(&v).join("fields/t0004.json").is_file());
}

#[test]
fn missing_data_points_at_the_fix() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssb(&[
        "train-mlp",
        "--data-dir",
        &out_arg(dir.path(), "absent"),
        "--out",
        &out_arg(dir.path(), "m"),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("SSB_DATA_DIR"));
    assert!(!dir.path().join("m").exists());
}

#[test]
fn bad_model_arguments_are_usage_errors() {
    assert_eq!(code(&ssb(&["train-copy", "--cell", "lstm"])), 2);
    assert_eq!(
        code(&ssb(&["train-copy", "--cell", "rnn_u1", "--gate-bias-z", "2"])),
        2
    );
    assert_eq!(code(&ssb(&["train-mlp", "--family", "u1", "--k", "3"])), 2);
    assert_eq!(code(&ssb(&["train-copy", "--lr", "-1"])), 2);
}

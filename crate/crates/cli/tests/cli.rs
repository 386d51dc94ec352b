use std::path::Path;
use std::process::{Command, Output};

fn lodgeclass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lodgeclass"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_writes_files_and_is_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = lodgeclass(&[
            "generate",
            "--n",
            "500",
            "--k",
            "4",
            "--sep",
            "8",
            "--seed",
            "1",
            "--out",
            arg(dir.path()),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["synthetic.csv", "synthetic.truth.csv", "synthetic.lsoa.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let rows = std::fs::read_to_string(a.path().join("synthetic.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 501);
}

#[test]
fn missing_k_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lodgeclass(&["generate", "--n", "500", "--out", arg(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--k"));
}

#[test]
fn bad_flags_and_configs_exit_2() {
    assert_eq!(code(&lodgeclass(&["no-such-command"])), 2);
    assert_eq!(code(&lodgeclass(&["generate", "--k", "many"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "synthetic_k = 4\nproperties = \"p.csv\"\n").unwrap();
    assert_eq!(code(&lodgeclass(&["run", "--config", arg(&cfg)])), 2);
    std::fs::write(&cfg, "not valid = = toml").unwrap();
    assert_eq!(code(&lodgeclass(&["run", "--config", arg(&cfg)])), 2);
    let absent = dir.path().join("absent.toml");
    assert_eq!(code(&lodgeclass(&["run", "--config", arg(&absent)])), 2);
}

#[test]
fn missing_input_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "properties = \"/nonexistent/p.csv\"\n").unwrap();
    let out = lodgeclass(&[
        "ingest",
        "--config",
        arg(&cfg),
        "--out",
        arg(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 1);
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "synthetic_n = 400\nsynthetic_k = 3\nsynthetic_sep = 8.0\nkmeans_k = 3\nkmedoids_k = 4\n\
             k_list = [2, 3, 4, 5]\nkmeans_n_init = 3\nseed = 9\n{extra}"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn run_twice_is_byte_identical_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "out = \"ignored\"\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = lodgeclass(&["run", "--config", arg(&cfg), "--out", arg(out)]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert!(!dir.path().join("ignored").exists());
    for f in [
        "labels.csv",
        "validation.json",
        "profiles.json",
        "elbow.csv",
        "crosstab.csv",
        "cluster_points.csv",
        "series_revenue.csv",
        "urban_rural.csv",
        "plan.json",
        "pca_model.json",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["seed"], 9);
    assert!(manifest["failed_stage"].is_null());
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), "");
    for stage in [
        "generate",
        "ingest",
        "preprocess",
        "pca",
        "cluster",
        "elbow",
        "validate",
        "profile",
    ] {
        let res = lodgeclass(&[stage, "--config", arg(&cfg), "--out", arg(&out)]);
        assert_eq!(
            code(&res),
            0,
            "{stage}: {}",
            String::from_utf8_lossy(&res.stderr)
        );
        assert!(String::from_utf8_lossy(&res.stdout).starts_with(stage));
    }
    assert!(out.join("profiles.json").exists());
}

#[test]
fn single_k_elbow_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), "");
    for stage in ["generate", "ingest", "preprocess", "pca"] {
        assert_eq!(
            code(&lodgeclass(&[
                stage,
                "--config",
                arg(&cfg),
                "--out",
                arg(&out)
            ])),
            0
        );
    }
    let cfg1 = dir.path().join("one.toml");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("k_list = [2, 3, 4, 5]", "k_list = [3]");
    std::fs::write(&cfg1, text).unwrap();
    let res = lodgeclass(&["elbow", "--config", arg(&cfg1), "--out", arg(&out)]);
    assert_eq!(code(&res), 0);
    assert!(String::from_utf8_lossy(&res.stderr).contains("no knee"));
    assert!(String::from_utf8_lossy(&res.stdout).contains("\"knee_detected\":false"));
}

#[test]
fn empty_window_fails_at_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(
        dir.path(),
        "window_start = 2030-01-01\nwindow_end = 2030-06-30\n",
    );
    let res = lodgeclass(&["run", "--config", arg(&cfg), "--out", arg(&out)]);
    assert_eq!(code(&res), 1);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["failed_stage"], "ingest");
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use conformal_gan::conformal::Calibrator;
use conformal_gan::data::{load_csv, Standardizer};
use conformal_gan::gan::TrainConfig;
use conformal_gan::nn::Checkpoint;
use serde_json::Value;
use tempfile::TempDir;

fn cgan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgan"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cgan(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        iterations: 40,
        batch_size: 32,
        hidden: vec![16],
        refit_period: 10,
        pool_size: 96,
        seed: 3,
        ..TrainConfig::default()
    }
}

/// Temp directory with split data, a config and a trained run.
fn trained() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("config.json"),
        serde_json::to_string(&small_config()).unwrap(),
    )
    .unwrap();
    ok(
        p,
        &[
            "make-data",
            "--n",
            "1200",
            "--seed",
            "5",
            "--out",
            "data.csv",
            "--split",
            "0.5,0.2,0.1,0.2",
        ],
    );
    ok(
        p,
        &[
            "train",
            "--config",
            "config.json",
            "--data",
            "data_train.csv",
            "--out",
            "run",
        ],
    );
    dir
}

fn calibrate(p: &Path, alpha: &str, out: &str) -> Output {
    cgan(
        p,
        &[
            "calibrate",
            "--run",
            "run",
            "--fit-data",
            "data_train.csv",
            "--calib",
            "data_calib.csv",
            "--alpha",
            alpha,
            "--out",
            out,
        ],
    )
}

fn rows(path: PathBuf) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn make_data_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "make-data",
            "--classes",
            "3",
            "--dim",
            "2",
            "--n",
            "6000",
            "--seed",
            "1",
            "--out",
            "a.csv",
        ],
    );
    ok(
        p,
        &[
            "make-data",
            "--classes",
            "3",
            "--dim",
            "2",
            "--n",
            "6000",
            "--seed",
            "1",
            "--out",
            "b.csv",
        ],
    );
    assert_eq!(rows(p.join("a.csv")), 6000);
    assert_eq!(
        std::fs::read(p.join("a.csv")).unwrap(),
        std::fs::read(p.join("b.csv")).unwrap()
    );
    ok(p, &["make-data", "--n", "0", "--out", "empty.csv"]);
    assert_eq!(
        std::fs::read_to_string(p.join("empty.csv")).unwrap(),
        "f0,f1,label\n"
    );
}

#[test]
fn make_data_split_writes_four_pieces() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "make-data",
            "--n",
            "1000",
            "--out",
            "d.csv",
            "--split",
            "0.5,0.1,0.1,0.3",
        ],
    );
    let total: usize = ["train", "calib", "val", "test"]
        .iter()
        .map(|s| rows(p.join(format!("d_{s}.csv"))))
        .sum();
    assert_eq!(total, 1000);
    assert_eq!(
        cgan(
            p,
            &[
                "make-data",
                "--n",
                "10",
                "--out",
                "d.csv",
                "--split",
                "0.5,0.5"
            ]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        cgan(
            p,
            &[
                "make-data",
                "--n",
                "10",
                "--out",
                "d.csv",
                "--split",
                "0.5,0.5,0.5,0.5"
            ]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn train_writes_run_directory() {
    let dir = trained();
    let run = dir.path().join("run");
    for f in [
        "gen.json",
        "disc.json",
        "train_log.ndjson",
        "resolved_config.json",
        "standardizer.json",
    ] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let log = std::fs::read_to_string(run.join("train_log.ndjson")).unwrap();
    let lines: Vec<Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 40);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["t"].as_u64(), Some(i as u64 + 1));
        for k in ["loss_d", "loss_g", "r_icp", "c_g", "grad_penalty"] {
            assert!(l[k].as_f64().unwrap().is_finite());
        }
    }
    Checkpoint::load(&run.join("gen.json"))
        .unwrap()
        .into_model()
        .unwrap();
    let st: Standardizer =
        serde_json::from_str(&std::fs::read_to_string(run.join("standardizer.json")).unwrap())
            .unwrap();
    assert_eq!(st.dim(), 2);
}

#[test]
fn train_rejects_config_missing_a_field() {
    let dir = trained();
    let p = dir.path();
    let mut cfg: Value = serde_json::to_value(small_config()).unwrap();
    cfg.as_object_mut().unwrap().remove("eta_g");
    std::fs::write(p.join("bad.json"), cfg.to_string()).unwrap();
    let out = cgan(
        p,
        &[
            "train",
            "--config",
            "bad.json",
            "--data",
            "data_train.csv",
            "--out",
            "bad_run",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta_g"));

    let mut cfg: Value = serde_json::to_value(small_config()).unwrap();
    cfg["k_folds"] = Value::from(1);
    std::fs::write(p.join("bad.json"), cfg.to_string()).unwrap();
    let out = cgan(
        p,
        &[
            "train",
            "--config",
            "bad.json",
            "--data",
            "data_train.csv",
            "--out",
            "bad_run",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k_folds"));
}

#[test]
fn baseline_flag_drops_both_penalties() {
    let dir = trained();
    let p = dir.path();
    ok(
        p,
        &[
            "train",
            "--config",
            "config.json",
            "--data",
            "data_train.csv",
            "--out",
            "base",
            "--baseline",
        ],
    );
    let cfg: TrainConfig = serde_json::from_str(
        &std::fs::read_to_string(p.join("base/resolved_config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!((cfg.mu_conform, cfg.lambda_reg), (0.0, 0.0));
}

#[test]
fn divergence_has_its_own_exit_code() {
    let dir = trained();
    let p = dir.path();
    let cfg = TrainConfig {
        eta_d: 1e300,
        eta_g: 1e300,
        ..small_config()
    };
    std::fs::write(p.join("wild.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = cgan(
        p,
        &[
            "train",
            "--config",
            "wild.json",
            "--data",
            "data_train.csv",
            "--out",
            "wild",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn calibrate_contract() {
    let dir = trained();
    let p = dir.path();
    assert!(calibrate(p, "0.1", "cal.json").status.success());
    let cal = Calibrator::load(&p.join("cal.json")).unwrap();
    let n_calib = rows(p.join("data_calib.csv"));
    assert_eq!(cal.n(), n_calib);
    assert!(cal.calib_scores().windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(cal.alpha(), 0.1);

    let bad = calibrate(p, "1.5", "bad.json");
    assert_eq!(bad.status.code(), Some(2));
    assert!(!p.join("bad.json").exists());
}

#[test]
fn calibrate_grid_selection_records_weights() {
    let dir = trained();
    let p = dir.path();
    let out = ok(
        p,
        &[
            "calibrate",
            "--run",
            "run",
            "--fit-data",
            "data_train.csv",
            "--calib",
            "data_calib.csv",
            "--select-weights",
            "grid",
            "--val",
            "data_val.csv",
            "--finetune-iters",
            "3",
            "--grid-steps",
            "2",
            "--out",
            "cal.json",
        ],
    );
    assert!(out.contains("selected weights"), "{out}");
    let cal = Calibrator::load(&p.join("cal.json")).unwrap();
    let w = cal.weights.as_array();
    assert!(w.iter().all(|v| [0.0, 0.5, 1.0].contains(v)));
    let missing_val = cgan(
        p,
        &[
            "calibrate",
            "--run",
            "run",
            "--fit-data",
            "data_train.csv",
            "--calib",
            "data_calib.csv",
            "--select-weights",
            "ece",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(missing_val.status.code(), Some(2));
}

#[test]
fn generate_contract() {
    let dir = trained();
    let p = dir.path();
    ok(
        p,
        &[
            "generate", "--run", "run", "--n", "1000", "--seed", "7", "--out", "a.csv",
        ],
    );
    ok(
        p,
        &[
            "generate", "--run", "run", "--n", "1000", "--seed", "7", "--out", "b.csv",
        ],
    );
    assert_eq!(rows(p.join("a.csv")), 1000);
    assert_eq!(
        std::fs::read(p.join("a.csv")).unwrap(),
        std::fs::read(p.join("b.csv")).unwrap()
    );
    ok(
        p,
        &["generate", "--run", "run", "--n", "0", "--out", "e.csv"],
    );
    assert_eq!(rows(p.join("e.csv")), 0);
    ok(
        p,
        &[
            "generate", "--run", "run", "--n", "50", "--label", "0", "--out", "zero.csv",
        ],
    );
    assert!(load_csv(&p.join("zero.csv"))
        .unwrap()
        .labels()
        .iter()
        .all(|&y| y == 0));
    assert!(
        cgan(
            p,
            &["generate", "--run", "nowhere", "--n", "5", "--out", "x.csv"]
        )
        .status
        .code()
            == Some(2)
    );
}

#[test]
fn filtered_samples_all_pass_the_region_check() {
    let dir = trained();
    let p = dir.path();
    assert!(calibrate(p, "0.02", "cal.json").status.success());
    ok(
        p,
        &[
            "generate",
            "--run",
            "run",
            "--n",
            "400",
            "--seed",
            "1",
            "--out",
            "kept.csv",
            "--filter-region",
            "--calibrator",
            "cal.json",
        ],
    );
    let kept = load_csv(&p.join("kept.csv")).unwrap();
    assert!(kept.len() <= 400);
    let cal = Calibrator::load(&p.join("cal.json")).unwrap();
    let disc = Checkpoint::load(&p.join("run/disc.json"))
        .unwrap()
        .into_model()
        .unwrap();
    let st: Standardizer =
        serde_json::from_str(&std::fs::read_to_string(p.join("run/standardizer.json")).unwrap())
            .unwrap();
    let kept = kept
        .with_n_classes(3)
        .unwrap()
        .standardize_with(&st)
        .unwrap();
    for i in 0..kept.len() {
        let (x, y) = kept.point(i);
        assert!(cal.p_value(x, y, &disc).unwrap() > cal.alpha());
    }
}

#[test]
fn evaluate_identical_inputs() {
    let dir = trained();
    let p = dir.path();
    let out = ok(
        p,
        &[
            "evaluate",
            "--real",
            "data_test.csv",
            "--synth",
            "data_test.csv",
            "--out",
            "eval",
        ],
    );
    assert!(
        out.starts_with("ks_mean,wasserstein_mean,downstream_accuracy\n0,0,"),
        "{out}"
    );
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("eval/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["ks_mean"].as_f64(), Some(0.0));
    assert_eq!(report["wasserstein_mean"].as_f64(), Some(0.0));
    assert!(report.get("ece").is_none());
    assert!(!p.join("eval/fig2_coverage_efficiency.csv").exists());
}

#[test]
fn evaluate_curves_need_a_calibrator() {
    let dir = trained();
    let p = dir.path();
    let out = cgan(
        p,
        &[
            "evaluate",
            "--real",
            "data_test.csv",
            "--synth",
            "data_test.csv",
            "--curves",
            "--out",
            "eval",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(p.join("wide.csv"), "f0,f1,f2,label\n1,2,3,0\n").unwrap();
    let out = cgan(
        p,
        &[
            "evaluate",
            "--real",
            "data_test.csv",
            "--synth",
            "wide.csv",
            "--out",
            "eval",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
}

#[test]
fn end_to_end_report_ranges() {
    let dir = trained();
    let p = dir.path();
    assert!(calibrate(p, "0.1", "cal.json").status.success());
    ok(
        p,
        &[
            "generate",
            "--run",
            "run",
            "--n",
            "600",
            "--seed",
            "2",
            "--out",
            "synth.csv",
        ],
    );
    ok(
        p,
        &[
            "evaluate",
            "--real",
            "data_test.csv",
            "--synth",
            "synth.csv",
            "--run",
            "run",
            "--calibrator",
            "cal.json",
            "--calib",
            "data_calib.csv",
            "--curves",
            "--out",
            "eval",
        ],
    );
    let r: Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("eval/report.json")).unwrap())
            .unwrap();
    let f = |k: &str| r[k].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f("ks_mean")));
    assert!(f("wasserstein_mean") >= 0.0);
    assert!((0.0..=1.0).contains(&f("downstream_accuracy")));
    assert!(f("efficiency") > 0.0 && f("efficiency") <= 1.0);
    assert!(f("ece") >= 0.0);
    for (_, v) in r["coverage_at_alpha"].as_object().unwrap() {
        assert!((0.0..=1.0).contains(&v.as_f64().unwrap()));
    }
    for name in [
        "fig2_coverage_efficiency",
        "fig3_calibration",
        "fig4_width_density",
    ] {
        let text = std::fs::read_to_string(p.join(format!("eval/{name}.csv"))).unwrap();
        assert!(text.lines().count() >= 2, "{name} is empty");
    }
    let fig2 = std::fs::read_to_string(p.join("eval/fig2_coverage_efficiency.csv")).unwrap();
    let cov: Vec<f64> = fig2
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(cov.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn help_exits_cleanly_and_bad_flags_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cgan(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(
        cgan(dir.path(), &["train", "--bogus"]).status.code(),
        Some(2)
    );
}

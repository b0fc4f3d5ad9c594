use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn aist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aist"))
        .args(args)
        .env_remove("AIST_EPOCHS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = aist(args);
    assert!(
        out.status.success(),
        "aist {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// Small synthetic city plus a quick desk-sized config.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("quick.toml"),
            "train_months = 2\nepochs = 2\nmax_train_windows = 40\nmax_eval_windows = 40\n",
        )
        .unwrap();
        let f = Self { dir };
        ok(&["synth", "--regions", "4", "--months", "3", "--out", s(&f.data())]);
        f
    }

    fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("quick.toml")
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str) -> PathBuf {
        let out = self.path(out);
        ok(&[
            "train",
            "--preset",
            "desk",
            "--config",
            s(&self.config()),
            "--data",
            s(&self.data()),
            "--out",
            s(&out),
        ]);
        out
    }
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Output digests keyed by file name.
fn digests(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| {
            let p = PathBuf::from(o["path"].as_str().unwrap());
            let rel = p.strip_prefix(dir).unwrap_or(&p).to_string_lossy().into_owned();
            (rel, o["sha256"].as_str().unwrap().to_string())
        })
        .collect()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn synth_is_byte_identical_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        ok(&[
            "synth",
            "--regions",
            "5",
            "--months",
            "2",
            "--seed",
            "4",
            "--out",
            s(out),
        ]);
    }
    ok(&[
        "synth",
        "--regions",
        "5",
        "--months",
        "2",
        "--seed",
        "5",
        "--out",
        s(&c),
    ]);
    assert_eq!(digests(&a), digests(&b));
    assert_ne!(digests(&a), digests(&c));
    for name in [
        "crimes.csv",
        "taxi.csv",
        "poi.csv",
        "city.graph",
        "tensors.bin",
        "informative.csv",
    ] {
        assert!(a.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn ingest_logs_bad_rows_and_reruns_identically() {
    let f = Fixture::new();
    let crimes = f.path("crimes.csv");
    let mut text = std::fs::read_to_string(f.data().join("crimes.csv")).unwrap();
    text.push_str("not-a-time,theft,1\n");
    std::fs::write(&crimes, text).unwrap();
    let run = |out: &Path| {
        aist(&[
            "ingest",
            "--crimes",
            s(&crimes),
            "--taxi",
            s(&f.data().join("taxi.csv")),
            "--poi",
            s(&f.data().join("poi.csv")),
            "--graph",
            s(&f.data().join("city.graph")),
            "--start",
            "2019-01-01",
            "--end",
            "2019-04-01",
            "--categories",
            "theft,criminal_damage",
            "--out",
            s(out),
        ])
    };
    let (a, b) = (f.path("ing_a"), f.path("ing_b"));
    let first = run(&a);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(String::from_utf8_lossy(&first.stderr).contains("rejected 1"));
    assert!(run(&b).status.success());
    assert_eq!(digests(&a), digests(&b));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(a.join("ingest_report.json")).unwrap()).unwrap();
    let rejected: u64 = report["crimes"]["rejected"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(rejected, 1);
    // The cache matches the one synth built from the clean files.
    assert_eq!(
        std::fs::read(a.join("tensors.bin")).unwrap(),
        std::fs::read(f.data().join("tensors.bin")).unwrap()
    );
}

#[test]
fn ingest_fails_on_a_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = aist(&[
        "ingest",
        "--crimes",
        s(&missing),
        "--taxi",
        s(&missing),
        "--poi",
        s(&missing),
        "--out",
        s(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn train_writes_checkpoint_and_metrics_deterministically() {
    let f = Fixture::new();
    let a = f.train("train_a");
    let b = f.train("train_b");
    assert_eq!(digests(&a), digests(&b));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(a.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["variant"], "aist");
    assert_eq!(m["config"]["category"], "theft");
    assert_eq!(m["log"]["epochs"].as_array().unwrap().len(), 2);
    assert!(m["test"]["mae"].as_f64().unwrap().is_finite());
    assert!(a.join("checkpoint.bin").is_file() && a.join("training.svg").is_file());
    assert_eq!(manifest(&a)["config"]["hidden_dim"], 16);
}

#[test]
fn config_precedence_puts_seed_flag_last() {
    let f = Fixture::new();
    let out = f.path("seeded");
    let run = Command::new(env!("CARGO_BIN_EXE_aist"))
        .args([
            "train",
            "--preset",
            "desk",
            "--config",
            s(&f.config()),
            "--data",
            s(&f.data()),
            "--out",
            s(&out),
            "--seed",
            "9",
        ])
        .env("AIST_EPOCHS", "1")
        .env("AIST_SEED", "3")
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["epochs"], 1);
    assert_eq!(m["config"]["seed"], 9);
    assert_eq!(m["seed"], 9);
}

#[test]
fn eval_explain_and_faithfulness_run_from_a_checkpoint() {
    let f = Fixture::new();
    let trained = f.train("train");
    let ckpt = trained.join("checkpoint.bin");

    let ev = f.path("eval");
    ok(&[
        "eval",
        "--data",
        s(&f.data()),
        "--checkpoint",
        s(&ckpt),
        "--split",
        "val",
        "--out",
        s(&ev),
    ]);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(ev.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["split"], "val");
    let rows = csv_rows(&ev.join("predictions.csv"));
    assert_eq!(rows.len() as u64, m["metrics"]["count"].as_u64().unwrap());

    let ex = f.path("explain");
    ok(&[
        "explain",
        "--data",
        s(&f.data()),
        "--checkpoint",
        s(&ckpt),
        "--samples",
        "5",
        "--out",
        s(&ex),
    ]);
    for name in [
        "region_heatmap",
        "region_norm_heatmap",
        "feature_heatmap",
        "trend_heatmap",
    ] {
        assert_eq!(csv_rows(&ex.join(format!("{name}.csv"))).len(), 5, "{name}");
    }
    for name in ["region_heatmap.svg", "feature_heatmap.svg", "trend_heatmap.svg"] {
        assert!(std::fs::read_to_string(ex.join(name)).unwrap().starts_with("<svg"));
    }
    let info: Value = serde_json::from_str(&std::fs::read_to_string(ex.join("explain.json")).unwrap()).unwrap();
    assert!(info["max_identity_residual"].as_f64().unwrap() < 1e-8);

    let fa = f.path("faith");
    ok(&[
        "faithfulness",
        "--data",
        s(&f.data()),
        "--checkpoint",
        s(&ckpt),
        "--lambdas",
        "0.001,0.01,0.1",
        "--adv-epochs",
        "1",
        "--no-uniform",
        "--out",
        s(&fa),
    ]);
    let rows = csv_rows(&fa.join("curve.csv"));
    let mut lambdas: Vec<String> = rows.iter().map(|r| r[1].clone()).collect();
    lambdas.dedup();
    assert_eq!(lambdas, ["0.001", "0.01", "0.1"]);
    for name in ["report.json", "references.csv", "mae.csv", "tvd_jsd.svg"] {
        assert!(fa.join(name).is_file(), "{name} missing");
    }

    let refs = f.path("refs_only");
    ok(&[
        "faithfulness",
        "--data",
        s(&f.data()),
        "--checkpoint",
        s(&ckpt),
        "--no-adversary",
        "--seeds",
        "1",
        "--out",
        s(&refs),
    ]);
    assert!(csv_rows(&refs.join("curve.csv")).is_empty());
    let variants: Vec<String> = csv_rows(&refs.join("references.csv"))
        .iter()
        .map(|r| r[1].clone())
        .collect();
    assert!(variants.iter().any(|v| v == "uniform"));
    assert!(variants.len() > 1);
}

#[test]
fn ablate_reports_the_requested_variant() {
    let f = Fixture::new();
    let out = f.path("ablate");
    ok(&[
        "ablate",
        "--preset",
        "desk",
        "--config",
        s(&f.config()),
        "--data",
        s(&f.data()),
        "--variant",
        "aist_r",
        "--out",
        s(&out),
    ]);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("aist_r/metrics.json")).unwrap()).unwrap();
    assert_eq!(m["variant"], "aist_r");
    assert_eq!(m["config"]["streams"], "r");
    let rows = csv_rows(&out.join("ablation.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "aist_r");
}

#[test]
fn sweep_trains_one_model_per_value() {
    let f = Fixture::new();
    let out = f.path("sweep");
    ok(&[
        "sweep",
        "--preset",
        "desk",
        "--config",
        s(&f.config()),
        "--data",
        s(&f.data()),
        "--param",
        "hidden_dim",
        "--values",
        "4,8",
        "--out",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["4", "8"]);
    assert!(out.join("sweep.svg").is_file());

    let bad = aist(&[
        "sweep",
        "--preset",
        "desk",
        "--data",
        s(&f.data()),
        "--param",
        "no_such_setting",
        "--values",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(!bad.status.success());
}

#[test]
fn usage_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    let conflicting = aist(&[
        "faithfulness",
        "--data",
        d,
        "--checkpoint",
        d,
        "--no-adversary",
        "--lambdas",
        "0.1",
        "--out",
        d,
    ]);
    assert_eq!(conflicting.status.code(), Some(2));
    let variant = aist(&["train", "--data", d, "--variant", "aist_z", "--out", d]);
    assert_eq!(variant.status.code(), Some(2));
    let preset = aist(&["train", "--data", d, "--preset", "huge", "--out", d]);
    assert_eq!(preset.status.code(), Some(1));
    let empty = aist(&[]);
    assert!(!empty.status.success());
}

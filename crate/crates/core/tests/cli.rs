use std::path::{Path, PathBuf};
use std::process::Command;

use ctxlasso::cli::{run, ArchiveSchema, ModelArchive, Provenance};
use ctxlasso::data::{load_table, TableSchema};
use ctxlasso::network::{init_network, NetworkConfig, Task};
use ctxlasso::training::{Constraints, FittedModel};
use sha2::{Digest, Sha256};

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["ctxlasso"];
    full.extend_from_slice(args);
    run(full)
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    /// Small simulated train/val/test splits, shared by most tests.
    fn simulate(&self, extra: &[&str]) -> String {
        let out = self.path("sim");
        let mut args = vec![
            "simulate",
            "--p",
            "4",
            "--m",
            "2",
            "--n",
            "250",
            "--seed",
            "5",
            "--splits",
            "--calibration-samples",
            "50000",
            "--out",
            &out,
        ];
        args.extend_from_slice(extra);
        assert_eq!(cli(&args), 0);
        out
    }

    fn fit(&self, sim: &str, out: &str, extra: &[&str]) -> i32 {
        let train = format!("{sim}_train.csv");
        let val = format!("{sim}_val.csv");
        let out = self.path(out);
        let mut args = vec![
            "fit",
            "--train",
            &train,
            "--val",
            &val,
            "--contextual",
            "z1,z2",
            "--n-lambda",
            "6",
            "--max-epochs",
            "60",
            "--seed",
            "2",
            "--quiet",
            "--out",
            &out,
        ];
        args.extend_from_slice(extra);
        cli(&args)
    }
}

fn read_csv(path: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn simulate_is_deterministic() {
    let a = Workspace::new();
    let b = Workspace::new();
    for ws in [&a, &b] {
        let out = ws.path("d");
        assert_eq!(
            cli(&[
                "simulate",
                "--p",
                "10",
                "--m",
                "2",
                "--n",
                "1000",
                "--seed",
                "1",
                "--calibration-samples",
                "20000",
                "--out",
                &out
            ]),
            0
        );
    }
    for f in ["d.csv", "d_truth.csv"] {
        assert_eq!(digest(Path::new(&a.path(f))), digest(Path::new(&b.path(f))));
    }
}

#[test]
fn simulate_rejects_uncalibrated_sparsity() {
    let ws = Workspace::new();
    let out = ws.path("d");
    let code = cli(&[
        "simulate",
        "--sparsity-min",
        "0.5",
        "--sparsity-max",
        "0.5",
        "--out",
        &out,
    ]);
    assert_ne!(code, 0);
    assert!(!Path::new(&format!("{out}.csv")).exists());
}

#[test]
fn simulate_classification_is_binary() {
    let ws = Workspace::new();
    let out = ws.path("c");
    assert_eq!(
        cli(&[
            "simulate",
            "--p",
            "3",
            "--m",
            "2",
            "--n",
            "300",
            "--task",
            "classification",
            "--calibration-samples",
            "20000",
            "--out",
            &out
        ]),
        0
    );
    let (header, rows) = read_csv(&format!("{out}.csv"));
    let y = header.iter().position(|h| h == "y").unwrap();
    assert!(rows.iter().all(|r| r[y] == "0" || r[y] == "1"));
}

#[test]
fn config_file_supplies_flags() {
    let ws = Workspace::new();
    let cfg = ws.path("cfg.json");
    let out = ws.path("fromcfg");
    std::fs::write(
        &cfg,
        format!(r#"{{"p": 3, "m": 1, "n": 50, "calibration_samples": 10000, "out": "{out}"}}"#),
    )
    .unwrap();
    assert_eq!(cli(&["simulate", "--config", &cfg]), 0);
    let (header, rows) = read_csv(&format!("{out}.csv"));
    assert_eq!(header, vec!["y", "x1", "x2", "x3", "z1"]);
    assert_eq!(rows.len(), 50);
}

#[test]
fn fit_is_deterministic_and_reports_every_lambda() {
    let ws = Workspace::new();
    let sim = ws.simulate(&[]);
    assert_eq!(ws.fit(&sim, "a.json", &[]), 0);
    assert_eq!(ws.fit(&sim, "b.json", &[]), 0);
    let ra = ws.path("a.json.path.csv");
    assert_eq!(digest(Path::new(&ra)), digest(Path::new(&ws.path("b.json.path.csv"))));
    assert_eq!(
        digest(Path::new(&ws.path("a.json"))),
        digest(Path::new(&ws.path("b.json")))
    );
    let (header, rows) = read_csv(&ra);
    assert_eq!(
        header,
        vec![
            "lambda",
            "gamma",
            "validation_loss",
            "unrelaxed_validation_loss",
            "avg_sparsity",
            "epochs"
        ]
    );
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[5][0], "0");
}

#[test]
fn constant_lasso_coefficients_ignore_context() {
    let ws = Workspace::new();
    let sim = ws.simulate(&[]);
    assert_eq!(ws.fit(&sim, "c.json", &["--mode", "constant-lasso"]), 0);
    let out = ws.path("coef.csv");
    assert_eq!(
        cli(&[
            "predict",
            "--model",
            &ws.path("c.json"),
            "--data",
            &format!("{sim}_test.csv"),
            "--coefficients",
            "--out",
            &out
        ]),
        0
    );
    let (header, rows) = read_csv(&out);
    assert_eq!(header[..3], ["prediction", "intercept", "beta_x1"]);
    for r in &rows {
        assert_eq!(r[1..], rows[0][1..]);
    }
}

#[test]
fn sign_constraints_hold_on_every_training_row() {
    let ws = Workspace::new();
    let sim = ws.simulate(&[]);
    assert_eq!(ws.fit(&sim, "s.json", &["--nonneg", "x1,x2", "--nonpos", "x4"]), 0);
    let out = ws.path("coef.csv");
    assert_eq!(
        cli(&[
            "predict",
            "--model",
            &ws.path("s.json"),
            "--data",
            &format!("{sim}_train.csv"),
            "--coefficients",
            "--out",
            &out
        ]),
        0
    );
    let (header, rows) = read_csv(&out);
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    for r in &rows {
        assert!(r[col("beta_x1")].parse::<f64>().unwrap() >= 0.0);
        assert!(r[col("beta_x2")].parse::<f64>().unwrap() >= 0.0);
        assert!(r[col("beta_x4")].parse::<f64>().unwrap() <= 0.0);
    }
}

#[test]
fn grouped_fit_zeroes_whole_groups() {
    let ws = Workspace::new();
    let sim = ws.simulate(&[]);
    assert_eq!(ws.fit(&sim, "g.json", &["--groups", "x1,x2;x3;x4"]), 0);
    let archive = ModelArchive::load(Path::new(&ws.path("g.json"))).unwrap();
    let test = load_table(
        Path::new(&format!("{sim}_test.csv")),
        &TableSchema::new("y", &["z1", "z2"], Task::Regression),
    )
    .unwrap();
    let c = archive.model.coefficients_raw(&test).unwrap();
    for row in c.beta.rows() {
        assert_eq!(row[0] == 0.0, row[1] == 0.0);
    }
}

#[test]
fn predictions_match_in_memory_model_and_coefficient_zeros_match_support() {
    let ws = Workspace::new();
    let sim = ws.simulate(&[]);
    assert_eq!(ws.fit(&sim, "m.json", &[]), 0);
    let archive = ModelArchive::load(Path::new(&ws.path("m.json"))).unwrap();
    let data = format!("{sim}_train.csv");
    let out = ws.path("pred.csv");
    assert_eq!(
        cli(&[
            "predict",
            "--model",
            &ws.path("m.json"),
            "--data",
            &data,
            "--coefficients",
            "--out",
            &out
        ]),
        0
    );
    let ds = load_table(
        Path::new(&data),
        &TableSchema::new("y", &["z1", "z2"], Task::Regression),
    )
    .unwrap();
    let expected = archive.model.predict(&ds).unwrap();
    let support = ctxlasso::metrics::support(&archive.model, &ds).unwrap();
    let (_, rows) = read_csv(&out);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0].parse::<f64>().unwrap().to_bits(), expected[i].to_bits());
        for j in 0..4 {
            assert_eq!(r[2 + j].parse::<f64>().unwrap() == 0.0, !support[[i, j]]);
        }
    }
}

#[test]
fn predict_rejects_mismatched_columns() {
    let ws = Workspace::new();
    let sim = ws.simulate(&[]);
    assert_eq!(ws.fit(&sim, "m.json", &[]), 0);
    let other = ws.path("other");
    assert_eq!(
        cli(&[
            "simulate",
            "--p",
            "3",
            "--m",
            "2",
            "--n",
            "40",
            "--calibration-samples",
            "10000",
            "--out",
            &other
        ]),
        0
    );
    let out = ws.path("p.csv");
    assert_ne!(
        cli(&[
            "predict",
            "--model",
            &ws.path("m.json"),
            "--data",
            &format!("{other}.csv"),
            "--out",
            &out
        ]),
        0
    );
}

fn intercept_only_archive(ws: &Workspace, sim: &str) -> PathBuf {
    let schema = TableSchema::new("y", &["z1", "z2"], Task::Regression);
    let train = load_table(Path::new(&format!("{sim}_train.csv")), &schema).unwrap();
    let mean = train.y.sum() / train.n() as f64;
    let mut net = init_network(NetworkConfig::constant(4, 2)).unwrap();
    net.layers.last_mut().unwrap().bias[4] = mean;
    let model = FittedModel {
        network: net,
        polished_network: None,
        theta_hat: 0.0,
        lambda: 0.0,
        gamma: 0.0,
        constraints: Constraints::default(),
        standardizer: None,
        task: Task::Regression,
        validation_loss: 0.0,
    };
    let archive = ModelArchive::new(
        model,
        ArchiveSchema {
            response: "y".into(),
            explanatory: train.x_names.clone(),
            contextual: train.z_names.clone(),
        },
        mean,
        Provenance {
            seed: 0,
            config_digest: String::new(),
            mode: "constant-lasso".into(),
        },
    );
    let path = PathBuf::from(ws.path("io.json"));
    archive.save(&path).unwrap();
    path
}

#[test]
fn evaluate_intercept_only_model() {
    let ws = Workspace::new();
    let sim = ws.simulate(&[]);
    let model = intercept_only_archive(&ws, &sim);
    let model = model.to_str().unwrap();
    let out = ws.path("eval.csv");
    let test = format!("{sim}_test.csv");
    let truth = format!("{sim}_test_truth.csv");
    assert_eq!(
        cli(&[
            "evaluate",
            "--model",
            model,
            "--test",
            &test,
            "--truth",
            &truth,
            "--f1",
            "--stability",
            model,
            "--out",
            &out
        ]),
        0
    );
    let (header, rows) = read_csv(&out);
    assert_eq!(
        header,
        vec![
            "relative_loss",
            "avg_sparsity_count",
            "avg_sparsity_proportion",
            "f1",
            "hamming_instability"
        ]
    );
    assert_eq!(rows[0][0], "1");
    assert_eq!(rows[0][1], "0");
    assert_eq!(rows[0][2], "0");
    assert_eq!(rows[0][3], "0");
    assert_eq!(rows[0][4], "0");
}

#[test]
fn evaluate_requires_truth_for_f1() {
    let ws = Workspace::new();
    let sim = ws.simulate(&[]);
    assert_eq!(ws.fit(&sim, "m.json", &[]), 0);
    let out = ws.path("e.csv");
    assert_ne!(
        cli(&[
            "evaluate",
            "--model",
            &ws.path("m.json"),
            "--test",
            &format!("{sim}_test.csv"),
            "--f1",
            "--out",
            &out
        ]),
        0
    );
}

#[test]
fn errors_are_one_categorized_line() {
    let ws = Workspace::new();
    let bin = env!("CARGO_BIN_EXE_ctxlasso");
    let missing = ws.path("nope.csv");
    let out = Command::new(bin)
        .args([
            "fit",
            "--train",
            &missing,
            "--val",
            &missing,
            "--contextual",
            "z1",
            "--out",
            &ws.path("x.json"),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error[io]: "), "{stderr}");

    let bad = ws.path("bad.csv");
    std::fs::write(&bad, "y,x1,z1\n1,2,3\n1,oops,3\n").unwrap();
    let out = Command::new(bin)
        .args([
            "fit",
            "--train",
            &bad,
            "--val",
            &bad,
            "--contextual",
            "z1",
            "--out",
            &ws.path("x.json"),
        ])
        .output()
        .unwrap();
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error[data]: "), "{stderr}");
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn repeat_writes_one_archive_per_seed() {
    let ws = Workspace::new();
    let sim = ws.simulate(&[]);
    assert_eq!(ws.fit(&sim, "r.json", &["--repeat", "2", "--n-lambda", "3"]), 0);
    for seed in [2, 3] {
        assert!(Path::new(&ws.path(&format!("r.json.seed{seed}"))).exists());
        assert!(Path::new(&ws.path(&format!("r.json.seed{seed}.path.csv"))).exists());
    }
}

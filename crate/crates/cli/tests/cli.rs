mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ffbench::{emit_plot_data, run_benchmark, BenchError, RunConfig, RESULTS_CSV, RESULTS_HEADER};
use serde_json::{json, Value};

fn small_config(data: &Path, out: &Path, goodness: &[&str], epochs: usize, layers: &[usize]) -> RunConfig {
    let mut cfg = RunConfig {
        goodness: goodness.iter().map(|s| s.to_string()).collect(),
        seed: 7,
        data_dir: Some(data.to_path_buf()),
        out: out.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.ff.insert("layer_sizes".into(), json!(layers));
    cfg.ff.insert("epochs".into(), json!(epochs));
    cfg.ff.insert("batch_size".into(), json!(20));
    cfg.ff.insert("eval_subset".into(), json!(40));
    cfg.ff.insert("probe".into(), json!({ "epochs": 2 }));
    cfg
}

fn fixture() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    common::write_synthetic_mnist(&data, 120, 40, 3);
    (dir, data)
}

#[test]
fn results_header_is_frozen() {
    let golden = "goodness,class_acc,multipass_acc,class_loss,emissions_g,energy_kwh,flops,seed,config_hash";
    assert_eq!(RESULTS_HEADER, golden);
    let (dir, data) = fixture();
    let out = dir.path().join("out");
    run_benchmark(
        &small_config(&data, &out, &["sum_of_squares"], 1, &[16, 16])
            .resolve()
            .unwrap(),
    )
    .unwrap();
    let text = fs::read_to_string(out.join(RESULTS_CSV)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(golden));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 9);
    assert_eq!((row[0], row[7]), ("sum_of_squares", "7"));
    for acc in [row[1], row[2]] {
        let v: f64 = acc.parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn config_hash_tracks_meaningful_fields_only() {
    let base = RunConfig::default();
    let hash = |cfg: &RunConfig, g: &str| cfg.resolve().unwrap().config_hash(g);
    let h0 = hash(&base, "sum_of_squares");

    let cosmetic = [
        RunConfig {
            out: "elsewhere".into(),
            ..base.clone()
        },
        RunConfig {
            data_dir: Some("/x".into()),
            ..base.clone()
        },
        RunConfig {
            goodness: vec!["bcm".into()],
            ..base.clone()
        },
    ];
    for cfg in &cosmetic {
        assert_eq!(hash(cfg, "sum_of_squares"), h0);
    }
    // an alias resolves to the same canonical objective
    let huber = base.resolve().unwrap().config_hash("huber_norm");
    assert_eq!(
        RunConfig {
            goodness: vec!["huber".into()],
            ..base.clone()
        }
        .resolve()
        .unwrap()
        .goodness[0],
        "huber_norm"
    );

    let mut changed = vec![
        RunConfig {
            seed: 1,
            ..base.clone()
        },
        RunConfig {
            dataset: "cifar10".parse().unwrap(),
            ..base.clone()
        },
        RunConfig {
            desk_scale: true,
            ..base.clone()
        },
        RunConfig {
            train_subset: Some(5),
            ..base.clone()
        },
        RunConfig {
            test_subset: Some(5),
            ..base.clone()
        },
    ];
    let mut power = base.clone();
    power.power.grid_intensity_g_per_kwh += 1.0;
    changed.push(power);
    for (key, value) in [
        ("epochs", json!(3)),
        ("lr", json!(0.002)),
        ("layer_sizes", json!([10, 10])),
        ("params", json!({ "temperature": 2.0 })),
        ("adam", json!({ "beta1": 0.8 })),
    ] {
        let mut cfg = base.clone();
        cfg.ff.insert(key.into(), value);
        changed.push(cfg);
    }
    let mut seen = vec![h0.clone(), huber.clone()];
    for cfg in &changed {
        let h = hash(cfg, "sum_of_squares");
        assert!(!seen.contains(&h), "hash collision for {cfg:?}");
        seen.push(h);
    }
    assert_ne!(huber, h0);

    // an override equal to the default is not a change
    let mut same = base.clone();
    same.ff.insert("epochs".into(), json!(20));
    assert_eq!(hash(&same, "sum_of_squares"), h0);
}

#[test]
fn plot_data_cardinality() {
    let (dir, data) = fixture();
    let out = dir.path().join("out");
    let cfg = small_config(&data, &out, &["sum_of_squares", "huber_norm"], 3, &[12, 12, 12, 12]);
    let mut cfg = cfg;
    cfg.ff.insert("readout_from_layer".into(), json!(1));
    run_benchmark(&cfg.resolve().unwrap()).unwrap();

    let plot = emit_plot_data(&out, false).unwrap();
    assert!(plot.missing.is_empty());
    let loss: Vec<_> = plot.rows.iter().filter(|r| r.metric == "loss").collect();
    assert_eq!(loss.len(), 6);
    assert!(loss.iter().all(|r| r.layer.is_none()));

    let layers: std::collections::BTreeSet<usize> = plot
        .rows
        .iter()
        .filter(|r| r.metric == "ff_accuracy")
        .filter_map(|r| r.layer)
        .collect();
    assert_eq!(layers.into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    // same result from the series directory itself
    assert_eq!(emit_plot_data(&out.join("series"), false).unwrap(), plot);

    fs::remove_file(out.join("series/huber_norm_layers.csv")).unwrap();
    match emit_plot_data(&out, false) {
        Err(BenchError::MissingSeries { missing, .. }) => assert_eq!(missing, vec!["huber_norm"]),
        other => panic!("expected missing series, got {other:?}"),
    }
    let partial = emit_plot_data(&out, true).unwrap();
    assert_eq!(partial.missing, vec!["huber_norm"]);
    assert!(partial.rows.iter().all(|r| r.goodness == "sum_of_squares"));
}

#[test]
fn empty_series_dir_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        emit_plot_data(dir.path(), true),
        Err(BenchError::MissingSeries { .. })
    ));
}

#[test]
fn identical_runs_write_identical_bytes() {
    let (dir, data) = fixture();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let cfg = small_config(&data, &out, &["sum_of_squares", "whitened_energy"], 2, &[16, 16]);
        run_benchmark(&cfg.resolve().unwrap()).unwrap();
        out
    };
    let (a, b) = (run("a"), run("b"));
    for file in [
        "results.csv",
        "results.json",
        "series/sum_of_squares_epochs.csv",
        "series/whitened_energy_layers.csv",
        "checkpoints/sum_of_squares.ffck",
        "checkpoints/whitened_energy.ffck",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn sweep_keeps_rows_for_failed_objectives() {
    let (dir, data) = fixture();
    let out = dir.path().join("out");
    let mut cfg = small_config(&data, &out, &["tempered_energy", "sum_of_squares"], 1, &[16, 16]);
    cfg.ff.insert("params".into(), json!({ "temperature": 1e-6 }));
    let outcome = run_benchmark(&cfg.resolve().unwrap()).unwrap();
    assert_eq!(outcome.rows().len(), 2);
    match outcome.non_finite_error() {
        Some(BenchError::NonFinite { goodness, diagnostics }) => {
            assert_eq!(goodness, vec!["tempered_energy"]);
            assert!(diagnostics.iter().any(|d| d.contains("temperature")));
        }
        other => panic!("expected non-finite report, got {other:?}"),
    }
    let csv = fs::read_to_string(out.join(RESULTS_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

fn ffbench(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ffbench"))
        .args(args)
        .env_remove("FF_DATA_DIR")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn stderr_json(stderr: &str) -> Value {
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

#[test]
fn binary_reports_structured_errors() {
    let (code, _, err) = ffbench(&["--goodness", "nope"]);
    assert_eq!(code, 1);
    assert_eq!(stderr_json(&err)["error"], "unknown_goodness");

    let empty = tempfile::tempdir().unwrap();
    let cfg = empty.path().join("c.json");
    fs::write(&cfg, format!(r#"{{"data_dir": {:?}}}"#, empty.path().join("none"))).unwrap();
    let (code, _, err) = ffbench(&["--config", cfg.to_str().unwrap(), "--desk-scale"]);
    assert_eq!(code, 1);
    assert_eq!(stderr_json(&err)["error"], "missing_data");

    let (code, _, err) = ffbench(&["--emit-plot-data", empty.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(stderr_json(&err)["error"], "missing_series");
}

#[test]
fn binary_runs_a_toml_config_and_flags_override_it() {
    let (dir, data) = fixture();
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 1\ngoodness = [\"bcm\"]\ndata_dir = {:?}\n[ff]\nlayer_sizes = [16, 16]\nbatch_size = 20\neval_subset = 20\n[ff.probe]\nepochs = 1\n",
            data
        ),
    )
    .unwrap();
    let (code, stdout, err) = ffbench(&[
        "--config",
        cfg.to_str().unwrap(),
        "--goodness",
        "sum_of_squares",
        "--goodness",
        "oja",
        "--seed",
        "7",
        "--epochs",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--emit-plot-data",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("plot_data.csv"));
    let rows = ffbench::read_results_csv(&out.join(RESULTS_CSV)).unwrap();
    let names: Vec<_> = rows.iter().map(|r| r.goodness.as_str()).collect();
    assert_eq!(names, vec!["sum_of_squares", "oja"]);
    assert!(rows.iter().all(|r| r.seed == 7));
    let meta: Value = serde_json::from_str(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(meta["runs"][0]["config"]["epochs"], 2);
    let plot = fs::read_to_string(out.join("plot_data.csv")).unwrap();
    assert!(plot.starts_with("epoch,metric,layer,goodness,value\n"));
}

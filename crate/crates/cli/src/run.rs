//! Sweeps over goodness objectives and the files they produce.
//!
//! Output directory layout:
//!
//! ```text
//! results.csv                  one ResultRow per goodness
//! results.json                 resolved configs, power model, diagnostics
//! timing.json                  wall-clock seconds per phase (not reproducible)
//! series/<goodness>_epochs.csv per-epoch network metrics
//! series/<goodness>_layers.csv per-epoch, per-layer metrics
//! checkpoints/<goodness>.ffck  trained network and RNG state
//! ```
//!
//! Everything except `timing.json` is byte-identical across runs with the same
//! config, provided the power model has `baseline_watts = 0`.

use std::fs;
use std::path::Path;

use ffgood::data::{load_dataset, Dataset};
use ffgood::engine::{
    is_numeric_failure, linear_probe, multipass_accuracy, EpochMetrics, FFConfig, ProbeReport, Trainer,
};
use ffgood::metering::{estimate_footprint, CostMeter, MeterSnapshot, Phase, FOOTPRINT_FORMULA};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ResolvedRun;
use crate::error::{BenchError, Result};

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const TIMING_JSON: &str = "timing.json";
pub const SERIES_DIR: &str = "series";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Frozen header of `results.csv`.
pub const RESULTS_HEADER: &str =
    "goodness,class_acc,multipass_acc,class_loss,emissions_g,energy_kwh,flops,seed,config_hash";

/// One line of `results.csv`. `class_*` come from the linear probe trained on
/// frozen features after training; `multipass_acc` is scored over the whole
/// test split in use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub goodness: String,
    pub class_acc: f64,
    pub multipass_acc: f64,
    pub class_loss: f64,
    pub emissions_g: f64,
    pub energy_kwh: f64,
    pub flops: u64,
    pub seed: u64,
    pub config_hash: String,
}

/// Everything produced for one goodness.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub row: ResultRow,
    pub config: FFConfig,
    pub epochs: Vec<EpochMetrics>,
    pub meter: MeterSnapshot,
    pub diagnostics: Vec<String>,
}

impl RunRecord {
    /// True if any epoch stopped early on a numeric failure or an evaluation
    /// came back non-finite.
    pub fn non_finite(&self) -> bool {
        self.epochs.iter().any(|e| e.aborted) || !self.row.multipass_acc.is_finite() || !self.row.class_loss.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub records: Vec<RunRecord>,
}

impl BenchOutcome {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.records.iter().map(|r| r.row.clone()).collect()
    }

    /// The structured error to report if any run hit non-finite values.
    pub fn non_finite_error(&self) -> Option<BenchError> {
        let bad: Vec<&RunRecord> = self.records.iter().filter(|r| r.non_finite()).collect();
        if bad.is_empty() {
            return None;
        }
        Some(BenchError::NonFinite {
            goodness: bad.iter().map(|r| r.row.goodness.clone()).collect(),
            diagnostics: bad.iter().flat_map(|r| r.diagnostics.iter().cloned()).collect(),
        })
    }
}

/// Loads the dataset named in `run` and applies its subsets.
pub fn load_run_data(run: &ResolvedRun) -> Result<Dataset> {
    let full = load_dataset(run.dataset, &run.data_root).map_err(|e| BenchError::MissingData {
        root: run.data_root.clone(),
        source: e,
    })?;
    Ok(full.truncated(run.train_subset, run.test_subset))
}

/// Trains and evaluates every goodness in `run`, writing all outputs under
/// `run.out`. Rows are written even when a run aborted; check
/// [`BenchOutcome::non_finite_error`] afterwards.
pub fn run_benchmark(run: &ResolvedRun) -> Result<BenchOutcome> {
    let data = load_run_data(run)?;
    run_on_dataset(run, &data)
}

/// [`run_benchmark`] on an already loaded dataset. Subsets in `run` are not
/// applied again.
pub fn run_on_dataset(run: &ResolvedRun, data: &Dataset) -> Result<BenchOutcome> {
    if data.train.is_empty() || data.test.is_empty() {
        return Err(BenchError::Config("train and test splits must be non-empty".into()));
    }
    let series_dir = run.out.join(SERIES_DIR);
    let ck_dir = run.out.join(CHECKPOINT_DIR);
    for dir in [&run.out, &series_dir, &ck_dir] {
        fs::create_dir_all(dir).map_err(|e| BenchError::output(dir, e))?;
    }

    let mut records = Vec::with_capacity(run.goodness.len());
    for name in &run.goodness {
        let record = run_one(run, data, name)?;
        write_series(&series_dir, &record)?;
        records.push(record);
    }
    let outcome = BenchOutcome { records };
    write_results_csv(&run.out.join(RESULTS_CSV), &outcome.rows())?;
    write_json(&run.out.join(RESULTS_JSON), &results_json(run, data, &outcome))?;
    write_json(&run.out.join(TIMING_JSON), &timing_json(&outcome))?;
    Ok(outcome)
}

fn run_one(run: &ResolvedRun, data: &Dataset, name: &str) -> Result<RunRecord> {
    let config = run.ff_for(name);
    let mut meter = CostMeter::new();
    let mut trainer = Trainer::new(data, config.clone())?;
    let mut epochs = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        epochs.push(trainer.run_epoch(&mut meter)?);
    }
    let mut diagnostics: Vec<String> = epochs.iter().flat_map(|e| e.diagnostics.iter().cloned()).collect();
    let ck_path = run.out.join(CHECKPOINT_DIR).join(format!("{name}.ffck"));
    trainer.checkpoint().save(&ck_path)?;

    let net = &trainer.network;
    let multipass = match meter.measure(Phase::Eval, || multipass_accuracy(net, &data.test)) {
        Ok(acc) => acc,
        Err(e) if is_numeric_failure(&e) => {
            diagnostics.push(format!("final multi-pass scoring failed: {e}"));
            f64::NAN
        }
        Err(e) => return Err(e.into()),
    };
    let probe = match meter.measure(Phase::Probe, || linear_probe(net, &data.train, &data.test)) {
        Ok(p) => p,
        Err(e) if is_numeric_failure(&e) => {
            diagnostics.push(format!("linear probe failed: {e}"));
            ProbeReport {
                accuracy: f64::NAN,
                loss: f64::NAN,
                train_loss: f64::NAN,
            }
        }
        Err(e) => return Err(e.into()),
    };

    let snapshot = meter.read();
    let footprint = estimate_footprint(&snapshot, &run.power)?;
    let row = ResultRow {
        goodness: name.to_string(),
        class_acc: probe.accuracy,
        multipass_acc: multipass,
        class_loss: probe.loss,
        emissions_g: footprint.emissions_g,
        energy_kwh: footprint.energy_kwh,
        flops: snapshot.total_flops(),
        seed: run.seed,
        config_hash: run.config_hash(name),
    };
    Ok(RunRecord {
        row,
        config,
        epochs,
        meter: snapshot,
        diagnostics,
    })
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::output(path, e))?;
    if rows.is_empty() {
        w.write_record(RESULTS_HEADER.split(','))
            .map_err(|e| BenchError::output(path, e))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| BenchError::output(path, e))?;
    }
    w.flush().map_err(|e| BenchError::output(path, e))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| BenchError::output(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| BenchError::output(path, e)))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EpochSeriesRow {
    pub epoch: usize,
    pub batches: usize,
    pub multipass_accuracy: f64,
    pub probe_train_loss: f64,
    pub probe_eval_loss: f64,
    pub probe_eval_accuracy: f64,
    pub aborted: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LayerSeriesRow {
    pub epoch: usize,
    pub layer: usize,
    pub loss: f64,
    pub peer_penalty: f64,
    pub ff_accuracy: f64,
    pub mean_goodness_pos: f64,
    pub mean_goodness_neg: f64,
}

pub fn epochs_series_path(dir: &Path, goodness: &str) -> std::path::PathBuf {
    dir.join(format!("{goodness}_epochs.csv"))
}

pub fn layers_series_path(dir: &Path, goodness: &str) -> std::path::PathBuf {
    dir.join(format!("{goodness}_layers.csv"))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::output(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| BenchError::output(path, e))?;
    }
    w.flush().map_err(|e| BenchError::output(path, e))
}

fn write_series(dir: &Path, record: &RunRecord) -> Result<()> {
    let name = &record.row.goodness;
    write_rows(
        &epochs_series_path(dir, name),
        record.epochs.iter().map(|e| EpochSeriesRow {
            epoch: e.epoch,
            batches: e.batches,
            multipass_accuracy: e.multipass_accuracy,
            probe_train_loss: e.probe_train_loss,
            probe_eval_loss: e.probe_eval_loss,
            probe_eval_accuracy: e.probe_eval_accuracy,
            aborted: e.aborted,
        }),
    )?;
    write_rows(
        &layers_series_path(dir, name),
        record.epochs.iter().flat_map(|e| {
            e.layers.iter().enumerate().map(|(layer, m)| LayerSeriesRow {
                epoch: e.epoch,
                layer,
                loss: m.loss,
                peer_penalty: m.peer_penalty,
                ff_accuracy: m.ff_accuracy,
                mean_goodness_pos: m.mean_goodness_pos,
                mean_goodness_neg: m.mean_goodness_neg,
            })
        }),
    )
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| BenchError::output(path, e))
}

fn flops_by_phase(m: &MeterSnapshot) -> serde_json::Value {
    json!({
        "train": m.train.flops,
        "eval": m.eval.flops,
        "probe": m.probe.flops,
        "saturated": m.saturated,
    })
}

fn results_json(run: &ResolvedRun, data: &Dataset, outcome: &BenchOutcome) -> serde_json::Value {
    let runs: Vec<_> = outcome
        .records
        .iter()
        .map(|r| {
            json!({
                "goodness": r.row.goodness,
                "config_hash": r.row.config_hash,
                "result": r.row,
                "config": r.config,
                "flops_by_phase": flops_by_phase(&r.meter),
                "aborted_epochs": r.epochs.iter().filter(|e| e.aborted).map(|e| e.epoch).collect::<Vec<_>>(),
                "diagnostics": r.diagnostics,
            })
        })
        .collect();
    let readout_from = run.ff.readout_from_layer;
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "dataset": run.dataset,
        "seed": run.seed,
        "desk_scale": run.desk_scale,
        "train_samples": data.train.len(),
        "test_samples": data.test.len(),
        "power_model": run.power,
        "footprint_formula": FOOTPRINT_FORMULA,
        "readout": {
            "multipass": format!(
                "argmax over labels of goodness summed over layers {readout_from}..{}",
                run.ff.layer_sizes.len()
            ),
            "class_acc": format!(
                "softmax probe on concatenated, length-normalized activations of layers {readout_from}..{} for a neutral-label input",
                run.ff.layer_sizes.len()
            ),
        },
        "conventions": [
            "subsets are the first N samples of each split, in file order",
            "flops count matrix products only (2*m*n*k); elementwise work is not metered",
            "energy and emissions are model estimates from flops, not measurements",
            "adam beta1 plays the role of momentum",
            "wall-clock timing is kept in timing.json so this file stays reproducible",
        ],
        "runs": runs,
    })
}

fn timing_json(outcome: &BenchOutcome) -> serde_json::Value {
    let runs: Vec<_> = outcome
        .records
        .iter()
        .map(|r| {
            json!({
                "goodness": r.row.goodness,
                "train_seconds": r.meter.train.wall_seconds,
                "eval_seconds": r.meter.eval.wall_seconds,
                "probe_seconds": r.meter.probe.wall_seconds,
                "total_seconds": r.meter.total_wall_seconds(),
            })
        })
        .collect();
    json!({ "runs": runs })
}

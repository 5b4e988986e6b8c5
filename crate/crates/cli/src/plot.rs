//! Long-format export of the per-epoch series.
//!
//! Each output row is `epoch,metric,layer,goodness,value`; `layer` is empty
//! for network-level metrics. Metric names:
//!
//! | metric               | layer | source column                      |
//! |----------------------|-------|------------------------------------|
//! | `loss`               |       | online probe training loss         |
//! | `multipass_accuracy` |       | multi-pass accuracy on eval subset |
//! | `probe_eval_loss`    |       | online probe loss on eval subset   |
//! | `probe_eval_accuracy`|       | online probe accuracy              |
//! | `layer_loss`         | yes   | FF loss                            |
//! | `peer_penalty`       | yes   | peer-normalization penalty         |
//! | `ff_accuracy`        | yes   | share of pairs with G_pos > G_neg  |
//! | `goodness_pos`       | yes   | mean positive goodness             |
//! | `goodness_neg`       | yes   | mean negative goodness             |

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::run::{
    epochs_series_path, layers_series_path, read_results_csv, EpochSeriesRow, LayerSeriesRow, RESULTS_CSV, SERIES_DIR,
};

pub const PLOT_DATA_CSV: &str = "plot_data.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub epoch: usize,
    pub metric: String,
    pub layer: Option<usize>,
    pub goodness: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub rows: Vec<PlotRow>,
    /// Goodness names whose series files were absent or incomplete.
    pub missing: Vec<String>,
}

const EPOCH_SUFFIX: &str = "_epochs.csv";
const LAYER_SUFFIX: &str = "_layers.csv";

/// Reads every series under `dir` (a run directory or its `series/`
/// subdirectory) into tidy rows ordered by goodness, then file order.
///
/// Goodness names come from `results.csv` when present, otherwise from the
/// file names. A name lacking either file is missing; that is an error unless
/// `allow_partial`, in which case the names are reported in
/// [`PlotData::missing`]. A directory with no series at all is an error.
pub fn emit_plot_data(dir: &Path, allow_partial: bool) -> Result<PlotData> {
    let series_dir = if dir.join(SERIES_DIR).is_dir() {
        dir.join(SERIES_DIR)
    } else {
        dir.to_path_buf()
    };
    let results = [dir.join(RESULTS_CSV), series_dir.join("..").join(RESULTS_CSV)]
        .into_iter()
        .find(|p| p.is_file());

    let mut found = BTreeSet::new();
    let entries = fs::read_dir(&series_dir).map_err(|e| BenchError::output(&series_dir, e))?;
    for entry in entries {
        let name = entry.map_err(|e| BenchError::output(&series_dir, e))?.file_name();
        let name = name.to_string_lossy();
        for suffix in [EPOCH_SUFFIX, LAYER_SUFFIX] {
            if let Some(g) = name.strip_suffix(suffix) {
                found.insert(g.to_string());
            }
        }
    }
    let expected: Vec<String> = match results {
        Some(p) => read_results_csv(&p)?.into_iter().map(|r| r.goodness).collect(),
        None => found.iter().cloned().collect(),
    };
    if found.is_empty() {
        return Err(BenchError::MissingSeries {
            dir: series_dir,
            missing: if expected.is_empty() {
                vec!["<no series files>".into()]
            } else {
                expected
            },
        });
    }

    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for g in &expected {
        let (ep, ly) = (epochs_series_path(&series_dir, g), layers_series_path(&series_dir, g));
        if !ep.is_file() || !ly.is_file() {
            missing.push(g.clone());
            continue;
        }
        for r in read_csv::<EpochSeriesRow>(&ep)? {
            for (metric, value) in [
                ("loss", r.probe_train_loss),
                ("multipass_accuracy", r.multipass_accuracy),
                ("probe_eval_loss", r.probe_eval_loss),
                ("probe_eval_accuracy", r.probe_eval_accuracy),
            ] {
                rows.push(PlotRow {
                    epoch: r.epoch,
                    metric: metric.into(),
                    layer: None,
                    goodness: g.clone(),
                    value,
                });
            }
        }
        for r in read_csv::<LayerSeriesRow>(&ly)? {
            for (metric, value) in [
                ("layer_loss", r.loss),
                ("peer_penalty", r.peer_penalty),
                ("ff_accuracy", r.ff_accuracy),
                ("goodness_pos", r.mean_goodness_pos),
                ("goodness_neg", r.mean_goodness_neg),
            ] {
                rows.push(PlotRow {
                    epoch: r.epoch,
                    metric: metric.into(),
                    layer: Some(r.layer),
                    goodness: g.clone(),
                    value,
                });
            }
        }
    }
    if !missing.is_empty() && !allow_partial {
        return Err(BenchError::MissingSeries {
            dir: series_dir,
            missing,
        });
    }
    Ok(PlotData { rows, missing })
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| BenchError::output(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| BenchError::output(path, e)))
        .collect()
}

pub fn write_plot_data(path: &Path, rows: &[PlotRow]) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::output(path, e))?;
    if rows.is_empty() {
        w.write_record(["epoch", "metric", "layer", "goodness", "value"])
            .map_err(|e| BenchError::output(path, e))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| BenchError::output(path, e))?;
    }
    w.flush().map_err(|e| BenchError::output(path, e))?;
    Ok(path.to_path_buf())
}

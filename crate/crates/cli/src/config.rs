//! Run configuration files and their resolution into engine configs.
//!
//! A config file is TOML (`.toml`) or JSON (anything else). Every key is
//! optional:
//!
//! ```toml
//! dataset = "mnist"                 # mnist | fashionmnist | cifar10 | stl10
//! goodness = ["sum_of_squares"]     # registry names, or ["all"]
//! seed = 0
//! desk_scale = true                 # 2x500 layers, 5 epochs, 10k/1k samples
//! train_subset = 10000              # first N training samples
//! test_subset = 1000                # first N test samples
//! data_dir = "data"                 # overrides FF_DATA_DIR
//! out = "runs/mnist"
//!
//! [power]                           # energy model, see ffgood::metering
//! watts_per_gflops = 1.0
//! baseline_watts = 0.0
//! grid_intensity_g_per_kwh = 475.0
//!
//! [ff]                              # any FFConfig field except seed/goodness
//! epochs = 5
//! layer_sizes = [500, 500]
//! [ff.params]
//! temperature = 1.0
//! ```

use std::path::{Path, PathBuf};

use ffgood::data::{data_root_from_env, DatasetName};
use ffgood::engine::{FFConfig, DESK_EVAL_SUBSET, DESK_TRAIN_SUBSET};
use ffgood::goodness::{names, registry_lookup};
use ffgood::metering::PowerModel;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};

pub const ALL_GOODNESS: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetName,
    pub goodness: Vec<String>,
    pub seed: u64,
    pub desk_scale: bool,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub out: PathBuf,
    pub power: PowerModel,
    /// Partial FFConfig laid over the full-scale or desk preset.
    pub ff: Map<String, Value>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetName::Mnist,
            goodness: Vec::new(),
            seed: 0,
            desk_scale: false,
            train_subset: None,
            test_subset: None,
            data_dir: None,
            out: PathBuf::from("results"),
            power: PowerModel::default(),
            ff: Map::new(),
        }
    }
}

/// A config with presets applied, names checked and paths settled.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub dataset: DatasetName,
    /// Canonical registry names in sweep order.
    pub goodness: Vec<String>,
    pub seed: u64,
    pub desk_scale: bool,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub data_root: PathBuf,
    pub out: PathBuf,
    pub power: PowerModel,
    /// Engine config with seed applied and goodness left at its default.
    pub ff: FFConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let parsed = if is_toml {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self) -> Result<ResolvedRun> {
        for key in ["seed", "goodness"] {
            if self.ff.contains_key(key) {
                return Err(BenchError::Config(format!(
                    "set '{key}' at the top level, not under [ff]"
                )));
            }
        }
        let base = if self.desk_scale {
            FFConfig::desk()
        } else {
            FFConfig::default()
        };
        let mut value = serde_json::to_value(&base).expect("FFConfig serializes");
        merge(&mut value, &Value::Object(self.ff.clone()));
        let mut ff: FFConfig = serde_json::from_value(value).map_err(|e| BenchError::Config(format!("[ff]: {e}")))?;
        ff.seed = self.seed;
        ff.validate().map_err(|e| BenchError::Config(e.to_string()))?;

        let (train_default, test_default) = if self.desk_scale {
            (Some(DESK_TRAIN_SUBSET), Some(DESK_EVAL_SUBSET))
        } else {
            (None, None)
        };
        Ok(ResolvedRun {
            dataset: self.dataset,
            goodness: resolve_goodness(&self.goodness)?,
            seed: self.seed,
            desk_scale: self.desk_scale,
            train_subset: self.train_subset.or(train_default),
            test_subset: self.test_subset.or(test_default),
            data_root: self
                .data_dir
                .clone()
                .or_else(data_root_from_env)
                .unwrap_or_else(|| PathBuf::from("data")),
            out: self.out.clone(),
            power: self.power,
            ff,
        })
    }
}

fn resolve_goodness(requested: &[String]) -> Result<Vec<String>> {
    if requested.is_empty() {
        return Ok(vec![FFConfig::default().goodness]);
    }
    let mut out: Vec<String> = Vec::new();
    for name in requested {
        let batch: Vec<String> = if name.trim().eq_ignore_ascii_case(ALL_GOODNESS) {
            names().into_iter().map(String::from).collect()
        } else {
            vec![registry_lookup(name)
                .map_err(BenchError::UnknownGoodness)?
                .name
                .to_string()]
        };
        for n in batch {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    Ok(out)
}

/// Recursively overwrites `base` with the entries of `over`.
fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

impl ResolvedRun {
    pub fn ff_for(&self, goodness: &str) -> FFConfig {
        FFConfig {
            goodness: goodness.to_string(),
            ..self.ff.clone()
        }
    }

    /// SHA-256 over everything that can change a result: dataset, subsets,
    /// the full engine config for this goodness, and the power model. Output
    /// and data paths are excluded.
    pub fn config_hash(&self, goodness: &str) -> String {
        let key = serde_json::json!({
            "dataset": self.dataset,
            "train_subset": self.train_subset,
            "test_subset": self.test_subset,
            "ff": self.ff_for(goodness),
            "power": self.power,
        });
        // serde_json maps are ordered by key, so the text is canonical
        format!("{:x}", Sha256::digest(key.to_string().as_bytes()))
    }
}

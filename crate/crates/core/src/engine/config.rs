use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goodness::{registry_lookup, GoodnessParams, Objective};

/// Adam moment decays and denominator guard. β₁ doubles as the "momentum"
/// hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputNorm {
    /// Divide every layer's input rows, the embedded image included, by their
    /// L2 norm (+1e-8).
    pub length_normalize_between_layers: bool,
}

impl Default for InputNorm {
    fn default() -> Self {
        Self {
            length_normalize_between_layers: true,
        }
    }
}

/// Settings for the linear classifier trained on frozen features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 1e-2,
            batch_size: 100,
        }
    }
}

/// Network, optimizer and evaluation settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FFConfig {
    pub layer_sizes: Vec<usize>,
    /// θ in the layer loss, shared by every objective.
    pub threshold: f64,
    pub lr: f64,
    /// Decoupled weight decay applied to weight matrices.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub peer_coeff: f64,
    pub goodness: String,
    pub params: GoodnessParams,
    pub seed: u64,
    pub input_norm: InputNorm,
    pub adam: AdamConfig,
    /// First layer (0-based) whose goodness or activations feed multi-pass
    /// scoring and the probe.
    pub readout_from_layer: usize,
    /// Test samples scored by multi-pass inference after every epoch.
    pub eval_subset: usize,
    /// Train a probe alongside the network to report a per-epoch
    /// classification loss.
    pub online_probe: bool,
    pub probe: ProbeConfig,
}

impl Default for FFConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![2000; 4],
            threshold: 2.0,
            lr: 1e-3,
            weight_decay: 3e-4,
            batch_size: 100,
            epochs: 20,
            peer_coeff: 0.03,
            goodness: "sum_of_squares".into(),
            params: GoodnessParams::default(),
            seed: 0,
            input_norm: InputNorm::default(),
            adam: AdamConfig::default(),
            readout_from_layer: 1,
            eval_subset: 1000,
            online_probe: true,
            probe: ProbeConfig::default(),
        }
    }
}

/// Sample counts kept by the desk-scale preset.
pub const DESK_TRAIN_SUBSET: usize = 10_000;
pub const DESK_EVAL_SUBSET: usize = 1_000;

impl FFConfig {
    /// Two 500-unit layers for five epochs; pair with the first
    /// [`DESK_TRAIN_SUBSET`] training and [`DESK_EVAL_SUBSET`] test samples.
    pub fn desk() -> Self {
        Self {
            layer_sizes: vec![500, 500],
            epochs: 5,
            eval_subset: DESK_EVAL_SUBSET,
            ..Self::default()
        }
    }

    pub fn objective(&self) -> Result<Objective> {
        Ok(registry_lookup(&self.goodness)?.objective)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("FFConfig", reason));
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return bad(format!(
                "layer_sizes must be non-empty and positive, got {:?}",
                self.layer_sizes
            ));
        }
        if !self.threshold.is_finite() {
            return bad(format!("threshold must be finite, got {}", self.threshold));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 || self.probe.batch_size == 0 {
            return bad("batch sizes must be >= 1".into());
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) || !(self.probe.lr >= 0.0) {
            return bad("learning rates and weight decay must be >= 0".into());
        }
        if !(self.peer_coeff >= 0.0) {
            return bad(format!("peer_coeff must be >= 0, got {}", self.peer_coeff));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("adam betas must be in [0, 1) and eps > 0".into());
        }
        if self.readout_from_layer >= self.layer_sizes.len() {
            return bad(format!(
                "readout_from_layer {} leaves no layers out of {}",
                self.readout_from_layer,
                self.layer_sizes.len()
            ));
        }
        self.params.validate()?;
        self.objective()?;
        Ok(())
    }
}

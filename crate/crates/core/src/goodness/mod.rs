//! Goodness objectives.
//!
//! Every objective maps a batch of layer activations `H` (B×N, one row per
//! sample) to a per-sample goodness `G` (B×1) and the gradient of each row's
//! goodness with respect to that same row (B×N). The objectives fall into
//! four families that differ in what a row's goodness may depend on:
//!
//! | family      | depends on                                         |
//! |-------------|----------------------------------------------------|
//! | pointwise   | the row only                                       |
//! | stateful    | the row and running statistics in [`GoodnessState`] |
//! | batch       | the row, other rows of the batch, and/or state     |
//! | contrastive | the row and the paired batch of the other polarity |
//!
//! Gradient contract: running statistics, attention weights and the
//! box-counting dimension are constants in the gradient. For batch and
//! contrastive objectives the gradient of row `b` is the partial derivative
//! with respect to row `b` with every other row (and the partner batch) held
//! fixed.

mod batch;
mod contrastive;
mod pointwise;
mod state;
mod stateful;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use batch::{box_counting_dimension, goodness_batch, BatchMode};
pub use contrastive::{goodness_contrastive, ContrastiveMode};
pub use pointwise::{goodness_pointwise, PointwiseMode};
pub use state::GoodnessState;
pub use stateful::{goodness_stateful, StatefulMode};

/// Per-sample goodness and its row-wise gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodnessResult {
    pub values: Matrix,
    pub grad: Matrix,
}

impl GoodnessResult {
    pub(crate) fn from_rows(values: Vec<f64>, grad: Matrix, op: &'static str) -> Result<Self> {
        let values = Matrix::column_vector(&values).ensure_finite(op)?;
        let grad = grad.ensure_finite(op)?;
        Ok(Self { values, grad })
    }
}

/// Objective hyperparameters. Defaults apply to every objective unless a run
/// config overrides them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoodnessParams {
    /// Huber transition point δ.
    pub delta: f64,
    /// Tempered-energy temperature T.
    pub temperature: f64,
    /// Fraction of most active units dropped by the trimmed energy.
    pub trim_fraction: f64,
    pub oja_alpha: f64,
    pub bcm_lambda: f64,
    pub infonce_weight: f64,
    pub pc_lambda: f64,
    pub ntxent_tau: f64,
    pub decorr_lambda: f64,
    pub fractal_weight: f64,
    pub l1_lambda: f64,
    pub triplet_weight: f64,
    /// Number of principal directions kept by the PCA energy.
    pub pca_k: usize,
    /// Ridge ε added to covariance estimates (whitening, Gaussian variance).
    pub shrinkage: f64,
    /// ε in the denominator of the L2-normalized energy.
    pub norm_eps: f64,
    /// Decay of the exponential moving averages in [`GoodnessState`].
    pub ema_decay: f64,
    /// Newton–Schulz iterations for the whitening matrix.
    pub whitening_iters: usize,
    /// Power iterations per principal direction.
    pub power_iters: usize,
}

impl Default for GoodnessParams {
    fn default() -> Self {
        Self {
            delta: 1.0,
            temperature: 1.0,
            trim_fraction: 0.1,
            oja_alpha: 0.1,
            bcm_lambda: 0.1,
            infonce_weight: 1.0,
            pc_lambda: 0.1,
            ntxent_tau: 0.5,
            decorr_lambda: 0.1,
            fractal_weight: 1.0,
            l1_lambda: 0.1,
            triplet_weight: 1.0,
            pca_k: 64,
            shrinkage: 1e-4,
            norm_eps: 1e-6,
            ema_decay: 0.9,
            whitening_iters: 40,
            power_iters: 50,
        }
    }
}

impl GoodnessParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("goodness params", reason));
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(self.ntxent_tau > 0.0) {
            return bad(format!("ntxent_tau must be > 0, got {}", self.ntxent_tau));
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta must be > 0, got {}", self.delta));
        }
        if !(self.trim_fraction > 0.0 && self.trim_fraction < 1.0) {
            return bad(format!("trim_fraction must be in (0, 1), got {}", self.trim_fraction));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad(format!("ema_decay must be in (0, 1), got {}", self.ema_decay));
        }
        if !(self.shrinkage > 0.0) || !(self.norm_eps > 0.0) {
            return bad("shrinkage and norm_eps must be > 0".into());
        }
        if self.pca_k == 0 {
            return bad("pca_k must be >= 1".into());
        }
        let finite = [
            self.oja_alpha,
            self.bcm_lambda,
            self.infonce_weight,
            self.pc_lambda,
            self.decorr_lambda,
            self.fractal_weight,
            self.l1_lambda,
            self.triplet_weight,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("weights and lambdas must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Pointwise,
    Stateful,
    Batch,
    Contrastive,
}

/// One registered objective, by family and mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Pointwise(PointwiseMode),
    Stateful(StatefulMode),
    Batch(BatchMode),
    Contrastive(ContrastiveMode),
}

/// Running statistics an objective reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StateNeeds {
    pub running_mean: bool,
    pub running_var: bool,
    pub bcm_threshold: bool,
    pub pred_baseline: bool,
    pub covariance: bool,
    pub whitening: bool,
    pub pca: bool,
}

impl StateNeeds {
    pub fn any(&self) -> bool {
        self.running_mean
            || self.running_var
            || self.bcm_threshold
            || self.pred_baseline
            || self.covariance
            || self.whitening
            || self.pca
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GoodnessDescriptor {
    pub name: &'static str,
    pub category: &'static str,
    pub family: Family,
    #[serde(skip)]
    pub objective: Objective,
    pub state: StateNeeds,
    pub summary: &'static str,
}

const NO_STATE: StateNeeds = StateNeeds {
    running_mean: false,
    running_var: false,
    bcm_threshold: false,
    pred_baseline: false,
    covariance: false,
    whitening: false,
    pca: false,
};

macro_rules! desc {
    ($name:literal, $cat:literal, $fam:ident, $obj:expr, $state:expr, $summary:literal) => {
        GoodnessDescriptor {
            name: $name,
            category: $cat,
            family: Family::$fam,
            objective: $obj,
            state: $state,
            summary: $summary,
        }
    };
}

static REGISTRY: [GoodnessDescriptor; 21] = [
    desc!(
        "sum_of_squares",
        "baseline",
        Pointwise,
        Objective::Pointwise(PointwiseMode::SumOfSquares),
        NO_STATE,
        "sum of squared activations"
    ),
    desc!(
        "l2_normalized_energy",
        "distance_energy",
        Pointwise,
        Objective::Pointwise(PointwiseMode::L2Normalized),
        NO_STATE,
        "energy of the activation vector divided by its norm"
    ),
    desc!(
        "huber_norm",
        "distance_energy",
        Pointwise,
        Objective::Pointwise(PointwiseMode::Huber),
        NO_STATE,
        "Huber penalty summed over units"
    ),
    desc!(
        "triplet_margin",
        "distance_energy",
        Contrastive,
        Objective::Contrastive(ContrastiveMode::TripletMargin),
        NO_STATE,
        "energy plus a bounded bonus for separation from the paired sample"
    ),
    desc!(
        "softmax_energy_margin",
        "distance_energy",
        Contrastive,
        Objective::Contrastive(ContrastiveMode::SoftmaxEnergyMargin),
        NO_STATE,
        "log-softmax of mean energy against the paired sample"
    ),
    desc!(
        "tempered_energy",
        "distance_energy",
        Pointwise,
        Objective::Pointwise(PointwiseMode::Tempered),
        NO_STATE,
        "sum of exp(h^2 / T)"
    ),
    desc!(
        "outlier_trimmed_energy",
        "distance_energy",
        Pointwise,
        Objective::Pointwise(PointwiseMode::OutlierTrimmed),
        NO_STATE,
        "energy with the most active fraction of units dropped"
    ),
    desc!(
        "bcm",
        "statistical",
        Stateful,
        Objective::Stateful(StatefulMode::Bcm),
        StateNeeds {
            bcm_threshold: true,
            ..NO_STATE
        },
        "energy plus a sliding-threshold selectivity term"
    ),
    desc!(
        "decorrelation",
        "statistical",
        Batch,
        Objective::Batch(BatchMode::Decorrelation),
        NO_STATE,
        "energy minus the squared Frobenius norm of the batch covariance"
    ),
    desc!(
        "whitened_energy",
        "statistical",
        Batch,
        Objective::Batch(BatchMode::WhitenedEnergy),
        StateNeeds {
            covariance: true,
            whitening: true,
            ..NO_STATE
        },
        "energy of whitened activations"
    ),
    desc!(
        "pca_energy",
        "statistical",
        Batch,
        Objective::Batch(BatchMode::PcaEnergy),
        StateNeeds {
            covariance: true,
            pca: true,
            ..NO_STATE
        },
        "energy of the projection onto leading principal directions"
    ),
    desc!(
        "gaussian_energy",
        "statistical",
        Stateful,
        Objective::Stateful(StatefulMode::GaussianEnergy),
        StateNeeds {
            running_mean: true,
            running_var: true,
            ..NO_STATE
        },
        "diagonal Gaussian log-likelihood around the running mean"
    ),
    desc!(
        "info_nce",
        "info_theoretic",
        Contrastive,
        Objective::Contrastive(ContrastiveMode::InfoNce),
        NO_STATE,
        "energy plus an InfoNCE term over in-batch partners"
    ),
    desc!(
        "nt_xent",
        "info_theoretic",
        Contrastive,
        Objective::Contrastive(ContrastiveMode::NtXent),
        NO_STATE,
        "normalized temperature-scaled cross entropy over the paired batch"
    ),
    desc!(
        "predictive_coding",
        "info_theoretic",
        Stateful,
        Objective::Stateful(StatefulMode::PredictiveCoding),
        StateNeeds {
            pred_baseline: true,
            ..NO_STATE
        },
        "energy minus squared error against a running prediction"
    ),
    desc!(
        "hebbian",
        "bio_inspired",
        Stateful,
        Objective::Stateful(StatefulMode::Hebbian),
        StateNeeds {
            running_mean: true,
            ..NO_STATE
        },
        "squared deviation from the running mean"
    ),
    desc!(
        "oja",
        "bio_inspired",
        Pointwise,
        Objective::Pointwise(PointwiseMode::Oja),
        NO_STATE,
        "energy with a quartic forgetting term"
    ),
    desc!(
        "game_theoretic",
        "bio_inspired",
        Batch,
        Objective::Batch(BatchMode::GameTheoretic),
        StateNeeds {
            running_var: true,
            ..NO_STATE
        },
        "energy weighted by magnitude- and variance-based importance"
    ),
    desc!(
        "attention_weighted",
        "other",
        Batch,
        Objective::Batch(BatchMode::AttentionWeighted),
        NO_STATE,
        "energy weighted by a per-row softmax over unit energies"
    ),
    desc!(
        "fractal_dimension",
        "other",
        Batch,
        Objective::Batch(BatchMode::FractalDimension),
        NO_STATE,
        "energy plus a box-counting dimension bonus"
    ),
    desc!(
        "sparse_l1",
        "other",
        Pointwise,
        Objective::Pointwise(PointwiseMode::SparseL1),
        NO_STATE,
        "energy minus an L1 penalty"
    ),
];

/// All registered objectives in registry order.
pub fn registry() -> &'static [GoodnessDescriptor] {
    &REGISTRY
}

pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|d| d.name).collect()
}

/// Resolves a goodness name. Accepts the canonical name, a trailing `_local`
/// suffix, and the short forms `l2_normalized`, `huber`, `tempered` and
/// `outlier_trimmed`.
pub fn registry_lookup(name: &str) -> Result<&'static GoodnessDescriptor> {
    let key = name.trim().to_ascii_lowercase();
    let key = key.strip_suffix("_local").unwrap_or(&key);
    let canonical = match key {
        "l2_normalized" => "l2_normalized_energy",
        "huber" => "huber_norm",
        "tempered" => "tempered_energy",
        "outlier_trimmed" => "outlier_trimmed_energy",
        other => other,
    };
    REGISTRY
        .iter()
        .find(|d| d.name == canonical)
        .ok_or_else(|| Error::UnknownGoodness {
            name: name.to_string(),
            valid: names(),
        })
}

impl Objective {
    pub fn descriptor(self) -> &'static GoodnessDescriptor {
        REGISTRY
            .iter()
            .find(|d| d.objective == self)
            .expect("every objective is registered")
    }

    pub fn name(self) -> &'static str {
        self.descriptor().name
    }

    pub fn family(self) -> Family {
        self.descriptor().family
    }

    /// Prepares state an objective cannot run without (whitening or PCA
    /// bases) from the first positive batch it sees.
    pub fn warm_start(self, h_pos: &Matrix, state: &mut GoodnessState, params: &GoodnessParams) -> Result<()> {
        match self {
            Objective::Batch(BatchMode::WhitenedEnergy) if state.whitening.is_none() => {
                state.observe_covariance(h_pos)?;
                state.refit_whitening(params)
            }
            Objective::Batch(BatchMode::PcaEnergy) if state.pca.is_none() => {
                state.observe_covariance(h_pos)?;
                state.refit_pca(params)
            }
            _ => Ok(()),
        }
    }

    /// Goodness of a positive/negative batch pair for training. The state is
    /// read as it stands and, when `update_state` is set, advanced afterwards
    /// with the positive batch only.
    pub fn evaluate_pair(
        self,
        h_pos: &Matrix,
        h_neg: &Matrix,
        state: &mut GoodnessState,
        params: &GoodnessParams,
        update_state: bool,
    ) -> Result<(GoodnessResult, GoodnessResult)> {
        match self {
            Objective::Contrastive(mode) => {
                let out = goodness_contrastive(mode, h_pos, h_neg, params)?;
                if update_state {
                    state.observe(h_pos, false)?;
                }
                Ok(out)
            }
            _ => {
                let neg = self.evaluate(h_neg, state, params, false)?;
                let pos = self.evaluate(h_pos, state, params, update_state)?;
                Ok((pos, neg))
            }
        }
    }

    /// Single-batch evaluation for the non-contrastive families.
    pub fn evaluate(
        self,
        h: &Matrix,
        state: &mut GoodnessState,
        params: &GoodnessParams,
        update_state: bool,
    ) -> Result<GoodnessResult> {
        match self {
            Objective::Pointwise(mode) => {
                let out = goodness_pointwise(mode, h, params)?;
                if update_state {
                    state.observe(h, false)?;
                }
                Ok(out)
            }
            Objective::Stateful(mode) => goodness_stateful(mode, h, state, params, update_state),
            Objective::Batch(mode) => goodness_batch(mode, h, state, params, update_state),
            Objective::Contrastive(_) => Err(Error::Goodness {
                name: self.name(),
                reason: "contrastive objectives need a paired batch".into(),
            }),
        }
    }

    /// Per-row goodness used for inference on frozen state.
    ///
    /// Contrastive objectives have no partner at inference time, so they score
    /// a row by its unary energy: `‖h‖²`, or the mean squared activity for
    /// the softmax margin. Both rank rows identically to the energy their
    /// training signal pushes apart.
    pub fn score(self, h: &Matrix, state: &GoodnessState, params: &GoodnessParams) -> Result<Matrix> {
        match self {
            Objective::Contrastive(mode) => contrastive::inference_score(mode, h),
            _ => {
                let mut frozen = state.clone();
                Ok(self.evaluate(h, &mut frozen, params, false)?.values)
            }
        }
    }

    /// End-of-epoch hook: refits whitening/PCA bases from the running
    /// covariance so they stay fixed within the next epoch.
    pub fn end_epoch(self, state: &mut GoodnessState, params: &GoodnessParams) -> Result<()> {
        match self {
            Objective::Batch(BatchMode::WhitenedEnergy) => state.refit_whitening(params),
            Objective::Batch(BatchMode::PcaEnergy) => state.refit_pca(params),
            _ => Ok(()),
        }
    }

    pub fn tracks_covariance(self) -> bool {
        self.descriptor().state.covariance
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        registry_lookup(s).map(|d| d.objective)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_one_unique_names() {
        let mut n = names();
        assert_eq!(n.len(), 21);
        n.sort();
        n.dedup();
        assert_eq!(n.len(), 21);
        for d in registry() {
            assert_eq!(d.objective.descriptor().name, d.name);
        }
    }

    #[test]
    fn lookup_examples() {
        let d = registry_lookup("sum_of_squares").unwrap();
        assert_eq!(d.family, Family::Pointwise);
        assert!(!d.state.any());
        let d = registry_lookup("bcm").unwrap();
        assert_eq!(d.family, Family::Stateful);
        assert!(d.state.bcm_threshold);
        let err = registry_lookup("quadratic_frobnitz").unwrap_err().to_string();
        assert!(err.contains("sum_of_squares") && err.contains("sparse_l1"), "{err}");
    }

    #[test]
    fn lookup_aliases() {
        assert_eq!(
            registry_lookup("outlier_trimmed").unwrap().name,
            "outlier_trimmed_energy"
        );
        assert_eq!(registry_lookup("bcm_local").unwrap().name, "bcm");
        assert_eq!(registry_lookup("huber").unwrap().name, "huber_norm");
        assert_eq!(
            registry_lookup("L2_NORMALIZED_ENERGY_local").unwrap().name,
            "l2_normalized_energy"
        );
    }

    #[test]
    fn params_validation() {
        assert!(GoodnessParams::default().validate().is_ok());
        let p = GoodnessParams {
            temperature: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = GoodnessParams {
            trim_fraction: 1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = GoodnessParams {
            ntxent_tau: -1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}

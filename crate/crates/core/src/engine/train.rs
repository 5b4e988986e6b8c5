use serde::{Deserialize, Serialize};

use crate::data::{embed_labels, embed_neutral_rows, make_negatives, Dataset, Split};
use crate::error::{Error, Result};
use crate::goodness::{GoodnessResult, Objective};
use crate::metering::{CostMeter, Phase};
use crate::tensor::{Matrix, Rng};

use super::config::FFConfig;
use super::layer::{forward_with_input, LayerState};
use super::loss::{ff_layer_loss, peer_penalty};
use super::predict::multipass_accuracy;
use super::probe::{probe_features, ProbeState};

/// RNG stream for weight initialization.
pub const INIT_STREAM: u64 = 1;
/// RNG stream for shuffling and negative labels.
pub const DATA_STREAM: u64 = 2;
/// RNG stream for probe shuffling.
pub const PROBE_STREAM: u64 = 3;

/// A stack of FF layers with the objective they were trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct FFNetwork {
    pub config: FFConfig,
    pub objective: Objective,
    pub layers: Vec<LayerState>,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl FFNetwork {
    pub fn new(config: FFConfig, input_dim: usize, num_classes: usize) -> Result<Self> {
        config.validate()?;
        let objective = config.objective()?;
        let mut rng = Rng::new(config.seed).split(INIT_STREAM);
        let mut layers = Vec::with_capacity(config.layer_sizes.len());
        let mut fan_in = input_dim;
        for &width in &config.layer_sizes {
            layers.push(LayerState::new(fan_in, width, &mut rng, config.params.ema_decay));
            fan_in = width;
        }
        Ok(Self {
            config,
            objective,
            layers,
            input_dim,
            num_classes,
        })
    }

    /// Activations of every layer for inputs `x`.
    pub fn forward_all(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let norm = self.config.input_norm.length_normalize_between_layers;
        let mut out: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = out.last().unwrap_or(x);
            let (_, h) = forward_with_input(layer, input, norm)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Per-batch statistics for one layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub loss: f64,
    pub peer_penalty: f64,
    /// Fraction of pairs with `G_pos > G_neg`.
    pub ff_accuracy: f64,
    pub mean_goodness_pos: f64,
    pub mean_goodness_neg: f64,
}

/// Everything one layer's update needs, computed without mutating the layer.
#[derive(Debug, Clone)]
pub struct LayerStep {
    pub d_weight: Matrix,
    pub d_bias: Matrix,
    pub stats: BatchStats,
    /// Activations before the update, passed on to the next layer.
    pub h_pos: Matrix,
    pub h_neg: Matrix,
    goodness_state: crate::goodness::GoodnessState,
    peer_mean: Matrix,
}

fn scale_rows(grad: &Matrix, coeffs: &Matrix) -> Matrix {
    let mut out = grad.clone();
    for (r, &c) in coeffs.as_slice().iter().enumerate() {
        out.row_mut(r).iter_mut().for_each(|v| *v *= c);
    }
    out
}

fn mean(values: &Matrix) -> f64 {
    values.sum() / values.rows().max(1) as f64
}

/// Forward both passes through `layer`, evaluate the objective and the loss,
/// and backpropagate through this layer only. Inputs are constants.
pub fn layer_gradients(
    layer: &LayerState,
    index: usize,
    objective: Objective,
    x_pos: &Matrix,
    x_neg: &Matrix,
    cfg: &FFConfig,
) -> Result<LayerStep> {
    let norm = cfg.input_norm.length_normalize_between_layers;
    let (in_pos, h_pos) = forward_with_input(layer, x_pos, norm)?;
    let (in_neg, h_neg) = forward_with_input(layer, x_neg, norm)?;
    let mut state = layer.goodness_state.clone();
    objective.warm_start(&h_pos, &mut state, &cfg.params)?;
    let (gp, gn): (GoodnessResult, GoodnessResult) =
        objective.evaluate_pair(&h_pos, &h_neg, &mut state, &cfg.params, true)?;
    let ff = ff_layer_loss(&gp.values, &gn.values, cfg.threshold)?;
    let peer = peer_penalty(&h_pos, layer, cfg.peer_coeff)?;
    let total = ff.loss + peer.penalty;
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss {
            objective: objective.name(),
            layer: index,
        });
    }
    // the ReLU passes gradients through unchanged
    let mut dz_pos = scale_rows(&gp.grad, &ff.d_pos);
    dz_pos.axpy(1.0, &peer.grad)?;
    let dz_neg = scale_rows(&gn.grad, &ff.d_neg);
    let mut d_weight = dz_pos.transposed_matmul(&in_pos)?;
    d_weight.axpy(1.0, &dz_neg.transposed_matmul(&in_neg)?)?;
    let d_bias = dz_pos.column_sum().add(&dz_neg.column_sum())?;
    if !d_weight.is_finite() || !d_bias.is_finite() {
        return Err(Error::NonFiniteLoss {
            objective: objective.name(),
            layer: index,
        });
    }
    let wins = gp
        .values
        .as_slice()
        .iter()
        .zip(gn.values.as_slice())
        .filter(|(p, n)| p > n)
        .count();
    let stats = BatchStats {
        loss: total,
        peer_penalty: peer.penalty,
        ff_accuracy: wins as f64 / gp.values.rows() as f64,
        mean_goodness_pos: mean(&gp.values),
        mean_goodness_neg: mean(&gn.values),
    };
    Ok(LayerStep {
        d_weight,
        d_bias,
        stats,
        h_pos,
        h_neg,
        goodness_state: state,
        peer_mean: peer.updated_mean,
    })
}

/// Applies a computed step: Adam with decoupled weight decay on the weights,
/// plain Adam on the bias, and commits the advanced running statistics.
pub fn apply_step(layer: &mut LayerState, step: LayerStep, cfg: &FFConfig) -> Result<(BatchStats, Matrix, Matrix)> {
    layer.step += 1;
    let t = layer.step;
    layer.weight_moments.step(
        &mut layer.weight,
        &step.d_weight,
        t,
        cfg.lr,
        cfg.weight_decay,
        &cfg.adam,
    )?;
    layer
        .bias_moments
        .step(&mut layer.bias, &step.d_bias, t, cfg.lr, 0.0, &cfg.adam)?;
    layer.goodness_state = step.goodness_state;
    layer.peer_mean = step.peer_mean;
    Ok((step.stats, step.h_pos, step.h_neg))
}

/// One local update of `layer` on a paired batch. Returns the batch
/// statistics and the pre-update activations for the next layer.
pub fn train_layer_batch(
    layer: &mut LayerState,
    index: usize,
    objective: Objective,
    x_pos: &Matrix,
    x_neg: &Matrix,
    cfg: &FFConfig,
) -> Result<(BatchStats, Matrix, Matrix)> {
    let step = layer_gradients(layer, index, objective, x_pos, x_neg, cfg)?;
    apply_step(layer, step, cfg)
}

/// Errors that signal numerical failure of an objective rather than misuse.
pub fn is_numeric_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFinite { .. } | Error::TemperedOverflow { .. } | Error::Diverged { .. } | Error::NonFiniteLoss { .. }
    )
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerEpochMetrics {
    pub loss: f64,
    pub peer_penalty: f64,
    pub ff_accuracy: f64,
    pub mean_goodness_pos: f64,
    pub mean_goodness_neg: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Batches completed before the epoch ended or was aborted.
    pub batches: usize,
    pub layers: Vec<LayerEpochMetrics>,
    /// Multi-pass accuracy on the evaluation subset; NaN if scoring failed.
    pub multipass_accuracy: f64,
    /// Mean cross-entropy of the online probe over the epoch's batches.
    pub probe_train_loss: f64,
    pub probe_eval_loss: f64,
    pub probe_eval_accuracy: f64,
    pub aborted: bool,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub goodness: String,
    pub epochs: Vec<EpochMetrics>,
}

impl RunMetrics {
    pub fn diagnostics(&self) -> impl Iterator<Item = &str> {
        self.epochs
            .iter()
            .flat_map(|e| e.diagnostics.iter().map(String::as_str))
    }
}

/// Owns a network and the data-order RNG across epochs.
pub struct Trainer<'a> {
    pub network: FFNetwork,
    pub rng: Rng,
    pub epochs_done: usize,
    data: &'a Dataset,
    positives: Matrix,
    neutral: Matrix,
    eval: Split,
    probe: Option<ProbeState>,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a Dataset, config: FFConfig) -> Result<Self> {
        if data.train.is_empty() {
            return Err(Error::Empty { op: "Trainer::new" });
        }
        let network = FFNetwork::new(config, data.dim(), data.num_classes)?;
        let rng = Rng::new(network.config.seed).split(DATA_STREAM);
        Self::resume(data, network, rng, 0)
    }

    /// Continues training a restored network from the given RNG position.
    pub fn resume(data: &'a Dataset, network: FFNetwork, rng: Rng, epochs_done: usize) -> Result<Self> {
        if network.input_dim != data.dim() {
            return Err(Error::invalid(
                "Trainer",
                format!("network expects {} inputs, data has {}", network.input_dim, data.dim()),
            ));
        }
        let positives = embed_labels(&data.train.images, &data.train.labels, data.num_classes)?;
        let neutral = embed_neutral_rows(&data.train.images, data.num_classes)?;
        let eval = data.test.head(network.config.eval_subset);
        let probe = if network.config.online_probe {
            let width = network.layers[network.config.readout_from_layer..]
                .iter()
                .map(LayerState::outputs)
                .sum();
            Some(ProbeState::new(data.num_classes, width))
        } else {
            None
        };
        Ok(Self {
            network,
            rng,
            epochs_done,
            data,
            positives,
            neutral,
            eval,
            probe,
        })
    }

    /// Snapshot of the network and data-order RNG for [`Trainer::resume`].
    pub fn checkpoint(&self) -> super::checkpoint::Checkpoint {
        super::checkpoint::Checkpoint {
            network: self.network.clone(),
            rng: self.rng.clone(),
            epochs_done: self.epochs_done,
        }
    }

    fn train_batch(&mut self, x_pos: Matrix, x_neg: Matrix, sums: &mut [LayerEpochMetrics]) -> Result<()> {
        let objective = self.network.objective;
        let cfg = self.network.config.clone();
        let (mut p, mut n) = (x_pos, x_neg);
        for (i, layer) in self.network.layers.iter_mut().enumerate() {
            let (stats, hp, hn) = train_layer_batch(layer, i, objective, &p, &n, &cfg)?;
            let s = &mut sums[i];
            s.loss += stats.loss;
            s.peer_penalty += stats.peer_penalty;
            s.ff_accuracy += stats.ff_accuracy;
            s.mean_goodness_pos += stats.mean_goodness_pos;
            s.mean_goodness_neg += stats.mean_goodness_neg;
            p = hp;
            n = hn;
        }
        Ok(())
    }

    fn probe_batch(&mut self, rows: &[usize]) -> Result<f64> {
        let Some(probe) = self.probe.as_mut() else {
            return Ok(f64::NAN);
        };
        let x = self.neutral.select_rows(rows);
        let feats = probe_features(&self.network, &x, true)?;
        let labels: Vec<usize> = rows.iter().map(|&i| self.data.train.labels[i]).collect();
        let cfg = &self.network.config;
        probe.train_step(&feats, &labels, cfg.probe.lr, &cfg.adam)
    }

    /// One pass over the training split followed by evaluation.
    pub fn run_epoch(&mut self, meter: &mut CostMeter) -> Result<EpochMetrics> {
        let cfg = self.network.config.clone();
        let n = self.data.train.len();
        let mut order: Vec<usize> = (0..n).collect();
        self.rng.shuffle(&mut order);
        let (negatives, _) = make_negatives(
            &self.data.train.images,
            &self.data.train.labels,
            self.network.num_classes,
            &mut self.rng,
        )?;

        let depth = self.network.layers.len();
        let mut sums = vec![LayerEpochMetrics::default(); depth];
        let mut metrics = EpochMetrics {
            epoch: self.epochs_done + 1,
            ..Default::default()
        };
        let mut probe_loss = 0.0;
        // a trailing single sample cannot feed batch statistics
        for rows in order.chunks(cfg.batch_size).filter(|c| c.len() >= 2) {
            let x_pos = self.positives.select_rows(rows);
            let x_neg = negatives.select_rows(rows);
            match meter.measure(Phase::Train, || self.train_batch(x_pos, x_neg, &mut sums)) {
                Ok(()) => {}
                Err(e) if is_numeric_failure(&e) => {
                    metrics.aborted = true;
                    metrics.diagnostics.push(format!(
                        "epoch {} aborted at batch {}: {e}",
                        metrics.epoch,
                        metrics.batches + 1
                    ));
                    break;
                }
                Err(e) => return Err(e),
            }
            metrics.batches += 1;
            probe_loss += meter.measure(Phase::Probe, || self.probe_batch(rows))?;
        }

        let done = metrics.batches.max(1) as f64;
        metrics.layers = sums
            .into_iter()
            .map(|s| LayerEpochMetrics {
                loss: s.loss / done,
                peer_penalty: s.peer_penalty / done,
                ff_accuracy: s.ff_accuracy / done,
                mean_goodness_pos: s.mean_goodness_pos / done,
                mean_goodness_neg: s.mean_goodness_neg / done,
            })
            .collect();
        if metrics.batches == 0 {
            metrics.layers.iter_mut().for_each(|l| *l = nan_layer());
        }
        metrics.probe_train_loss = if self.probe.is_some() {
            probe_loss / done
        } else {
            f64::NAN
        };

        for layer in &mut self.network.layers {
            if let Err(e) = self.network.objective.end_epoch(&mut layer.goodness_state, &cfg.params) {
                if !is_numeric_failure(&e) && !matches!(e, Error::Goodness { .. }) {
                    return Err(e);
                }
                metrics
                    .diagnostics
                    .push(format!("epoch {}: refit skipped: {e}", metrics.epoch));
            }
        }

        metrics.multipass_accuracy = match meter.measure(Phase::Eval, || multipass_accuracy(&self.network, &self.eval))
        {
            Ok(acc) => acc,
            Err(e) if is_numeric_failure(&e) => {
                metrics
                    .diagnostics
                    .push(format!("epoch {}: multi-pass scoring failed: {e}", metrics.epoch));
                f64::NAN
            }
            Err(e) => return Err(e),
        };

        (metrics.probe_eval_loss, metrics.probe_eval_accuracy) = match self.probe.as_ref() {
            Some(probe) if !self.eval.is_empty() => {
                let x = embed_neutral_rows(&self.eval.images, self.network.num_classes)?;
                let eval = meter.measure(Phase::Probe, || -> Result<(f64, f64)> {
                    let feats = probe_features(&self.network, &x, true)?;
                    let (acc, loss) = probe.evaluate(&feats, &self.eval.labels)?;
                    Ok((loss, acc))
                });
                eval?
            }
            _ => (f64::NAN, f64::NAN),
        };

        self.epochs_done += 1;
        Ok(metrics)
    }
}

fn nan_layer() -> LayerEpochMetrics {
    LayerEpochMetrics {
        loss: f64::NAN,
        peer_penalty: f64::NAN,
        ff_accuracy: f64::NAN,
        mean_goodness_pos: f64::NAN,
        mean_goodness_neg: f64::NAN,
    }
}

/// Trains every layer simultaneously, batch by batch, for `config.epochs`
/// epochs. Each layer learns from the previous layer's pre-update
/// activations; no gradient crosses a layer boundary.
pub fn train_network(data: &Dataset, config: FFConfig, meter: &mut CostMeter) -> Result<(FFNetwork, RunMetrics)> {
    let epochs = config.epochs;
    let mut trainer = Trainer::new(data, config)?;
    let mut metrics = RunMetrics {
        goodness: trainer.network.objective.name().to_string(),
        epochs: Vec::with_capacity(epochs),
    };
    for _ in 0..epochs {
        metrics.epochs.push(trainer.run_epoch(meter)?);
    }
    Ok((trainer.network, metrics))
}

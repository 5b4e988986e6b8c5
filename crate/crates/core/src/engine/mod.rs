//! Forward-Forward layers, the local loss, the trainer, multi-pass inference
//! and the linear probe.
//!
//! Every layer is trained from its own loss only: the input it receives is a
//! constant, so no gradient ever reaches an earlier layer. In the backward
//! pass the ReLU is treated as the identity.

mod adam;
pub mod checkpoint;
mod config;
mod layer;
mod loss;
mod predict;
mod probe;
mod train;

pub use adam::Moments;
pub use checkpoint::Checkpoint;
pub use config::{AdamConfig, FFConfig, InputNorm, ProbeConfig, DESK_EVAL_SUBSET, DESK_TRAIN_SUBSET};
pub use layer::{layer_forward, normalize_rows, LayerState, NORM_EPS, PEER_DECAY};
pub use loss::{ff_layer_loss, peer_penalty, peer_penalty_value, LayerLoss, PeerPenalty};
pub use predict::{
    argmax, candidate_scores, multipass_accuracy, multipass_predict, multipass_predict_row, readout_layers,
};
pub use probe::{linear_probe, probe_features, ProbeReport, ProbeState};
pub use train::{
    apply_step, is_numeric_failure, layer_gradients, train_layer_batch, train_network, BatchStats, EpochMetrics,
    FFNetwork, LayerEpochMetrics, LayerStep, RunMetrics, Trainer, DATA_STREAM, INIT_STREAM, PROBE_STREAM,
};

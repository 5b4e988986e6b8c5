use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goodness::GoodnessState;
use crate::tensor::{l2_norm, Matrix, Rng};

use super::adam::Moments;

/// Added to row norms before dividing.
pub const NORM_EPS: f64 = 1e-8;

/// Decay of the per-unit mean activity used by the peer penalty.
pub const PEER_DECAY: f64 = 0.9;

/// Weight scale factor. For a unit-length input the expected sum of squared
/// ReLU outputs at initialization is then INIT_GAIN² / 2 = 2, the default
/// threshold.
pub const INIT_GAIN: f64 = 2.0;

/// One fully connected layer with its optimizer and objective state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    /// out × in
    pub weight: Matrix,
    /// 1 × out
    pub bias: Matrix,
    pub weight_moments: Moments,
    pub bias_moments: Moments,
    /// Adam steps taken so far.
    pub step: u64,
    /// 1 × out running mean of positive-pass activity.
    pub peer_mean: Matrix,
    pub goodness_state: GoodnessState,
}

impl LayerState {
    /// Weights drawn from N(0, (INIT_GAIN²)/out), biases zero.
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng, ema_decay: f64) -> Self {
        let std = INIT_GAIN / (outputs as f64).sqrt();
        Self {
            weight: rng.normal_matrix(outputs, inputs, std),
            bias: Matrix::zeros(1, outputs),
            weight_moments: Moments::zeros(outputs, inputs),
            bias_moments: Moments::zeros(1, outputs),
            step: 0,
            peer_mean: Matrix::zeros(1, outputs),
            goodness_state: GoodnessState::new(outputs, ema_decay),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }
}

/// Each row divided by its L2 norm plus [`NORM_EPS`].
pub fn normalize_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let n = l2_norm(row) + NORM_EPS;
        row.iter_mut().for_each(|v| *v /= n);
    }
    out
}

/// Forward pass returning the (possibly normalized) input alongside the
/// activations, as the backward pass needs both.
pub(crate) fn forward_with_input(layer: &LayerState, x: &Matrix, normalize_input: bool) -> Result<(Matrix, Matrix)> {
    if x.cols() != layer.inputs() {
        return Err(Error::Shape {
            op: "layer_forward",
            left: x.shape(),
            right: layer.weight.shape(),
        });
    }
    let input = if normalize_input { normalize_rows(x) } else { x.clone() };
    let mut h = input.matmul_transposed(&layer.weight)?;
    h.add_row_broadcast(&layer.bias)?;
    h.map_inplace(|v| v.max(0.0));
    Ok((input, h))
}

/// `relu(X Wᵀ + b)`, with rows of `X` length-normalized first when
/// `normalize_input` is set. Training treats the ReLU as the identity in the
/// backward pass.
pub fn layer_forward(layer: &LayerState, x: &Matrix, normalize_input: bool) -> Result<Matrix> {
    Ok(forward_with_input(layer, x, normalize_input)?.1)
}

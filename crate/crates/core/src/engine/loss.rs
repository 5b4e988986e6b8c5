use crate::error::{Error, Result};
use crate::tensor::{sigmoid, softplus, Matrix};

use super::layer::{LayerState, PEER_DECAY};

/// Batch-mean layer loss with its gradients with respect to each goodness.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerLoss {
    pub loss: f64,
    pub d_pos: Matrix,
    pub d_neg: Matrix,
}

/// `mean_b softplus(θ − G_pos) + softplus(G_neg − θ)`.
pub fn ff_layer_loss(g_pos: &Matrix, g_neg: &Matrix, theta: f64) -> Result<LayerLoss> {
    if g_pos.shape() != g_neg.shape() || g_pos.cols() != 1 {
        return Err(Error::Shape {
            op: "ff_layer_loss",
            left: g_pos.shape(),
            right: g_neg.shape(),
        });
    }
    let b = g_pos.rows();
    if b == 0 {
        return Err(Error::Empty { op: "ff_layer_loss" });
    }
    let inv = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut d_pos = Vec::with_capacity(b);
    let mut d_neg = Vec::with_capacity(b);
    for (&p, &n) in g_pos.as_slice().iter().zip(g_neg.as_slice()) {
        loss += softplus(theta - p) + softplus(n - theta);
        d_pos.push(-sigmoid(theta - p) * inv);
        d_neg.push(sigmoid(n - theta) * inv);
    }
    Ok(LayerLoss {
        loss: loss * inv,
        d_pos: Matrix::column_vector(&d_pos),
        d_neg: Matrix::column_vector(&d_neg),
    })
}

/// `coeff · Σ_i (m_i − m̄)²` for per-unit mean activities `m`.
pub fn peer_penalty_value(peer_mean: &Matrix, coeff: f64) -> f64 {
    let m = peer_mean.as_slice();
    if m.is_empty() {
        return 0.0;
    }
    let avg = m.iter().sum::<f64>() / m.len() as f64;
    coeff * m.iter().map(|v| (v - avg) * (v - avg)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerPenalty {
    pub penalty: f64,
    /// Gradient with respect to the positive activations.
    pub grad: Matrix,
    /// The running mean after folding in this batch.
    pub updated_mean: Matrix,
}

/// Peer penalty on the running mean activity after folding in the positive
/// batch `h_pos`. Only this batch's share of the running mean carries
/// gradient.
pub fn peer_penalty(h_pos: &Matrix, layer: &LayerState, coeff: f64) -> Result<PeerPenalty> {
    if h_pos.cols() != layer.outputs() {
        return Err(Error::Shape {
            op: "peer_penalty",
            left: h_pos.shape(),
            right: layer.peer_mean.shape(),
        });
    }
    let batch_mean = h_pos.column_mean()?;
    let mut updated = layer.peer_mean.scale(PEER_DECAY);
    updated.axpy(1.0 - PEER_DECAY, &batch_mean)?;
    let penalty = peer_penalty_value(&updated, coeff);
    let m = updated.as_slice();
    let avg = m.iter().sum::<f64>() / m.len().max(1) as f64;
    let scale = coeff * 2.0 * (1.0 - PEER_DECAY) / h_pos.rows() as f64;
    let unit: Vec<f64> = m.iter().map(|v| scale * (v - avg)).collect();
    let mut grad = Matrix::zeros(h_pos.rows(), h_pos.cols());
    for r in 0..grad.rows() {
        grad.row_mut(r).copy_from_slice(&unit);
    }
    Ok(PeerPenalty {
        penalty,
        grad,
        updated_mean: updated,
    })
}

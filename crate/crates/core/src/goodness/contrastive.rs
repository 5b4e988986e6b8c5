use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, log_sum_exp, sigmoid, softplus, Matrix};

use super::{GoodnessParams, GoodnessResult};

/// Objectives that score each row against the batch of the other polarity.
/// Row `b` of the positive and negative batches comes from the same image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveMode {
    /// `‖h‖² + w tanh(sep)`, `sep = (‖h‖² − ‖h'‖²) / N` against the paired row
    TripletMargin,
    /// `log σ(E − E')` with `E` the mean squared activity
    SoftmaxEnergyMargin,
    /// `‖h‖² + w (1 − log(e + Σ_j exp(cos(h, h'_j))))`
    InfoNce,
    /// normalized temperature-scaled cross entropy over both batches
    NtXent,
}

impl ContrastiveMode {
    fn name(self) -> &'static str {
        match self {
            ContrastiveMode::TripletMargin => "triplet_margin",
            ContrastiveMode::SoftmaxEnergyMargin => "softmax_energy_margin",
            ContrastiveMode::InfoNce => "info_nce",
            ContrastiveMode::NtXent => "nt_xent",
        }
    }
}

/// Keeps cosine similarity differentiable at the origin.
const COS_EPS: f64 = 1e-8;

fn smooth_norm(v: &[f64]) -> f64 {
    (dot(v, v) + COS_EPS).sqrt()
}

/// Pulls a gradient with respect to `a / ‖a‖` back to `a`.
fn through_normalization(a: &[f64], g_unit: &[f64], out: &mut [f64]) {
    let na = smooth_norm(a);
    let radial = dot(a, g_unit) / (na * na);
    for ((o, &gi), &ai) in out.iter_mut().zip(g_unit).zip(a) {
        *o = (gi - radial * ai) / na;
    }
}

fn triplet(h: &Matrix, partner: &Matrix, w: f64) -> (Vec<f64>, Matrix) {
    let n = h.cols() as f64;
    let mut values = Vec::with_capacity(h.rows());
    let mut grad = Matrix::zeros(h.rows(), h.cols());
    for (r, (row, other)) in h.row_iter().zip(partner.row_iter()).enumerate() {
        let e = dot(row, row);
        let t = ((e - dot(other, other)) / n).tanh();
        values.push(e + w * t);
        let coeff = 2.0 * (1.0 + w * (1.0 - t * t) / n);
        for (g, x) in grad.row_mut(r).iter_mut().zip(row) {
            *g = coeff * x;
        }
    }
    (values, grad)
}

fn softmax_margin(h: &Matrix, partner: &Matrix) -> (Vec<f64>, Matrix) {
    let n = h.cols() as f64;
    let mut values = Vec::with_capacity(h.rows());
    let mut grad = Matrix::zeros(h.rows(), h.cols());
    for (r, (row, other)) in h.row_iter().zip(partner.row_iter()).enumerate() {
        let e = dot(row, row) / n;
        let e_other = dot(other, other) / n;
        values.push(-softplus(e_other - e));
        let coeff = sigmoid(e_other - e) * 2.0 / n;
        for (g, x) in grad.row_mut(r).iter_mut().zip(row) {
            *g = coeff * x;
        }
    }
    (values, grad)
}

fn info_nce(h: &Matrix, partners: &Matrix, w: f64) -> (Vec<f64>, Matrix) {
    // the positive logit is the row's self-similarity, 1
    let pos = 1.0;
    let cols = h.cols();
    let partner_norms: Vec<f64> = partners.row_iter().map(smooth_norm).collect();
    let mut values = Vec::with_capacity(h.rows());
    let mut grad = Matrix::zeros(h.rows(), cols);
    let mut logits = vec![0.0; partners.rows()];
    let mut g_unit = vec![0.0; cols];
    for (r, row) in h.row_iter().enumerate() {
        let na = smooth_norm(row);
        for ((l, p), &np) in logits.iter_mut().zip(partners.row_iter()).zip(&partner_norms) {
            *l = dot(row, p) / (na * np);
        }
        let lse = log_sum_exp(std::iter::once(pos).chain(logits.iter().copied()));
        values.push(dot(row, row) + w * (pos - lse));
        // d cos(a, p)/da = p / (‖a‖‖p‖) − cos · a / ‖a‖²
        g_unit.fill(0.0);
        let mut radial = 0.0;
        for ((&l, p), &np) in logits.iter().zip(partners.row_iter()).zip(&partner_norms) {
            let weight = (l - lse).exp();
            for (g, &pv) in g_unit.iter_mut().zip(p) {
                *g += weight * pv / (na * np);
            }
            radial += weight * l;
        }
        for ((g, &gu), &x) in grad.row_mut(r).iter_mut().zip(&g_unit).zip(row) {
            *g = 2.0 * x - w * (gu - radial * x / (na * na));
        }
    }
    (values, grad)
}

/// Rows of `z` are the normalized rows of `[H_pos; H_neg]`; row `i` is
/// positively paired with row `(i + B) mod 2B` and contrasted against all
/// other rows. Returns values and gradients for all `2B` rows.
fn nt_xent(h_pos: &Matrix, h_neg: &Matrix, tau: f64) -> Result<(Vec<f64>, Matrix)> {
    let b = h_pos.rows();
    let all = Matrix::vstack(&[h_pos, h_neg])?;
    let mut z = all.clone();
    for r in 0..z.rows() {
        let n = smooth_norm(all.row(r));
        z.row_mut(r).iter_mut().for_each(|x| *x /= n);
    }
    let sims = z.matmul_transposed(&z)?.scale(1.0 / tau);
    let total = 2 * b;
    let mut values = Vec::with_capacity(total);
    let mut grad = Matrix::zeros(total, all.cols());
    let mut g_unit = vec![0.0; all.cols()];
    for i in 0..total {
        let partner = (i + b) % total;
        let s = sims.row(i);
        let others = (0..total).filter(|&k| k != i).map(|k| s[k]);
        let lse = log_sum_exp(others);
        values.push(lse - s[partner]);
        // ∂/∂z_i = (Σ_k p_k z_k − z_partner) / τ
        g_unit
            .iter_mut()
            .zip(z.row(partner))
            .for_each(|(g, &zp)| *g = -zp / tau);
        for k in (0..total).filter(|&k| k != i) {
            let p = (s[k] - lse).exp() / tau;
            for (g, &zk) in g_unit.iter_mut().zip(z.row(k)) {
                *g += p * zk;
            }
        }
        through_normalization(all.row(i), &g_unit, grad.row_mut(i));
    }
    Ok((values, grad))
}

/// Goodness of each positive row against the negatives and vice versa.
/// Gradients are per-row partials with the partner batch held fixed.
pub fn goodness_contrastive(
    mode: ContrastiveMode,
    h_pos: &Matrix,
    h_neg: &Matrix,
    params: &GoodnessParams,
) -> Result<(GoodnessResult, GoodnessResult)> {
    const OP: &str = "goodness_contrastive";
    if h_pos.shape() != h_neg.shape() {
        return Err(Error::Shape {
            op: OP,
            left: h_pos.shape(),
            right: h_neg.shape(),
        });
    }
    if !h_pos.is_finite() || !h_neg.is_finite() {
        return Err(Error::NonFinite { op: OP });
    }
    let b = h_pos.rows();
    if b < 2 && matches!(mode, ContrastiveMode::InfoNce | ContrastiveMode::NtXent) {
        return Err(Error::Goodness {
            name: mode.name(),
            reason: format!("needs a batch of at least 2 rows, got {b}"),
        });
    }
    let ((vp, gp), (vn, gn)) = match mode {
        ContrastiveMode::TripletMargin => {
            let w = params.triplet_weight;
            (triplet(h_pos, h_neg, w), triplet(h_neg, h_pos, w))
        }
        ContrastiveMode::SoftmaxEnergyMargin => (softmax_margin(h_pos, h_neg), softmax_margin(h_neg, h_pos)),
        ContrastiveMode::InfoNce => {
            let w = params.infonce_weight;
            (info_nce(h_pos, h_neg, w), info_nce(h_neg, h_pos, w))
        }
        ContrastiveMode::NtXent => {
            let (mut values, grad) = nt_xent(h_pos, h_neg, params.ntxent_tau)?;
            let vn = values.split_off(b);
            ((values, grad.slice_rows(0, b)), (vn, grad.slice_rows(b, 2 * b)))
        }
    };
    Ok((
        GoodnessResult::from_rows(vp, gp, OP)?,
        GoodnessResult::from_rows(vn, gn, OP)?,
    ))
}

/// Unary per-row score used at inference time, when no partner exists.
pub(crate) fn inference_score(mode: ContrastiveMode, h: &Matrix) -> Result<Matrix> {
    if !h.is_finite() {
        return Err(Error::NonFinite { op: "inference_score" });
    }
    let n = h.cols().max(1) as f64;
    let values: Vec<f64> = h
        .row_iter()
        .map(|r| match mode {
            ContrastiveMode::SoftmaxEnergyMargin => dot(r, r) / n,
            _ => dot(r, r),
        })
        .collect();
    Ok(Matrix::column_vector(&values))
}

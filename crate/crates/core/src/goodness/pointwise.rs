use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{l2_norm, Matrix};

use super::{GoodnessParams, GoodnessResult};

/// Objectives whose goodness for a row depends on that row alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointwiseMode {
    /// `Σ h²`
    SumOfSquares,
    /// `Σ (h / (‖h‖ + ε))²`
    L2Normalized,
    /// `Σ ρ_δ(h)`, quadratic inside `|h| ≤ δ`, linear outside
    Huber,
    /// `Σ exp(h² / T)`
    Tempered,
    /// `Σ h²` over units outside the top `k` fraction by magnitude
    OutlierTrimmed,
    /// `Σ h² − α Σ h⁴`
    Oja,
    /// `‖h‖² − λ ‖h‖₁`
    SparseL1,
}

const TEMPERED_LIMIT: f64 = 700.0;

/// Number of units the trimmed energy drops from a row of width `n`.
pub(crate) fn trimmed_count(n: usize, fraction: f64) -> usize {
    // tolerance absorbs representation error, e.g. (1/3)·3
    (((n as f64) * fraction) + 1e-9).floor() as usize
}

pub fn goodness_pointwise(mode: PointwiseMode, h: &Matrix, params: &GoodnessParams) -> Result<GoodnessResult> {
    const OP: &str = "goodness_pointwise";
    if !h.is_finite() {
        return Err(Error::NonFinite { op: OP });
    }
    let n = h.cols();
    let mut values = Vec::with_capacity(h.rows());
    let mut grad = Matrix::zeros(h.rows(), n);
    let mut order: Vec<usize> = Vec::new();
    for (r, row) in h.row_iter().enumerate() {
        let g = grad.row_mut(r);
        let value = match mode {
            PointwiseMode::SumOfSquares => {
                for (gi, x) in g.iter_mut().zip(row) {
                    *gi = 2.0 * x;
                }
                row.iter().map(|x| x * x).sum()
            }
            PointwiseMode::L2Normalized => {
                let eps = params.norm_eps;
                let norm = l2_norm(row);
                let denom = norm + eps;
                // d/dh [r² / (r + ε)²] = 2ε h / (r + ε)³
                let coeff = 2.0 * eps / (denom * denom * denom);
                for (gi, x) in g.iter_mut().zip(row) {
                    *gi = coeff * x;
                }
                row.iter().map(|x| (x / denom) * (x / denom)).sum()
            }
            PointwiseMode::Huber => {
                let d = params.delta;
                let mut s = 0.0;
                for (gi, &x) in g.iter_mut().zip(row) {
                    if x.abs() <= d {
                        s += 0.5 * x * x;
                        *gi = x;
                    } else {
                        s += d * (x.abs() - 0.5 * d);
                        *gi = d * x.signum();
                    }
                }
                s
            }
            PointwiseMode::Tempered => {
                let t = params.temperature;
                let mut s = 0.0;
                for (gi, &x) in g.iter_mut().zip(row) {
                    let ratio = x * x / t;
                    if ratio > TEMPERED_LIMIT {
                        return Err(Error::TemperedOverflow { temperature: t, ratio });
                    }
                    let e = ratio.exp();
                    s += e;
                    *gi = 2.0 * x / t * e;
                }
                s
            }
            PointwiseMode::OutlierTrimmed => {
                let drop = trimmed_count(n, params.trim_fraction);
                order.clear();
                order.extend(0..n);
                // most active first; ties resolved by index for determinism
                order.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b)));
                let mut s = 0.0;
                for &i in &order[drop..] {
                    s += row[i] * row[i];
                    g[i] = 2.0 * row[i];
                }
                s
            }
            PointwiseMode::Oja => {
                let a = params.oja_alpha;
                let mut s = 0.0;
                for (gi, &x) in g.iter_mut().zip(row) {
                    let x2 = x * x;
                    s += x2 - a * x2 * x2;
                    *gi = 2.0 * x - 4.0 * a * x2 * x;
                }
                s
            }
            PointwiseMode::SparseL1 => {
                let l = params.l1_lambda;
                let mut s = 0.0;
                for (gi, &x) in g.iter_mut().zip(row) {
                    s += x * x - l * x.abs();
                    let sign = if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    *gi = 2.0 * x - l * sign;
                }
                s
            }
        };
        values.push(value);
    }
    GoodnessResult::from_rows(values, grad, OP)
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{batch_covariance, Matrix};

use super::{GoodnessParams, GoodnessResult, GoodnessState};

/// Objectives that read other rows of the batch or fitted bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// `‖h‖² − λ ‖Cov(H)‖_F²`
    Decorrelation,
    /// `‖W h‖²` with `W ≈ (Σ + εI)^(-1/2)`
    WhitenedEnergy,
    /// `‖P h‖²` with `P` the leading principal directions
    PcaEnergy,
    /// `Σ h² (1 + Imp)`, importance from magnitude and running spread
    GameTheoretic,
    /// `Σ α h²` with `α = softmax(h²)` per row
    AttentionWeighted,
    /// `‖h‖² + w D(h)`, `D` a box-counting dimension
    FractalDimension,
}

impl BatchMode {
    fn name(self) -> &'static str {
        match self {
            BatchMode::Decorrelation => "decorrelation",
            BatchMode::WhitenedEnergy => "whitened_energy",
            BatchMode::PcaEnergy => "pca_energy",
            BatchMode::GameTheoretic => "game_theoretic",
            BatchMode::AttentionWeighted => "attention_weighted",
            BatchMode::FractalDimension => "fractal_dimension",
        }
    }
}

const BOX_SCALES: u32 = 8;

/// Box-counting dimension of the magnitudes of `row`, rescaled to [0, 1] by
/// the largest one. At scale `2^-k` (k = 1..=8) the occupied boxes are
/// counted; the estimate is the least-squares slope of `ln N` against
/// `k ln 2`. An all-zero row has dimension 0.
pub fn box_counting_dimension(row: &[f64]) -> f64 {
    let max = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(max > 0.0) || !max.is_finite() {
        return 0.0;
    }
    let mut xs: Vec<f64> = Vec::with_capacity(BOX_SCALES as usize);
    let mut ys: Vec<f64> = Vec::with_capacity(BOX_SCALES as usize);
    let mut boxes: Vec<u64> = Vec::with_capacity(row.len());
    for k in 1..=BOX_SCALES {
        let cells = 1u64 << k;
        boxes.clear();
        boxes.extend(row.iter().map(|x| {
            let u = x.abs() / max * cells as f64;
            (u.floor() as u64).min(cells - 1)
        }));
        boxes.sort_unstable();
        boxes.dedup();
        xs.push(k as f64 * std::f64::consts::LN_2);
        ys.push((boxes.len() as f64).ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

fn missing(name: &'static str, what: &str) -> Error {
    Error::Goodness {
        name,
        reason: format!("{what} has not been fitted"),
    }
}

/// Energy of `H Bᵀ` per row with gradient `2 (H Bᵀ) B`, for a fixed basis `B`.
fn projected_energy(h: &Matrix, basis: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let proj = h.matmul_transposed(basis)?;
    let values = proj.row_iter().map(|r| r.iter().map(|x| x * x).sum()).collect();
    let grad = proj.matmul(basis)?.scale(2.0);
    Ok((values, grad))
}

/// Evaluates on the current state, then advances it with `h` when
/// `update_state` is set.
pub fn goodness_batch(
    mode: BatchMode,
    h: &Matrix,
    state: &mut GoodnessState,
    params: &GoodnessParams,
    update_state: bool,
) -> Result<GoodnessResult> {
    const OP: &str = "goodness_batch";
    if !h.is_finite() {
        return Err(Error::NonFinite { op: OP });
    }
    state.check_width(mode.name(), h)?;
    let (b, n) = h.shape();
    let (values, grad) = match mode {
        BatchMode::Decorrelation => {
            if b < 2 {
                return Err(Error::Goodness {
                    name: mode.name(),
                    reason: format!("covariance needs at least 2 rows, got {b}"),
                });
            }
            let cov = batch_covariance(h)?;
            let penalty = params.decorr_lambda * cov.as_slice().iter().map(|c| c * c).sum::<f64>();
            let mean = h.column_mean()?;
            let mut centered = h.clone();
            centered.add_row_broadcast(&mean.scale(-1.0))?;
            // d‖C‖²/dh_b = 4/(B−1) · C (h_b − m); C is symmetric
            let cov_term = centered.matmul(&cov)?;
            let coeff = params.decorr_lambda * 4.0 / (b as f64 - 1.0);
            let mut grad = h.scale(2.0);
            grad.axpy(-coeff, &cov_term)?;
            let values = h
                .row_iter()
                .map(|r| r.iter().map(|x| x * x).sum::<f64>() - penalty)
                .collect();
            (values, grad)
        }
        BatchMode::WhitenedEnergy => {
            let w = state
                .whitening
                .as_ref()
                .ok_or_else(|| missing(mode.name(), "whitening matrix"))?;
            projected_energy(h, w)?
        }
        BatchMode::PcaEnergy => {
            let p = state
                .pca
                .as_ref()
                .ok_or_else(|| missing(mode.name(), "principal basis"))?;
            projected_energy(h, p)?
        }
        BatchMode::GameTheoretic => {
            let eps = params.norm_eps;
            let sigma: Vec<f64> = state.running_var.as_slice().iter().map(|v| v.max(0.0).sqrt()).collect();
            let sigma_max = sigma.iter().fold(0.0f64, |m, &s| m.max(s));
            let spread: Vec<f64> = sigma.iter().map(|s| s / (sigma_max + eps)).collect();
            let mut values = Vec::with_capacity(b);
            let mut grad = Matrix::zeros(b, n);
            for (r, row) in h.row_iter().enumerate() {
                // lowest index wins ties for the maximum
                let (arg, max) = row.iter().enumerate().fold((0, f64::NEG_INFINITY), |(ai, am), (i, x)| {
                    if x.abs() > am {
                        (i, x.abs())
                    } else {
                        (ai, am)
                    }
                });
                let denom = max + eps;
                // G = Σ h² + Σ |h|³ s / (max + ε)
                let mut cubic = 0.0;
                let g = grad.row_mut(r);
                for ((gi, &x), &s) in g.iter_mut().zip(row).zip(&spread) {
                    let a = x.abs();
                    cubic += a * a * a * s;
                    *gi = 2.0 * x + 3.0 * a * x * s / denom;
                }
                if n > 0 {
                    g[arg] -= row[arg].signum() * cubic / (denom * denom);
                }
                values.push(row.iter().map(|x| x * x).sum::<f64>() + cubic / denom);
            }
            (values, grad)
        }
        BatchMode::AttentionWeighted => {
            let mut values = Vec::with_capacity(b);
            let mut grad = Matrix::zeros(b, n);
            for (r, row) in h.row_iter().enumerate() {
                let top = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x * x));
                let weights: Vec<f64> = row.iter().map(|x| (x * x - top).exp()).collect();
                let z: f64 = weights.iter().sum();
                let mut s = 0.0;
                for ((gi, &x), w) in grad.row_mut(r).iter_mut().zip(row).zip(&weights) {
                    let alpha = w / z;
                    s += alpha * x * x;
                    *gi = 2.0 * alpha * x;
                }
                values.push(s);
            }
            (values, grad)
        }
        BatchMode::FractalDimension => {
            let values = h
                .row_iter()
                .map(|r| r.iter().map(|x| x * x).sum::<f64>() + params.fractal_weight * box_counting_dimension(r))
                .collect();
            (values, h.scale(2.0))
        }
    };
    let out = GoodnessResult::from_rows(values, grad, OP)?;
    if update_state {
        let track = matches!(mode, BatchMode::WhitenedEnergy | BatchMode::PcaEnergy);
        state.observe(h, track)?;
    }
    Ok(out)
}

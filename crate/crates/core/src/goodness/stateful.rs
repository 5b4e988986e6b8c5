use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::{GoodnessParams, GoodnessResult, GoodnessState};

/// Objectives that compare a row against running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatefulMode {
    /// `Σ h² + λ Σ h² (h² − θ)` with a sliding threshold θ per unit
    Bcm,
    /// `−½ Σ (h − μ)² / (σ² + ε)`
    GaussianEnergy,
    /// `‖h‖² − λ ‖h − μ_pred‖²`
    PredictiveCoding,
    /// `Σ (h − μ)²`
    Hebbian,
}

impl StatefulMode {
    fn name(self) -> &'static str {
        match self {
            StatefulMode::Bcm => "bcm",
            StatefulMode::GaussianEnergy => "gaussian_energy",
            StatefulMode::PredictiveCoding => "predictive_coding",
            StatefulMode::Hebbian => "hebbian",
        }
    }
}

/// Evaluates on the current state, then advances it with `h` when
/// `update_state` is set.
pub fn goodness_stateful(
    mode: StatefulMode,
    h: &Matrix,
    state: &mut GoodnessState,
    params: &GoodnessParams,
    update_state: bool,
) -> Result<GoodnessResult> {
    const OP: &str = "goodness_stateful";
    if !h.is_finite() {
        return Err(Error::NonFinite { op: OP });
    }
    state.check_width(mode.name(), h)?;
    let n = h.cols();
    let mut values = Vec::with_capacity(h.rows());
    let mut grad = Matrix::zeros(h.rows(), n);

    let variance: Vec<f64> = match mode {
        StatefulMode::GaussianEnergy => {
            let v: Vec<f64> = state
                .running_var
                .as_slice()
                .iter()
                .map(|s| s + params.shrinkage)
                .collect();
            if let Some(bad) = v.iter().find(|x| !(**x > 0.0)) {
                return Err(Error::Goodness {
                    name: mode.name(),
                    reason: format!("variance + eps must be positive, found {bad}"),
                });
            }
            v
        }
        _ => Vec::new(),
    };

    for (r, row) in h.row_iter().enumerate() {
        let g = grad.row_mut(r);
        let mut s = 0.0;
        match mode {
            StatefulMode::Bcm => {
                let l = params.bcm_lambda;
                for ((gi, &x), &t) in g.iter_mut().zip(row).zip(state.bcm_threshold.as_slice()) {
                    let x2 = x * x;
                    s += x2 + l * x2 * (x2 - t);
                    *gi = 2.0 * x + l * (4.0 * x2 * x - 2.0 * t * x);
                }
            }
            StatefulMode::GaussianEnergy => {
                for (((gi, &x), &m), &v) in g.iter_mut().zip(row).zip(state.running_mean.as_slice()).zip(&variance) {
                    let d = x - m;
                    s -= 0.5 * d * d / v;
                    *gi = -d / v;
                }
            }
            StatefulMode::PredictiveCoding => {
                let l = params.pc_lambda;
                for ((gi, &x), &m) in g.iter_mut().zip(row).zip(state.pred_baseline.as_slice()) {
                    let d = x - m;
                    s += x * x - l * d * d;
                    *gi = 2.0 * x - 2.0 * l * d;
                }
            }
            StatefulMode::Hebbian => {
                for ((gi, &x), &m) in g.iter_mut().zip(row).zip(state.running_mean.as_slice()) {
                    let d = x - m;
                    s += d * d;
                    *gi = 2.0 * d;
                }
            }
        }
        values.push(s);
    }
    let out = GoodnessResult::from_rows(values, grad, OP)?;
    if update_state {
        state.observe(h, false)?;
    }
    Ok(out)
}

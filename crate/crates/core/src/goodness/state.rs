use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{batch_covariance, inverse_sqrt_spd, top_k_components, Matrix};

use super::GoodnessParams;

/// Running statistics owned by a layer's objective.
///
/// All per-unit statistics are exponential moving averages advanced only by
/// positive training batches:
///
/// * `running_mean`, `pred_baseline`: EMA of the batch mean of `h`
/// * `running_var`: EMA of the batch variance of `h` (starts at 1)
/// * `bcm_threshold`: EMA of the batch mean of `h²`
/// * `covariance`: EMA of the batch covariance, tracked only by objectives
///   that whiten or project; seeded with the first batch's covariance
///
/// `whitening` and `pca` are derived from `covariance` and change only when
/// explicitly refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessState {
    pub running_mean: Matrix,
    pub running_var: Matrix,
    pub bcm_threshold: Matrix,
    pub pred_baseline: Matrix,
    pub covariance: Option<Matrix>,
    pub whitening: Option<Matrix>,
    pub pca: Option<Matrix>,
    pub decay: f64,
    pub batches_seen: u64,
}

impl GoodnessState {
    pub fn new(width: usize, decay: f64) -> Self {
        Self {
            running_mean: Matrix::zeros(1, width),
            running_var: Matrix::filled(1, width, 1.0),
            bcm_threshold: Matrix::zeros(1, width),
            pred_baseline: Matrix::zeros(1, width),
            covariance: None,
            whitening: None,
            pca: None,
            decay,
            batches_seen: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.running_mean.cols()
    }

    pub(crate) fn check_width(&self, name: &'static str, h: &Matrix) -> Result<()> {
        if h.cols() != self.width() {
            return Err(Error::Goodness {
                name,
                reason: format!(
                    "state width {} does not match activations {:?}",
                    self.width(),
                    h.shape()
                ),
            });
        }
        Ok(())
    }

    fn ema(target: &mut Matrix, decay: f64, batch: &[f64]) {
        for (t, b) in target.as_mut_slice().iter_mut().zip(batch) {
            *t = decay * *t + (1.0 - decay) * b;
        }
    }

    /// Advances every per-unit statistic with a positive batch, and the
    /// covariance EMA when `track_covariance` is set.
    pub fn observe(&mut self, h: &Matrix, track_covariance: bool) -> Result<()> {
        if h.cols() != self.width() {
            return Err(Error::Shape {
                op: "GoodnessState::observe",
                left: (1, self.width()),
                right: h.shape(),
            });
        }
        if h.rows() == 0 {
            return Ok(());
        }
        let mean = h.column_mean()?;
        let n = h.rows() as f64;
        let mut sq = vec![0.0; h.cols()];
        let mut var = vec![0.0; h.cols()];
        for row in h.row_iter() {
            for ((s, v), (x, m)) in sq.iter_mut().zip(var.iter_mut()).zip(row.iter().zip(mean.as_slice())) {
                *s += x * x;
                *v += (x - m) * (x - m);
            }
        }
        sq.iter_mut().for_each(|s| *s /= n);
        var.iter_mut().for_each(|v| *v /= n);
        let d = self.decay;
        Self::ema(&mut self.running_mean, d, mean.as_slice());
        Self::ema(&mut self.pred_baseline, d, mean.as_slice());
        Self::ema(&mut self.running_var, d, &var);
        Self::ema(&mut self.bcm_threshold, d, &sq);
        if track_covariance {
            self.observe_covariance(h)?;
        }
        self.batches_seen += 1;
        Ok(())
    }

    pub(crate) fn observe_covariance(&mut self, h: &Matrix) -> Result<()> {
        if h.rows() < 2 {
            return Ok(());
        }
        let cov = batch_covariance(h)?;
        match &mut self.covariance {
            None => self.covariance = Some(cov),
            Some(c) => {
                let d = self.decay;
                for (t, b) in c.as_mut_slice().iter_mut().zip(cov.as_slice()) {
                    *t = d * *t + (1.0 - d) * b;
                }
            }
        }
        Ok(())
    }

    fn covariance_or_err(&self, name: &'static str) -> Result<&Matrix> {
        self.covariance.as_ref().ok_or_else(|| Error::Goodness {
            name,
            reason: "no covariance estimate to fit from".into(),
        })
    }

    pub fn refit_whitening(&mut self, params: &GoodnessParams) -> Result<()> {
        let cov = self.covariance_or_err("whitened_energy")?;
        self.whitening = Some(inverse_sqrt_spd(cov, params.shrinkage, params.whitening_iters)?);
        Ok(())
    }

    pub fn refit_pca(&mut self, params: &GoodnessParams) -> Result<()> {
        let cov = self.covariance_or_err("pca_energy")?;
        let k = params.pca_k.min(cov.rows());
        self.pca = Some(top_k_components(cov, k, params.power_iters)?.vectors);
        Ok(())
    }
}

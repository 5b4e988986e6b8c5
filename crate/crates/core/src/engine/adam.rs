use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::config::AdamConfig;

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: Matrix,
    pub v: Matrix,
}

impl Moments {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
        }
    }

    /// One Adam step on `param` with bias correction for step `t` (1-based)
    /// and decoupled weight decay `decay`.
    pub fn step(
        &mut self,
        param: &mut Matrix,
        grad: &Matrix,
        t: u64,
        lr: f64,
        decay: f64,
        cfg: &AdamConfig,
    ) -> Result<()> {
        if param.shape() != grad.shape() || param.shape() != self.m.shape() {
            return Err(Error::Shape {
                op: "adam step",
                left: param.shape(),
                right: grad.shape(),
            });
        }
        let c1 = 1.0 - cfg.beta1.powi(t as i32);
        let c2 = 1.0 - cfg.beta2.powi(t as i32);
        let moments = self.m.as_mut_slice().iter_mut().zip(self.v.as_mut_slice().iter_mut());
        for ((p, &g), (m, v)) in param.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(moments) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let update = (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
            *p -= lr * (update + decay * *p);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Matrix::row_vector(&[1.0, -1.0]);
        let g = Matrix::row_vector(&[0.5, -2.0]);
        let mut m = Moments::zeros(1, 2);
        m.step(&mut p, &g, 1, 0.1, 0.0, &AdamConfig::default()).unwrap();
        // bias-corrected first step is lr · sign(g)
        assert!((p.get(0, 0) - 0.9).abs() < 1e-6);
        assert!((p.get(0, 1) + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = Matrix::row_vector(&[0.3, 7.0]);
        let before = p.clone();
        let mut m = Moments::zeros(1, 2);
        m.step(
            &mut p,
            &Matrix::row_vector(&[1.0, 1.0]),
            1,
            0.0,
            0.1,
            &AdamConfig::default(),
        )
        .unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn decay_shrinks_without_gradient() {
        let mut p = Matrix::row_vector(&[2.0]);
        let mut m = Moments::zeros(1, 1);
        m.step(&mut p, &Matrix::row_vector(&[0.0]), 1, 0.5, 0.1, &AdamConfig::default())
            .unwrap();
        assert!((p.get(0, 0) - 1.9).abs() < 1e-12);
    }
}

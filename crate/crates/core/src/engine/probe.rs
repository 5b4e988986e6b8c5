use serde::{Deserialize, Serialize};

use crate::data::{embed_neutral_rows, Split};
use crate::error::{Error, Result};
use crate::tensor::{log_sum_exp, Matrix, Rng};

use super::adam::Moments;
use super::config::{AdamConfig, ProbeConfig};
use super::layer::normalize_rows;
use super::train::{FFNetwork, PROBE_STREAM};

/// Softmax regression on frozen features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeState {
    /// classes × features
    pub weight: Matrix,
    pub bias: Matrix,
    pub weight_moments: Moments,
    pub bias_moments: Moments,
    pub step: u64,
}

/// Concatenated, length-normalized activations of the readout layers for
/// neutral-embedded inputs. Pass `embedded = true` when `x` already carries
/// the neutral code.
pub fn probe_features(net: &FFNetwork, x: &Matrix, embedded: bool) -> Result<Matrix> {
    let x = if embedded {
        x.clone()
    } else {
        embed_neutral_rows(x, net.num_classes)?
    };
    let acts = net.forward_all(&x)?;
    let parts: Vec<Matrix> = acts[net.config.readout_from_layer..]
        .iter()
        .map(normalize_rows)
        .collect();
    let refs: Vec<&Matrix> = parts.iter().collect();
    Matrix::hstack(&refs)
}

fn check_labels(features: &Matrix, labels: &[usize], classes: usize) -> Result<()> {
    if features.rows() != labels.len() {
        return Err(Error::CountMismatch {
            images: features.rows(),
            labels: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(
            "probe",
            format!("label {bad} out of range for {classes} classes"),
        ));
    }
    Ok(())
}

impl ProbeState {
    /// Zero weights, so the initial prediction is uniform.
    pub fn new(classes: usize, features: usize) -> Self {
        Self {
            weight: Matrix::zeros(classes, features),
            bias: Matrix::zeros(1, classes),
            weight_moments: Moments::zeros(classes, features),
            bias_moments: Moments::zeros(1, classes),
            step: 0,
        }
    }

    pub fn classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        let mut z = features.matmul_transposed(&self.weight)?;
        z.add_row_broadcast(&self.bias)?;
        Ok(z)
    }

    /// Row-wise softmax probabilities and the mean cross-entropy.
    fn softmax_loss(&self, features: &Matrix, labels: &[usize]) -> Result<(Matrix, f64)> {
        check_labels(features, labels, self.classes())?;
        let mut z = self.logits(features)?;
        let mut loss = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = z.row_mut(r);
            let lse = log_sum_exp(row.iter().copied());
            loss += lse - row[y];
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        Ok((z, loss / labels.len().max(1) as f64))
    }

    /// One Adam step on a mini-batch; returns the loss before the step.
    pub fn train_step(&mut self, features: &Matrix, labels: &[usize], lr: f64, adam: &AdamConfig) -> Result<f64> {
        if labels.is_empty() {
            return Err(Error::Empty {
                op: "ProbeState::train_step",
            });
        }
        let (mut dz, loss) = self.softmax_loss(features, labels)?;
        let inv = 1.0 / labels.len() as f64;
        for (r, &y) in labels.iter().enumerate() {
            let row = dz.row_mut(r);
            row[y] -= 1.0;
            row.iter_mut().for_each(|v| *v *= inv);
        }
        let d_weight = dz.transposed_matmul(features)?;
        let d_bias = dz.column_sum();
        self.step += 1;
        self.weight_moments
            .step(&mut self.weight, &d_weight, self.step, lr, 0.0, adam)?;
        self.bias_moments
            .step(&mut self.bias, &d_bias, self.step, lr, 0.0, adam)?;
        Ok(loss)
    }

    /// (accuracy, mean cross-entropy); NaN for an empty set.
    pub fn evaluate(&self, features: &Matrix, labels: &[usize]) -> Result<(f64, f64)> {
        if labels.is_empty() {
            return Ok((f64::NAN, f64::NAN));
        }
        let (p, loss) = self.softmax_loss(features, labels)?;
        let correct = p
            .row_iter()
            .zip(labels)
            .filter(|(row, &y)| super::predict::argmax(row) == y)
            .count();
        Ok((correct as f64 / labels.len() as f64, loss))
    }

    /// Trains on `features` for `cfg.epochs` shuffled passes.
    pub fn fit(
        &mut self,
        features: &Matrix,
        labels: &[usize],
        cfg: &ProbeConfig,
        adam: &AdamConfig,
        rng: &mut Rng,
    ) -> Result<f64> {
        check_labels(features, labels, self.classes())?;
        let mut order: Vec<usize> = (0..labels.len()).collect();
        let mut last = f64::NAN;
        for _ in 0..cfg.epochs {
            rng.shuffle(&mut order);
            let mut total = 0.0;
            let mut batches = 0;
            for rows in order.chunks(cfg.batch_size) {
                let y: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
                total += self.train_step(&features.select_rows(rows), &y, cfg.lr, adam)?;
                batches += 1;
            }
            last = total / batches.max(1) as f64;
        }
        Ok(last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracy: f64,
    /// Mean test cross-entropy.
    pub loss: f64,
    /// Mean training cross-entropy over the final epoch.
    pub train_loss: f64,
}

/// Fits a fresh probe on features of neutral-embedded `train` images and
/// reports test accuracy and cross-entropy.
pub fn linear_probe(net: &FFNetwork, train: &Split, test: &Split) -> Result<ProbeReport> {
    let cfg = &net.config;
    let train_x = embed_neutral_rows(&train.images, net.num_classes)?;
    let test_x = embed_neutral_rows(&test.images, net.num_classes)?;
    let train_f = probe_features(net, &train_x, true)?;
    let test_f = probe_features(net, &test_x, true)?;
    let mut probe = ProbeState::new(net.num_classes, train_f.cols());
    let mut rng = Rng::new(cfg.seed).split(PROBE_STREAM);
    let train_loss = probe.fit(&train_f, &train.labels, &cfg.probe, &cfg.adam, &mut rng)?;
    let (accuracy, loss) = probe.evaluate(&test_f, &test.labels)?;
    Ok(ProbeReport {
        accuracy,
        loss,
        train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_init_loss_is_ln_classes() {
        let p = ProbeState::new(10, 4);
        let f = Rng::new(1).normal_matrix(20, 4, 1.0);
        let labels: Vec<usize> = (0..20).map(|i| i % 10).collect();
        let (_, loss) = p.evaluate(&f, &labels).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn separable_blobs() {
        let mut rng = Rng::new(2);
        let n = 200;
        let mut f = rng.normal_matrix(n, 5, 0.1);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        for (r, &y) in labels.iter().enumerate() {
            f.row_mut(r)[0] += if y == 1 { 1.0 } else { -1.0 };
        }
        let mut p = ProbeState::new(2, 5);
        let cfg = ProbeConfig {
            epochs: 20,
            lr: 1e-2,
            batch_size: 20,
        };
        p.fit(&f, &labels, &cfg, &AdamConfig::default(), &mut rng).unwrap();
        let (acc, _) = p.evaluate(&f, &labels).unwrap();
        assert!(acc >= 0.99, "{acc}");
    }

    #[test]
    fn random_features_chance_level() {
        let mut rng = Rng::new(3);
        let train = rng.normal_matrix(2000, 20, 1.0);
        let test = rng.normal_matrix(2000, 20, 1.0);
        let ytr: Vec<usize> = (0..2000).map(|_| rng.below(10)).collect();
        let yte: Vec<usize> = (0..2000).map(|_| rng.below(10)).collect();
        let mut p = ProbeState::new(10, 20);
        let cfg = ProbeConfig {
            epochs: 5,
            ..ProbeConfig::default()
        };
        p.fit(&train, &ytr, &cfg, &AdamConfig::default(), &mut rng).unwrap();
        let (acc, _) = p.evaluate(&test, &yte).unwrap();
        assert!((acc - 0.1).abs() <= 0.03, "{acc}");
    }
}

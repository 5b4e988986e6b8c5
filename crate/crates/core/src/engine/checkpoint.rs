//! Binary checkpoints of a training run.
//!
//! All integers and floats are little-endian. A matrix is written as
//! `rows: u64, cols: u64` followed by `rows·cols` `f64` values in row-major
//! order; an optional matrix is a `u8` flag (0 absent, 1 present) followed by
//! the matrix when present.
//!
//! ```text
//! magic          4 bytes  "FFCK"
//! version        u32      1
//! config_len     u64
//! config         config_len bytes of UTF-8 JSON (the run configuration)
//! input_dim      u64
//! num_classes    u64
//! epochs_done    u64
//! rng_seed       u64
//! rng_stream     u64
//! rng_word_pos   u128
//! layer_count    u64
//! layer_count × layer:
//!     weight, bias                      matrix
//!     weight_m, weight_v, bias_m, bias_v matrix
//!     step                              u64
//!     peer_mean                         matrix
//!     running_mean, running_var         matrix
//!     bcm_threshold, pred_baseline      matrix
//!     covariance, whitening, pca        optional matrix
//!     decay                             f64
//!     batches_seen                      u64
//! ```
//!
//! Readers reject a wrong magic, an unknown version, truncation and trailing
//! bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::goodness::GoodnessState;
use crate::tensor::{Matrix, Rng};

use super::adam::Moments;
use super::config::FFConfig;
use super::layer::LayerState;
use super::train::FFNetwork;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A network together with the data-order RNG position it was saved at.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: FFNetwork,
    pub rng: Rng,
    pub epochs_done: usize,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        for &v in m.as_slice() {
            self.f64(v);
        }
    }
    fn opt_matrix(&mut self, m: &Option<Matrix>) {
        match m {
            None => self.u8(0),
            Some(m) => {
                self.u8(1);
                self.matrix(m);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {} (need {n} more)", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("count exceeds address space".into()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let len = rows
            .checked_mul(cols)
            .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= self.buf.len() - self.pos))
            .ok_or_else(|| Error::Checkpoint(format!("matrix {rows}×{cols} exceeds remaining bytes")))?;
        let data = self
            .take(len * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::new(rows, cols, data)
    }
    fn opt_matrix(&mut self) -> Result<Option<Matrix>> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.matrix()?)),
            f => Err(Error::Checkpoint(format!("invalid option flag {f}"))),
        }
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let net = &self.network;
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        let cfg = serde_json::to_vec(&net.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        w.u64(cfg.len() as u64);
        w.0.extend_from_slice(&cfg);
        w.u64(net.input_dim as u64);
        w.u64(net.num_classes as u64);
        w.u64(self.epochs_done as u64);
        w.u64(self.rng.seed());
        w.u64(self.rng.stream());
        w.u128(self.rng.word_pos());
        w.u64(net.layers.len() as u64);
        for l in &net.layers {
            w.matrix(&l.weight);
            w.matrix(&l.bias);
            w.matrix(&l.weight_moments.m);
            w.matrix(&l.weight_moments.v);
            w.matrix(&l.bias_moments.m);
            w.matrix(&l.bias_moments.v);
            w.u64(l.step);
            w.matrix(&l.peer_mean);
            let s = &l.goodness_state;
            w.matrix(&s.running_mean);
            w.matrix(&s.running_var);
            w.matrix(&s.bcm_threshold);
            w.matrix(&s.pred_baseline);
            w.opt_matrix(&s.covariance);
            w.opt_matrix(&s.whitening);
            w.opt_matrix(&s.pca);
            w.f64(s.decay);
            w.u64(s.batches_seen);
        }
        Ok(w.0)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("unexpected magic {magic:?}")));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let cfg_len = r.usize()?;
        let config: FFConfig =
            serde_json::from_slice(r.take(cfg_len)?).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let input_dim = r.usize()?;
        let num_classes = r.usize()?;
        let epochs_done = r.usize()?;
        let rng = Rng::restore(r.u64()?, r.u64()?, r.u128()?);
        let count = r.usize()?;
        if count != config.layer_sizes.len() {
            return Err(Error::Checkpoint(format!(
                "{count} layers stored but config lists {}",
                config.layer_sizes.len()
            )));
        }
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let weight = r.matrix()?;
            let bias = r.matrix()?;
            let weight_moments = Moments {
                m: r.matrix()?,
                v: r.matrix()?,
            };
            let bias_moments = Moments {
                m: r.matrix()?,
                v: r.matrix()?,
            };
            let step = r.u64()?;
            let peer_mean = r.matrix()?;
            let goodness_state = GoodnessState {
                running_mean: r.matrix()?,
                running_var: r.matrix()?,
                bcm_threshold: r.matrix()?,
                pred_baseline: r.matrix()?,
                covariance: r.opt_matrix()?,
                whitening: r.opt_matrix()?,
                pca: r.opt_matrix()?,
                decay: r.f64()?,
                batches_seen: r.u64()?,
            };
            layers.push(LayerState {
                weight,
                bias,
                weight_moments,
                bias_moments,
                step,
                peer_mean,
                goodness_state,
            });
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        let mut fan_in = input_dim;
        for (l, &width) in layers.iter().zip(&config.layer_sizes) {
            if l.weight.shape() != (width, fan_in) || l.bias.shape() != (1, width) {
                return Err(Error::Checkpoint("layer shapes disagree with config".into()));
            }
            fan_in = width;
        }
        let objective = config.objective()?;
        Ok(Self {
            network: FFNetwork {
                config,
                objective,
                layers,
                input_dim,
                num_classes,
            },
            rng,
            epochs_done,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

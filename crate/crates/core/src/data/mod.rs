//! Dataset loading and the label-embedding scheme that turns images into
//! positive, negative and neutral samples.
//!
//! Expected layout under the data root (`FF_DATA_DIR`); nothing is ever
//! downloaded:
//!
//! ```text
//! mnist/         train-images-idx3-ubyte  train-labels-idx1-ubyte
//!                t10k-images-idx3-ubyte   t10k-labels-idx1-ubyte
//! fashionmnist/  (same file names as mnist/)
//! cifar10/       data_batch_1.bin .. data_batch_5.bin  test_batch.bin
//!                (a nested cifar-10-batches-bin/ directory is also accepted)
//! stl10/         train_X.bin train_y.bin test_X.bin test_y.bin
//!                (a nested stl10_binary/ directory is also accepted)
//! ```

mod embed;
pub mod formats;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use embed::{embed_label, embed_labels, embed_neutral, embed_neutral_rows, make_negative, make_negatives};
pub use formats::{load_cifar10, load_idx, load_stl10};

pub const DATA_DIR_ENV: &str = "FF_DATA_DIR";
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Mnist,
    FashionMnist,
    Cifar10,
    Stl10,
}

impl DatasetName {
    pub const ALL: [DatasetName; 4] = [
        DatasetName::Mnist,
        DatasetName::FashionMnist,
        DatasetName::Cifar10,
        DatasetName::Stl10,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::FashionMnist => "fashionmnist",
            DatasetName::Cifar10 => "cifar10",
            DatasetName::Stl10 => "stl10",
        }
    }

    /// Flattened input width. STL-10 is taken at native 96×96×3 resolution.
    pub fn dim(self) -> usize {
        match self {
            DatasetName::Mnist | DatasetName::FashionMnist => 784,
            DatasetName::Cifar10 => formats::CIFAR_PIXELS,
            DatasetName::Stl10 => formats::STL_RECORD,
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "mnist" => Ok(DatasetName::Mnist),
            "fashionmnist" => Ok(DatasetName::FashionMnist),
            "cifar10" => Ok(DatasetName::Cifar10),
            "stl10" => Ok(DatasetName::Stl10),
            _ => Err(Error::invalid(
                "dataset",
                format!("unknown dataset '{s}'; valid: mnist, fashionmnist, cifar10, stl10"),
            )),
        }
    }
}

/// Images (one flattened image per row, values in [0, 1]) with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub images: Matrix,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First `n` samples (or all of them, if fewer).
    pub fn head(&self, n: usize) -> Split {
        let n = n.min(self.len());
        Split {
            images: self.images.slice_rows(0, n),
            labels: self.labels[..n].to_vec(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Split {
        Split {
            images: self.images.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub(crate) fn concat(parts: &[Split], dim: usize) -> Result<Split> {
        let mats: Vec<&Matrix> = parts.iter().map(|p| &p.images).collect();
        let images = if mats.is_empty() {
            Matrix::zeros(0, dim)
        } else {
            Matrix::vstack(&mats)?
        };
        let labels = parts.iter().flat_map(|p| p.labels.iter().copied()).collect();
        Ok(Split { images, labels })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: DatasetName,
    pub train: Split,
    pub test: Split,
    pub num_classes: usize,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.train.images.cols()
    }

    /// Keeps the first `train` training and first `test` test samples.
    pub fn truncated(&self, train: Option<usize>, test: Option<usize>) -> Dataset {
        Dataset {
            name: self.name,
            train: train.map_or_else(|| self.train.clone(), |n| self.train.head(n)),
            test: test.map_or_else(|| self.test.clone(), |n| self.test.head(n)),
            num_classes: self.num_classes,
        }
    }
}

/// Data root from `FF_DATA_DIR`, if set.
pub fn data_root_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

fn first_existing(candidates: &[PathBuf]) -> PathBuf {
    candidates
        .iter()
        .find(|p| p.exists())
        .cloned()
        .unwrap_or_else(|| candidates[0].clone())
}

/// Loads a dataset from `root` using the layout in the module docs.
pub fn load_dataset(name: DatasetName, root: &Path) -> Result<Dataset> {
    let (train, test) = match name {
        DatasetName::Mnist | DatasetName::FashionMnist => {
            let dir = root.join(name.as_str());
            let train = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
                NUM_CLASSES,
            )?;
            let test = load_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
                NUM_CLASSES,
            )?;
            (train, test)
        }
        DatasetName::Cifar10 => {
            let base = root.join("cifar10");
            let dir = first_existing(&[base.join("cifar-10-batches-bin"), base.clone()]);
            let batches: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
            (load_cifar10(&batches)?, load_cifar10(&[dir.join("test_batch.bin")])?)
        }
        DatasetName::Stl10 => {
            let base = root.join("stl10");
            let dir = first_existing(&[base.join("stl10_binary"), base.clone()]);
            (
                load_stl10(&dir.join("train_X.bin"), &dir.join("train_y.bin"))?,
                load_stl10(&dir.join("test_X.bin"), &dir.join("test_y.bin"))?,
            )
        }
    };
    Ok(Dataset {
        name,
        train,
        test,
        num_classes: NUM_CLASSES,
    })
}

/// Per-channel standardization statistics. Channels are contiguous planes of
/// equal width within a row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub per_channel_mean: Vec<f64>,
    pub per_channel_std: Vec<f64>,
}

impl NormalizationSpec {
    pub fn fit(images: &Matrix, channels: usize) -> Result<Self> {
        if channels == 0 || !images.cols().is_multiple_of(channels) || images.rows() == 0 {
            return Err(Error::invalid(
                "NormalizationSpec::fit",
                "channels must divide a non-empty width",
            ));
        }
        let plane = images.cols() / channels;
        let count = (images.rows() * plane) as f64;
        let mut mean = vec![0.0; channels];
        let mut sq = vec![0.0; channels];
        for row in images.row_iter() {
            for (c, chunk) in row.chunks_exact(plane).enumerate() {
                for v in chunk {
                    mean[c] += v;
                    sq[c] += v * v;
                }
            }
        }
        let std = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= count;
                (s / count - *m * *m).max(0.0).sqrt().max(1e-8)
            })
            .collect();
        let spec = Self {
            per_channel_mean: mean,
            per_channel_std: std,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_channel_mean.len() != self.per_channel_std.len() {
            return Err(Error::invalid("NormalizationSpec", "mean/std length mismatch"));
        }
        if self.per_channel_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("NormalizationSpec", "std entries must be > 0"));
        }
        Ok(())
    }

    pub fn apply(&self, images: &Matrix) -> Result<Matrix> {
        self.validate()?;
        let channels = self.per_channel_mean.len();
        if channels == 0 || !images.cols().is_multiple_of(channels) {
            return Err(Error::invalid(
                "NormalizationSpec::apply",
                "channel count does not divide width",
            ));
        }
        let plane = images.cols() / channels;
        let mut out = images.clone();
        for r in 0..out.rows() {
            for (c, chunk) in out.row_mut(r).chunks_exact_mut(plane).enumerate() {
                let (m, s) = (self.per_channel_mean[c], self.per_channel_std[c]);
                chunk.iter_mut().for_each(|v| *v = (*v - m) / s);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_names_parse() {
        assert_eq!("MNIST".parse::<DatasetName>().unwrap(), DatasetName::Mnist);
        assert_eq!(
            "fashion_mnist".parse::<DatasetName>().unwrap(),
            DatasetName::FashionMnist
        );
        assert_eq!("cifar-10".parse::<DatasetName>().unwrap(), DatasetName::Cifar10);
        assert!("imagenet".parse::<DatasetName>().is_err());
        assert_eq!(DatasetName::Stl10.dim(), 27648);
    }

    #[test]
    fn normalization_roundtrip_stats() {
        let images = Matrix::from_rows(&[[0.0, 1.0, 0.5, 0.5], [1.0, 0.0, 0.5, 0.5]]).unwrap();
        let spec = NormalizationSpec::fit(&images, 2).unwrap();
        assert_eq!(spec.per_channel_mean, vec![0.5, 0.5]);
        let z = spec.apply(&images).unwrap();
        assert!((z.get(0, 0) + 1.0).abs() < 1e-12);
        // constant channel keeps a positive floor on std
        assert!(spec.per_channel_std[1] > 0.0);
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(DatasetName::Mnist, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}

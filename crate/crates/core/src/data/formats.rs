//! On-disk dataset formats.
//!
//! * IDX (MNIST, FashionMNIST): big-endian header, magic `0x00000803` for
//!   images (count, rows, cols follow) and `0x00000801` for labels.
//! * CIFAR-10 binary: 3073-byte records, one label byte then 3072 pixel bytes
//!   stored as R plane, G plane, B plane (each 32×32 row-major).
//! * STL-10 binary: 27648-byte records, three 96×96 channel planes each
//!   stored column-major; labels are separate 1-indexed bytes.
//!
//! Pixels load as `byte / 255`. STL-10 records are reordered to the CIFAR
//! layout (channel planes, each row-major) so both color sets flatten the same
//! way.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::Split;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_PIXELS: usize = 3072;
pub const STL_SIDE: usize = 96;
pub const STL_RECORD: usize = STL_SIDE * STL_SIDE * 3;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn need(path: &Path, bytes: &[u8], expected: u64) -> Result<()> {
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    Ok(())
}

fn pixels_to_matrix(count: usize, dim: usize, pixels: &[u8]) -> Matrix {
    let data = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    Matrix::new(count, dim, data).expect("sized by caller")
}

/// Parses an IDX image file into `count × (rows·cols)` pixels in [0, 1].
pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<Matrix> {
    need(path, bytes, 16)?;
    let magic = be_u32(bytes, 0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::UnexpectedMagic {
            path: path.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    let dim = rows * cols;
    let expected = 16 + (count * dim) as u64;
    need(path, bytes, expected)?;
    if bytes.len() as u64 != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes after {count} images", bytes.len() as u64 - expected),
        });
    }
    Ok(pixels_to_matrix(count, dim, &bytes[16..]))
}

pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>> {
    need(path, bytes, 8)?;
    let magic = be_u32(bytes, 0);
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::UnexpectedMagic {
            path: path.to_path_buf(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4) as usize;
    let expected = 8 + count as u64;
    need(path, bytes, expected)?;
    if bytes.len() as u64 != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes after {count} labels", bytes.len() as u64 - expected),
        });
    }
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Loads a matching pair of IDX image and label files.
pub fn load_idx(images_path: &Path, labels_path: &Path, num_classes: usize) -> Result<Split> {
    let images = parse_idx_images(images_path, &read(images_path)?)?;
    let labels = parse_idx_labels(labels_path, &read(labels_path)?)?;
    if images.rows() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.rows(),
            labels: labels.len(),
        });
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(Error::InvalidLabel {
            path: labels_path.to_path_buf(),
            index,
            label: label as i64,
        });
    }
    Ok(Split { images, labels })
}

fn to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Encodes images in IDX form. `side` gives (rows, cols); their product must
/// equal the image width.
pub fn encode_idx_images(images: &Matrix, side: (usize, usize)) -> Result<Vec<u8>> {
    if side.0 * side.1 != images.cols() {
        return Err(Error::invalid("encode_idx_images", "side does not match image width"));
    }
    let mut out = Vec::with_capacity(16 + images.as_slice().len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.rows() as u32).to_be_bytes());
    out.extend_from_slice(&(side.0 as u32).to_be_bytes());
    out.extend_from_slice(&(side.1 as u32).to_be_bytes());
    out.extend(images.as_slice().iter().map(|&v| to_byte(v)));
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|&l| l as u8));
    out
}

pub fn parse_cifar10(path: &Path, bytes: &[u8]) -> Result<Split> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("length {} is not a multiple of {CIFAR_RECORD}", bytes.len()),
        });
    }
    let count = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(count);
    let mut pixels = Vec::with_capacity(count * CIFAR_PIXELS);
    for (index, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] >= 10 {
            return Err(Error::InvalidLabel {
                path: path.to_path_buf(),
                index,
                label: rec[0] as i64,
            });
        }
        labels.push(rec[0] as usize);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok(Split {
        images: pixels_to_matrix(count, CIFAR_PIXELS, &pixels),
        labels,
    })
}

/// Loads and concatenates CIFAR-10 batch files in the given order.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Split> {
    let mut parts = Vec::with_capacity(batch_paths.len());
    for p in batch_paths {
        let p = p.as_ref();
        parts.push(parse_cifar10(p, &read(p)?)?);
    }
    Split::concat(&parts, CIFAR_PIXELS)
}

pub fn encode_cifar10(split: &Split) -> Result<Vec<u8>> {
    if split.images.cols() != CIFAR_PIXELS {
        return Err(Error::invalid("encode_cifar10", "images must have 3072 columns"));
    }
    let mut out = Vec::with_capacity(split.len() * CIFAR_RECORD);
    for (row, &label) in split.images.row_iter().zip(&split.labels) {
        out.push(label as u8);
        out.extend(row.iter().map(|&v| to_byte(v)));
    }
    Ok(out)
}

/// Index of pixel (channel, y, x) in a flattened STL-10 row after loading.
#[inline]
pub fn stl10_output_index(channel: usize, y: usize, x: usize) -> usize {
    channel * STL_SIDE * STL_SIDE + y * STL_SIDE + x
}

/// Index of the same pixel inside a raw (column-major) STL-10 record.
#[inline]
pub fn stl10_file_index(channel: usize, y: usize, x: usize) -> usize {
    channel * STL_SIDE * STL_SIDE + x * STL_SIDE + y
}

pub fn parse_stl10(images_path: &Path, image_bytes: &[u8], labels_path: &Path, label_bytes: &[u8]) -> Result<Split> {
    if !image_bytes.len().is_multiple_of(STL_RECORD) {
        return Err(Error::Format {
            path: images_path.to_path_buf(),
            reason: format!("length {} is not a multiple of {STL_RECORD}", image_bytes.len()),
        });
    }
    let count = image_bytes.len() / STL_RECORD;
    if label_bytes.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_bytes.len(),
        });
    }
    let mut labels = Vec::with_capacity(count);
    for (index, &b) in label_bytes.iter().enumerate() {
        if b == 0 || b > 10 {
            return Err(Error::InvalidLabel {
                path: labels_path.to_path_buf(),
                index,
                label: b as i64,
            });
        }
        labels.push(b as usize - 1);
    }
    let mut data = vec![0.0; count * STL_RECORD];
    for (rec, out) in image_bytes
        .chunks_exact(STL_RECORD)
        .zip(data.chunks_exact_mut(STL_RECORD))
    {
        for c in 0..3 {
            for y in 0..STL_SIDE {
                for x in 0..STL_SIDE {
                    out[stl10_output_index(c, y, x)] = rec[stl10_file_index(c, y, x)] as f64 / 255.0;
                }
            }
        }
    }
    Ok(Split {
        images: Matrix::new(count, STL_RECORD, data)?,
        labels,
    })
}

pub fn load_stl10(images_path: &Path, labels_path: &Path) -> Result<Split> {
    let images = read(images_path)?;
    let labels = read(labels_path)?;
    parse_stl10(images_path, &images, labels_path, &labels)
}

/// Encodes a split in STL-10 layout: (image bytes, 1-indexed label bytes).
pub fn encode_stl10(split: &Split) -> Result<(Vec<u8>, Vec<u8>)> {
    if split.images.cols() != STL_RECORD {
        return Err(Error::invalid("encode_stl10", "images must have 27648 columns"));
    }
    let mut images = vec![0u8; split.len() * STL_RECORD];
    for (row, out) in split.images.row_iter().zip(images.chunks_exact_mut(STL_RECORD)) {
        for c in 0..3 {
            for y in 0..STL_SIDE {
                for x in 0..STL_SIDE {
                    out[stl10_file_index(c, y, x)] = to_byte(row[stl10_output_index(c, y, x)]);
                }
            }
        }
    }
    let labels = split.labels.iter().map(|&l| (l + 1) as u8).collect();
    Ok((images, labels))
}

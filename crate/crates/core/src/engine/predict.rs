use std::ops::Range;

use crate::data::{embed_labels, Split};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::train::FFNetwork;

/// Images scored per forward pass; each contributes one row per class.
const IMAGES_PER_CHUNK: usize = 100;

/// Layers whose goodness is accumulated by default.
pub fn readout_layers(net: &FFNetwork) -> Range<usize> {
    net.config.readout_from_layer..net.layers.len()
}

fn check_range(net: &FFNetwork, range: &Range<usize>) -> Result<()> {
    if range.start > range.end || range.end > net.layers.len() {
        return Err(Error::invalid(
            "multipass",
            format!("layer range {range:?} outside 0..{}", net.layers.len()),
        ));
    }
    Ok(())
}

/// Accumulated goodness for every (image, candidate label) pair: entry
/// `(i, c)` sums the per-layer scores over `range` of image `i` with label
/// `c` embedded.
pub fn candidate_scores(net: &FFNetwork, images: &Matrix, range: Range<usize>) -> Result<Matrix> {
    check_range(net, &range)?;
    let classes = net.num_classes;
    let mut out = Matrix::zeros(images.rows(), classes);
    let mut start = 0;
    while start < images.rows() {
        let end = (start + IMAGES_PER_CHUNK).min(images.rows());
        let count = end - start;
        let mut rows = Vec::with_capacity(count * classes);
        let mut labels = Vec::with_capacity(count * classes);
        for i in start..end {
            for c in 0..classes {
                rows.push(i);
                labels.push(c);
            }
        }
        let x = embed_labels(&images.select_rows(&rows), &labels, classes)?;
        let acts = net.forward_all(&x)?;
        for l in range.clone() {
            let scores = net
                .objective
                .score(&acts[l], &net.layers[l].goodness_state, &net.config.params)?;
            for (k, &s) in scores.as_slice().iter().enumerate() {
                let (i, c) = (start + k / classes, k % classes);
                out.set(i, c, out.get(i, c) + s);
            }
        }
        start = end;
    }
    Ok(out)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicted class per image: the candidate label with the highest
/// accumulated goodness over `range`.
pub fn multipass_predict(net: &FFNetwork, images: &Matrix, range: Range<usize>) -> Result<Vec<usize>> {
    let scores = candidate_scores(net, images, range)?;
    Ok(scores.row_iter().map(argmax).collect())
}

pub fn multipass_predict_row(net: &FFNetwork, image_row: &[f64], range: Range<usize>) -> Result<usize> {
    Ok(multipass_predict(net, &Matrix::row_vector(image_row), range)?[0])
}

/// Fraction of `split` classified correctly over the default layer range;
/// NaN for an empty split.
pub fn multipass_accuracy(net: &FFNetwork, split: &Split) -> Result<f64> {
    if split.is_empty() {
        return Ok(f64::NAN);
    }
    let predicted = multipass_predict(net, &split.images, readout_layers(net))?;
    let correct = predicted.iter().zip(&split.labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / split.len() as f64)
}

//! Label embedding: the first `num_classes` pixels of a flattened image are
//! overwritten with a one-hot code at full intensity. Everything after them
//! is left untouched, so the input width never changes.

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Rng};

/// Intensity of the "on" slot; equals the maximum pixel value after loading.
pub const LABEL_INTENSITY: f64 = 1.0;

fn check_width(op: &'static str, dim: usize, num_classes: usize) -> Result<()> {
    if dim < num_classes {
        return Err(Error::invalid(op, format!("image width {dim} < {num_classes} classes")));
    }
    Ok(())
}

fn check_label(op: &'static str, label: usize, num_classes: usize) -> Result<()> {
    if label >= num_classes {
        return Err(Error::invalid(
            op,
            format!("label {label} out of range for {num_classes} classes"),
        ));
    }
    Ok(())
}

fn write_one_hot(row: &mut [f64], label: usize, num_classes: usize) {
    for (i, slot) in row[..num_classes].iter_mut().enumerate() {
        *slot = if i == label { LABEL_INTENSITY } else { 0.0 };
    }
}

pub fn embed_label(image_row: &[f64], label: usize, num_classes: usize) -> Result<Vec<f64>> {
    check_width("embed_label", image_row.len(), num_classes)?;
    check_label("embed_label", label, num_classes)?;
    let mut out = image_row.to_vec();
    write_one_hot(&mut out, label, num_classes);
    Ok(out)
}

/// Row-wise [`embed_label`] over a batch.
pub fn embed_labels(images: &Matrix, labels: &[usize], num_classes: usize) -> Result<Matrix> {
    check_width("embed_labels", images.cols(), num_classes)?;
    if labels.len() != images.rows() {
        return Err(Error::CountMismatch {
            images: images.rows(),
            labels: labels.len(),
        });
    }
    let mut out = images.clone();
    for (r, &label) in labels.iter().enumerate() {
        check_label("embed_labels", label, num_classes)?;
        write_one_hot(out.row_mut(r), label, num_classes);
    }
    Ok(out)
}

fn draw_wrong_label(true_label: usize, num_classes: usize, rng: &mut Rng) -> usize {
    let draw = rng.below(num_classes - 1);
    if draw >= true_label {
        draw + 1
    } else {
        draw
    }
}

/// The same image with a label drawn uniformly from the incorrect classes.
pub fn make_negative(
    image_row: &[f64],
    true_label: usize,
    num_classes: usize,
    rng: &mut Rng,
) -> Result<(Vec<f64>, usize)> {
    if num_classes < 2 {
        return Err(Error::invalid("make_negative", "need at least 2 classes"));
    }
    check_label("make_negative", true_label, num_classes)?;
    let wrong = draw_wrong_label(true_label, num_classes, rng);
    Ok((embed_label(image_row, wrong, num_classes)?, wrong))
}

/// Row-wise [`make_negative`] over a batch; draws one label per row in order.
pub fn make_negatives(
    images: &Matrix,
    labels: &[usize],
    num_classes: usize,
    rng: &mut Rng,
) -> Result<(Matrix, Vec<usize>)> {
    if num_classes < 2 {
        return Err(Error::invalid("make_negatives", "need at least 2 classes"));
    }
    let mut wrong = Vec::with_capacity(labels.len());
    for &l in labels {
        check_label("make_negatives", l, num_classes)?;
        wrong.push(draw_wrong_label(l, num_classes, rng));
    }
    Ok((embed_labels(images, &wrong, num_classes)?, wrong))
}

/// Uniform "no label" code: every label slot set to `1 / num_classes`.
pub fn embed_neutral(image_row: &[f64], num_classes: usize) -> Result<Vec<f64>> {
    check_width("embed_neutral", image_row.len(), num_classes)?;
    let mut out = image_row.to_vec();
    out[..num_classes].fill(1.0 / num_classes as f64);
    Ok(out)
}

pub fn embed_neutral_rows(images: &Matrix, num_classes: usize) -> Result<Matrix> {
    check_width("embed_neutral_rows", images.cols(), num_classes)?;
    let mut out = images.clone();
    let v = 1.0 / num_classes as f64;
    for r in 0..out.rows() {
        out.row_mut(r)[..num_classes].fill(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_image_label_three() {
        let row = embed_label(&[0.0; 784], 3, 10).unwrap();
        let mut want = vec![0.0; 784];
        want[3] = 1.0;
        assert_eq!(row, want);
    }

    #[test]
    fn labels_differ_only_in_slots() {
        let img: Vec<f64> = (0..784).map(|i| (i % 7) as f64 / 7.0).collect();
        let a = embed_label(&img, 2, 10).unwrap();
        let b = embed_label(&img, 5, 10).unwrap();
        let diff: Vec<usize> = (0..784).filter(|&i| a[i] != b[i]).collect();
        assert_eq!(diff, vec![2, 5]);
        assert_eq!(&a[10..], &img[10..]);
    }

    #[test]
    fn embed_is_idempotent() {
        let img: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let once = embed_label(&img, 4, 10).unwrap();
        assert_eq!(embed_label(&once, 4, 10).unwrap(), once);
    }

    #[test]
    fn errors() {
        assert!(embed_label(&[0.0; 5], 0, 10).is_err());
        assert!(embed_label(&[0.0; 20], 10, 10).is_err());
        let mut rng = Rng::new(0);
        assert!(make_negative(&[0.0; 20], 0, 1, &mut rng).is_err());
    }

    #[test]
    fn two_classes_forced() {
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            let (_, w) = make_negative(&[0.0; 4], 0, 2, &mut rng).unwrap();
            assert_eq!(w, 1);
        }
    }

    #[test]
    fn wrong_label_frequencies() {
        let mut rng = Rng::new(11);
        let true_label = 4;
        let mut counts = [0usize; 10];
        let n = 100_000;
        let img = [0.0; 10];
        for _ in 0..n {
            let (_, w) = make_negative(&img, true_label, 10, &mut rng).unwrap();
            counts[w] += 1;
        }
        assert_eq!(counts[true_label], 0);
        for (c, &k) in counts.iter().enumerate() {
            if c != true_label {
                let f = k as f64 / n as f64;
                assert!((f - 1.0 / 9.0).abs() < 0.01, "class {c}: {f}");
            }
        }
    }

    #[test]
    fn neutral_embedding() {
        let row = embed_neutral(&[0.0; 30], 10).unwrap();
        assert!(row[..10].iter().all(|&v| v == 0.1));
        assert!(row[10..].iter().all(|&v| v == 0.0));
        assert_eq!(embed_neutral(&row, 10).unwrap(), row);
        let img: Vec<f64> = (0..30).map(|i| i as f64).collect();
        assert_eq!(&embed_neutral(&img, 10).unwrap()[10..], &img[10..]);
    }
}

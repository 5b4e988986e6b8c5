use std::fs;
use std::path::Path;

use ffgood::data::formats::{encode_idx_images, encode_idx_labels};
use ffgood::{Matrix, Rng};

/// Noisy 28×28 images where class `c` brightens a 6×6 patch at a
/// class-specific position.
fn blob_images(n: usize, rng: &mut Rng) -> (Matrix, Vec<usize>) {
    let labels: Vec<usize> = (0..n).map(|_| (rng.uniform() * 10.0) as usize % 10).collect();
    let mut images = Matrix::zeros(n, 784);
    for (r, &c) in labels.iter().enumerate() {
        let (y0, x0) = (2 + (c / 5) * 12, 2 + (c % 5) * 5);
        let row = images.row_mut(r);
        for (i, px) in row.iter_mut().enumerate() {
            let (y, x) = (i / 28, i % 28);
            let on = (y0..y0 + 6).contains(&y) && (x0..x0 + 6).contains(&x);
            let v = if on { 0.8 } else { 0.05 } + 0.1 * rng.normal();
            // quantize like a real IDX file
            *px = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }
    (images, labels)
}

/// Writes an MNIST-layout dataset under `root/mnist`.
pub fn write_synthetic_mnist(root: &Path, train: usize, test: usize, seed: u64) {
    let dir = root.join("mnist");
    fs::create_dir_all(&dir).unwrap();
    let mut rng = Rng::new(seed);
    for (prefix, n) in [("train", train), ("t10k", test)] {
        let (images, labels) = blob_images(n, &mut rng);
        fs::write(
            dir.join(format!("{prefix}-images-idx3-ubyte")),
            encode_idx_images(&images, (28, 28)).unwrap(),
        )
        .unwrap();
        fs::write(
            dir.join(format!("{prefix}-labels-idx1-ubyte")),
            encode_idx_labels(&labels),
        )
        .unwrap();
    }
}

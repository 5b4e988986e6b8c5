use crate::error::{Error, Result};
use crate::metering::{self, OpKind};

use super::{dot, l2_norm, Matrix, Rng};

const SYMMETRY_TOL: f64 = 1e-8;

/// Sample covariance over rows (divisor `B - 1`). Exactly symmetric.
pub fn batch_covariance(m: &Matrix) -> Result<Matrix> {
    if m.rows() < 2 {
        return Err(Error::invalid(
            "batch_covariance",
            format!("need at least 2 rows, got {}", m.rows()),
        ));
    }
    let mean = m.column_mean()?;
    let mut centered = m.clone();
    let neg = mean.scale(-1.0);
    centered.add_row_broadcast(&neg)?;
    let mut cov = centered.transposed_matmul(&centered)?;
    let n = cov.cols();
    let inv = 1.0 / (m.rows() - 1) as f64;
    for i in 0..n {
        for j in i..n {
            let v = cov.get(i, j) * inv;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    cov.ensure_finite("batch_covariance")
}

/// Leading eigenvectors (rows) and Rayleigh-quotient eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    pub vectors: Matrix,
    pub values: Vec<f64>,
}

fn check_symmetric(op: &'static str, a: &Matrix) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::Shape {
            op,
            left: a.shape(),
            right: (a.cols(), a.rows()),
        });
    }
    if !a.is_finite() {
        return Err(Error::NonFinite { op });
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::invalid(
            op,
            format!("input not symmetric (max asymmetry {asym:.3e})"),
        ));
    }
    Ok(())
}

fn matvec(a: &Matrix, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(a.row_iter()) {
        *o = dot(row, v);
    }
    metering::tally(OpKind::Iterative, 2 * (a.rows() as u64) * (a.cols() as u64));
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= p * y;
        }
    }
}

/// Unit vector orthogonal to `basis`, taken from the standard basis. Used when
/// the deflated operator has no remaining energy.
fn fallback_direction(n: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        orthogonalize(&mut e, basis);
        orthogonalize(&mut e, basis);
        let norm = l2_norm(&e);
        if norm > 1e-6 {
            e.iter_mut().for_each(|x| *x /= norm);
            return e;
        }
    }
    vec![0.0; n]
}

/// Top-`k` eigenpairs of a symmetric matrix by power iteration with
/// deflation: each new vector is kept orthogonal to those already found.
///
/// The iteration count is fixed so the work done does not depend on the data.
pub fn top_k_components(cov: &Matrix, k: usize, iters: usize) -> Result<Eigenpairs> {
    const OP: &str = "top_k_components";
    check_symmetric(OP, cov)?;
    let n = cov.rows();
    if k > n {
        return Err(Error::invalid(OP, format!("k = {k} exceeds dimension {n}")));
    }
    let mut rng = Rng::new(0x5eed_0f_e16e);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    let mut w = vec![0.0; n];
    for _ in 0..k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        orthogonalize(&mut v, &basis);
        let norm = l2_norm(&v);
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            v = fallback_direction(n, &basis);
        }
        for _ in 0..iters {
            matvec(cov, &v, &mut w);
            orthogonalize(&mut w, &basis);
            let norm = l2_norm(&w);
            if norm <= f64::MIN_POSITIVE {
                v = fallback_direction(n, &basis);
                break;
            }
            for (x, y) in v.iter_mut().zip(&w) {
                *x = y / norm;
            }
        }
        // re-orthonormalize against accumulated rounding
        orthogonalize(&mut v, &basis);
        let norm = l2_norm(&v);
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        matvec(cov, &v, &mut w);
        values.push(dot(&v, &w));
        basis.push(v);
    }
    let vectors = if k == 0 {
        Matrix::zeros(0, n)
    } else {
        Matrix::from_rows(&basis)?
    };
    Ok(Eigenpairs { vectors, values })
}

/// Newton–Schulz iterate of `(cov + shrinkage·I)^(-1/2)`.
///
/// The shifted matrix is scaled by its Frobenius norm so the spectrum sits
/// in (0, 1], where the coupled iteration converges. An indefinite input makes
/// the iterates grow without bound; that is reported as divergence.
pub fn inverse_sqrt_spd(cov: &Matrix, shrinkage: f64, iters: usize) -> Result<Matrix> {
    const OP: &str = "inverse_sqrt_spd";
    check_symmetric(OP, cov)?;
    if !(shrinkage > 0.0) || !shrinkage.is_finite() {
        return Err(Error::invalid(OP, format!("shrinkage must be > 0, got {shrinkage}")));
    }
    let n = cov.rows();
    let mut a = cov.clone();
    for i in 0..n {
        a.set(i, i, a.get(i, i) + shrinkage);
    }
    let scale = a.frobenius_norm();
    if !scale.is_finite() || scale == 0.0 {
        return Err(Error::NonFinite { op: OP });
    }
    let condition = scale / shrinkage;
    let eye = Matrix::identity(n);
    let mut y = a.scale(1.0 / scale);
    let mut z = eye.clone();
    let limit = 1e6 * (n as f64).sqrt().max(1.0);
    for _ in 0..iters {
        let zy = z.matmul(&y).map_err(|_| Error::Diverged { op: OP, condition })?;
        let mut t = eye.scale(1.5);
        t.axpy(-0.5, &zy)?;
        y = y.matmul(&t).map_err(|_| Error::Diverged { op: OP, condition })?;
        z = t.matmul(&z).map_err(|_| Error::Diverged { op: OP, condition })?;
        let growth = y.frobenius_norm().max(z.frobenius_norm());
        if !growth.is_finite() || growth > limit {
            return Err(Error::Diverged { op: OP, condition });
        }
    }
    let s = 1.0 / scale.sqrt();
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            w.set(i, j, 0.5 * (z.get(i, j) + z.get(j, i)) * s);
        }
    }
    w.ensure_finite(OP)
}

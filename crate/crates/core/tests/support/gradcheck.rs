//! Finite-difference oracle for goodness gradients.
//!
//! For row `b` the oracle perturbs only that row and watches only `G_b`; other
//! rows, the partner batch and the running state stay fixed. Attention
//! weights and the box-counting dimension are frozen at the unperturbed row.

use ffgood::goodness::{box_counting_dimension, BatchMode, GoodnessParams, GoodnessResult, GoodnessState, Objective};
use ffgood::tensor::finite_difference_gradient;
use ffgood::{Matrix, Rng};

pub const ROWS: usize = 4;
pub const COLS: usize = 16;
pub const TOL: f64 = 1e-4;

pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    let diff = a.sub(b).unwrap().frobenius_norm();
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn fd_step(obj: Objective) -> f64 {
    match obj.name() {
        // value is 1 − O(ε/‖h‖); small steps drown in cancellation
        "l2_normalized_energy" => 1e-3,
        _ => 1e-5,
    }
}

fn prepared_state(obj: Objective, params: &GoodnessParams, rng: &mut Rng) -> GoodnessState {
    let mut state = GoodnessState::new(COLS, params.ema_decay);
    for _ in 0..3 {
        let warm = rng.normal_matrix(32, COLS, 1.0);
        obj.warm_start(&warm, &mut state, params).unwrap();
        state.observe(&warm, obj.tracks_covariance()).unwrap();
    }
    obj.end_epoch(&mut state, params).unwrap();
    state
}

fn replace_row(m: &Matrix, b: usize, row: &Matrix) -> Matrix {
    let mut out = m.clone();
    out.row_mut(b).copy_from_slice(row.as_slice());
    out
}

/// `G_b` as a function of row `b` alone, under the frozen contract.
pub fn own_row_value(
    obj: Objective,
    params: &GoodnessParams,
    state: &GoodnessState,
    h_pos: &Matrix,
    h_neg: &Matrix,
    positive: bool,
    b: usize,
    row: &Matrix,
) -> f64 {
    let (hp, hn) = if positive {
        (replace_row(h_pos, b, row), h_neg.clone())
    } else {
        (h_pos.clone(), replace_row(h_neg, b, row))
    };
    let own = if positive { h_pos } else { h_neg };
    let mut frozen = state.clone();
    match obj {
        Objective::Batch(BatchMode::AttentionWeighted) => {
            let base = own.row(b);
            let top = base.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x * x));
            let w: Vec<f64> = base.iter().map(|x| (x * x - top).exp()).collect();
            let z: f64 = w.iter().sum();
            row.as_slice().iter().zip(&w).map(|(x, wi)| wi / z * x * x).sum()
        }
        Objective::Batch(BatchMode::FractalDimension) => {
            let v = obj
                .evaluate(&replace_row(own, b, row), &mut frozen, params, false)
                .unwrap();
            v.values.get(b, 0) - params.fractal_weight * box_counting_dimension(row.as_slice())
                + params.fractal_weight * box_counting_dimension(own.row(b))
        }
        Objective::Contrastive(_) => {
            let (p, n) = obj.evaluate_pair(&hp, &hn, &mut frozen, params, false).unwrap();
            if positive {
                p.values.get(b, 0)
            } else {
                n.values.get(b, 0)
            }
        }
        _ => {
            let h = if positive { hp } else { hn };
            obj.evaluate(&h, &mut frozen, params, false).unwrap().values.get(b, 0)
        }
    }
}

pub fn check(obj: Objective, seed: u64) -> f64 {
    let params = GoodnessParams::default();
    let mut rng = Rng::new(seed);
    let state = prepared_state(obj, &params, &mut rng);
    let h_pos = rng.normal_matrix(ROWS, COLS, 1.0);
    let h_neg = rng.normal_matrix(ROWS, COLS, 1.0);
    let mut scratch = state.clone();
    let (pos, neg): (GoodnessResult, GoodnessResult) =
        obj.evaluate_pair(&h_pos, &h_neg, &mut scratch, &params, false).unwrap();
    let mut worst: f64 = 0.0;
    for (positive, result, h) in [(true, &pos, &h_pos), (false, &neg, &h_neg)] {
        let mut fd = Matrix::zeros(ROWS, COLS);
        for b in 0..ROWS {
            let at = h.row_matrix(b);
            let g = finite_difference_gradient(
                |row| Ok(own_row_value(obj, &params, &state, &h_pos, &h_neg, positive, b, row)),
                &at,
                fd_step(obj),
            )
            .unwrap();
            fd.row_mut(b).copy_from_slice(g.as_slice());
        }
        worst = worst.max(relative_error(&result.grad, &fd));
    }
    worst
}

//! Finite-difference verification for every layer primitive.
//!
//! Each check builds a scalar objective L = sum(c ⊙ output) with fixed
//! random coefficients, computes analytic input/parameter gradients through
//! the layer's backward pass, and compares against central differences with
//! h = 1e-5 at relative tolerance 1e-4.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2D {
    Tensor2D {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect(),
    }
}

fn weighted_sum(out: &Tensor2D, coeffs: &Tensor2D) -> f64 {
    out.data.iter().zip(&coeffs.data).map(|(&a, &b)| a * b).sum()
}

/// Central-difference comparison of `analytic` against the objective's
/// sensitivity to each entry of `x`.
fn assert_grad_matches(
    mut objective: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    label: &str,
) {
    let mut buf = x.to_vec();
    for i in 0..x.len() {
        buf[i] = x[i] + H;
        let up = objective(&buf);
        buf[i] = x[i] - H;
        let down = objective(&buf);
        buf[i] = x[i];
        let numeric = (up - down) / (2.0 * H);
        let denom = analytic[i].abs().max(numeric.abs());
        if denom < 1e-9 {
            continue;
        }
        let rel = (analytic[i] - numeric).abs() / denom;
        assert!(
            rel < TOL,
            "{label}[{i}]: analytic {} vs numeric {numeric} (rel {rel:.2e})",
            analytic[i]
        );
    }
}

#[test]
fn affine_gradients() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k, n) = (rng.gen_range(1..5), rng.gen_range(1..6), rng.gen_range(1..5));
        let x = rand_tensor(&mut rng, m, k);
        let w = rand_tensor(&mut rng, k, n);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs = rand_tensor(&mut rng, m, n);

        let (dx, dw, db) = affine_backward(&x, &w, &coeffs).unwrap();
        assert_grad_matches(
            |xd| {
                let xt = Tensor2D::from_vec(m, k, xd.to_vec()).unwrap();
                weighted_sum(&affine_forward(&xt, &w, &b, "t").unwrap(), &coeffs)
            },
            &x.data,
            &dx.data,
            "affine dx",
        );
        assert_grad_matches(
            |wd| {
                let wt = Tensor2D::from_vec(k, n, wd.to_vec()).unwrap();
                weighted_sum(&affine_forward(&x, &wt, &b, "t").unwrap(), &coeffs)
            },
            &w.data,
            &dw.data,
            "affine dw",
        );
        assert_grad_matches(
            |bd| weighted_sum(&affine_forward(&x, &w, bd, "t").unwrap(), &coeffs),
            &b,
            &db,
            "affine db",
        );
    }
}

#[test]
fn elu_gradients() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (m, n) = (rng.gen_range(1..6), rng.gen_range(1..8));
        let x = rand_tensor(&mut rng, m, n);
        let coeffs = rand_tensor(&mut rng, m, n);
        let y = elu_forward(&x);
        let dx = elu_backward(&y, &coeffs);
        assert_grad_matches(
            |xd| {
                let xt = Tensor2D::from_vec(m, n, xd.to_vec()).unwrap();
                weighted_sum(&elu_forward(&xt), &coeffs)
            },
            &x.data,
            &dx.data,
            "elu dx",
        );
    }
}

#[test]
fn sigmoid_gradients() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (m, n) = (rng.gen_range(1..6), rng.gen_range(1..8));
        let x = rand_tensor(&mut rng, m, n);
        let coeffs = rand_tensor(&mut rng, m, n);
        let y = sigmoid_forward(&x);
        let dx = sigmoid_backward(&y, &coeffs);
        assert_grad_matches(
            |xd| {
                let xt = Tensor2D::from_vec(m, n, xd.to_vec()).unwrap();
                weighted_sum(&sigmoid_forward(&xt), &coeffs)
            },
            &x.data,
            &dx.data,
            "sigmoid dx",
        );
    }
}

#[test]
fn softmax_gradients() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let (m, n) = (rng.gen_range(1..5), rng.gen_range(2..7));
        let x = rand_tensor(&mut rng, m, n);
        let coeffs = rand_tensor(&mut rng, m, n);
        let y = softmax_rows_forward(&x);
        let dx = softmax_rows_backward(&y, &coeffs);
        assert_grad_matches(
            |xd| {
                let xt = Tensor2D::from_vec(m, n, xd.to_vec()).unwrap();
                weighted_sum(&softmax_rows_forward(&xt), &coeffs)
            },
            &x.data,
            &dx.data,
            "softmax dx",
        );
    }
}

#[test]
fn embedding_gradients_match_one_hot_matmul() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let (rows, dim, batch) = (rng.gen_range(2..6), rng.gen_range(1..5), rng.gen_range(1..8));
        let table = rand_tensor(&mut rng, rows, dim);
        let ids: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..rows)).collect();
        let coeffs = rand_tensor(&mut rng, batch, dim);

        let mut grad = Tensor2D::zeros(rows, dim);
        embedding_backward(&mut grad, &ids, &coeffs);

        // Oracle: lookup as one-hot matmul, so d_table = one_hotᵀ . coeffs.
        let mut one_hot = Tensor2D::zeros(batch, rows);
        for (r, &id) in ids.iter().enumerate() {
            one_hot.set(r, id, 1.0);
        }
        let oracle = one_hot.matmul_transpose_self(&coeffs).unwrap();
        for (a, b) in grad.data.iter().zip(&oracle.data) {
            assert!((a - b).abs() < 1e-12);
        }

        assert_grad_matches(
            |td| {
                let tt = Tensor2D::from_vec(rows, dim, td.to_vec()).unwrap();
                weighted_sum(&embedding_forward(&tt, &ids, "t").unwrap(), &coeffs)
            },
            &table.data,
            &grad.data,
            "embedding d_table",
        );
    }
}

#[test]
fn elementwise_mul_gradients() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let (m, n) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let a = rand_tensor(&mut rng, m, n);
        let b = rand_tensor(&mut rng, m, n);
        let coeffs = rand_tensor(&mut rng, m, n);
        let (da, db) = mul_backward(&a, &b, &coeffs);
        assert_grad_matches(
            |ad| {
                let at = Tensor2D::from_vec(m, n, ad.to_vec()).unwrap();
                weighted_sum(&mul_forward(&at, &b).unwrap(), &coeffs)
            },
            &a.data,
            &da.data,
            "mul da",
        );
        assert_grad_matches(
            |bd| {
                let bt = Tensor2D::from_vec(m, n, bd.to_vec()).unwrap();
                weighted_sum(&mul_forward(&a, &bt).unwrap(), &coeffs)
            },
            &b.data,
            &db.data,
            "mul db",
        );
    }
}

#[test]
fn concat_split_gradients() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let m = rng.gen_range(1..5);
        let w1 = rng.gen_range(1..4);
        let w2 = rng.gen_range(1..4);
        let a = rand_tensor(&mut rng, m, w1);
        let b = rand_tensor(&mut rng, m, w2);
        let coeffs = rand_tensor(&mut rng, m, w1 + w2);
        let parts = split_cols(&coeffs, &[w1, w2]).unwrap();
        assert_grad_matches(
            |ad| {
                let at = Tensor2D::from_vec(m, w1, ad.to_vec()).unwrap();
                weighted_sum(&concat_cols(&[&at, &b]).unwrap(), &coeffs)
            },
            &a.data,
            &parts[0].data,
            "concat da",
        );
        assert_grad_matches(
            |bd| {
                let bt = Tensor2D::from_vec(m, w2, bd.to_vec()).unwrap();
                weighted_sum(&concat_cols(&[&a, &bt]).unwrap(), &coeffs)
            },
            &b.data,
            &parts[1].data,
            "concat db",
        );
    }
}

#[test]
fn reduce_mean_per_field_gradients() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let (m, fields, dim) = (rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..5));
        let x = rand_tensor(&mut rng, m, fields * dim);
        let coeffs = rand_tensor(&mut rng, m, fields);
        let dx = reduce_mean_per_field_backward(&coeffs, dim);
        assert_grad_matches(
            |xd| {
                let xt = Tensor2D::from_vec(m, fields * dim, xd.to_vec()).unwrap();
                weighted_sum(&reduce_mean_per_field_forward(&xt, dim).unwrap(), &coeffs)
            },
            &x.data,
            &dx.data,
            "reduce_mean dx",
        );
    }
}

#[test]
fn every_layer_kind_is_covered() {
    // Keep the enum and this suite in sync.
    assert_eq!(LayerKind::ALL.len(), 8);
}

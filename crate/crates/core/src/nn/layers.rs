//! Layer primitives with exact analytic backward passes.
//!
//! Conventions: batches are row-major `(batch, features)`; affine weights
//! are `(in, out)` so `y = x . W + b`; backward passes take the upstream
//! gradient with respect to their output and return gradients with respect
//! to inputs and parameters. Loss-side `1/batch` factors live in the loss
//! gradients, never here.

use std::fmt;

use super::tensor::Tensor2D;
use crate::error::{Error, Result};

/// The layer vocabulary of the kernel, used in error messages and by the
/// gradient-check suite to enumerate what must pass finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Affine,
    Elu,
    Sigmoid,
    Softmax,
    EmbeddingLookup,
    ElementwiseMul,
    Concat,
    ReduceMeanPerField,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Affine,
        LayerKind::Elu,
        LayerKind::Sigmoid,
        LayerKind::Softmax,
        LayerKind::EmbeddingLookup,
        LayerKind::ElementwiseMul,
        LayerKind::Concat,
        LayerKind::ReduceMeanPerField,
    ];
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            LayerKind::Affine => "affine",
            LayerKind::Elu => "elu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Softmax => "softmax",
            LayerKind::EmbeddingLookup => "embedding_lookup",
            LayerKind::ElementwiseMul => "elementwise_mul",
            LayerKind::Concat => "concat",
            LayerKind::ReduceMeanPerField => "reduce_mean_per_field",
        };
        f.write_str(name)
    }
}

/// `y = x . W + b`, bias broadcast over rows.
pub fn affine_forward(x: &Tensor2D, w: &Tensor2D, b: &[f64], layer: &str) -> Result<Tensor2D> {
    if b.len() != w.cols {
        return Err(Error::contract(format!(
            "{layer}: bias length {} vs {} outputs",
            b.len(),
            w.cols
        )));
    }
    let mut y = x.matmul(w)?;
    for r in 0..y.rows {
        for (slot, &bias) in y.row_mut(r).iter_mut().zip(b) {
            *slot += bias;
        }
    }
    y.ensure_finite(layer)?;
    Ok(y)
}

/// Returns (dx, dw, db) for the affine layer.
pub fn affine_backward(
    x: &Tensor2D,
    w: &Tensor2D,
    grad_y: &Tensor2D,
) -> Result<(Tensor2D, Tensor2D, Vec<f64>)> {
    let dx = grad_y.matmul_transpose_other(w)?;
    let dw = x.matmul_transpose_self(grad_y)?;
    let mut db = vec![0.0; w.cols];
    for r in 0..grad_y.rows {
        for (slot, &g) in db.iter_mut().zip(grad_y.row(r)) {
            *slot += g;
        }
    }
    Ok((dx, dw, db))
}

/// ELU with alpha = 1: x for x > 0, exp(x) - 1 otherwise.
pub fn elu_forward(x: &Tensor2D) -> Tensor2D {
    x.map(|v| if v > 0.0 { v } else { v.exp() - 1.0 })
}

/// Backward from the cached output: for x > 0 the slope is 1, otherwise
/// exp(x) = y + 1. Both branches meet at 1 for x = 0.
pub fn elu_backward(y: &Tensor2D, grad_y: &Tensor2D) -> Tensor2D {
    debug_assert_eq!(y.data.len(), grad_y.data.len());
    let mut out = grad_y.clone();
    for (g, &yv) in out.data.iter_mut().zip(&y.data) {
        if yv <= 0.0 {
            *g *= yv + 1.0;
        }
    }
    out
}

pub fn sigmoid_forward(x: &Tensor2D) -> Tensor2D {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Backward from the cached output: sigma' = y (1 - y).
pub fn sigmoid_backward(y: &Tensor2D, grad_y: &Tensor2D) -> Tensor2D {
    let mut out = grad_y.clone();
    for (g, &yv) in out.data.iter_mut().zip(&y.data) {
        *g *= yv * (1.0 - yv);
    }
    out
}

/// Row-wise softmax with max subtraction for stability.
pub fn softmax_rows_forward(x: &Tensor2D) -> Tensor2D {
    let mut y = x.clone();
    for r in 0..y.rows {
        let row = y.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    y
}

/// dx = y * (dy - sum(dy * y)) row-wise.
pub fn softmax_rows_backward(y: &Tensor2D, grad_y: &Tensor2D) -> Tensor2D {
    let mut out = Tensor2D::zeros(y.rows, y.cols);
    for r in 0..y.rows {
        let yr = y.row(r);
        let gr = grad_y.row(r);
        let dot: f64 = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for (slot, (&yv, &gv)) in out.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
            *slot = yv * (gv - dot);
        }
    }
    out
}

/// Gathers `table` rows by id into a `(batch, dim)` matrix.
pub fn embedding_forward(table: &Tensor2D, ids: &[usize], layer: &str) -> Result<Tensor2D> {
    let mut out = Tensor2D::zeros(ids.len(), table.cols);
    for (r, &id) in ids.iter().enumerate() {
        if id >= table.rows {
            return Err(Error::contract(format!(
                "{layer}: bucket id {id} out of table range {}",
                table.rows
            )));
        }
        out.row_mut(r).copy_from_slice(table.row(id));
    }
    Ok(out)
}

/// Scatters upstream rows back onto the looked-up table rows; rows never
/// looked up receive zero gradient.
pub fn embedding_backward(grad_table: &mut Tensor2D, ids: &[usize], grad_out: &Tensor2D) {
    debug_assert_eq!(ids.len(), grad_out.rows);
    debug_assert_eq!(grad_table.cols, grad_out.cols);
    for (r, &id) in ids.iter().enumerate() {
        for (slot, &g) in grad_table.row_mut(id).iter_mut().zip(grad_out.row(r)) {
            *slot += g;
        }
    }
}

/// c = a ⊙ b.
pub fn mul_forward(a: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::contract(format!(
            "elementwise_mul: {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = a.clone();
    for (slot, &bv) in out.data.iter_mut().zip(&b.data) {
        *slot *= bv;
    }
    Ok(out)
}

/// Returns (da, db) = (dc ⊙ b, dc ⊙ a).
pub fn mul_backward(a: &Tensor2D, b: &Tensor2D, grad_c: &Tensor2D) -> (Tensor2D, Tensor2D) {
    let mut da = grad_c.clone();
    for (slot, &bv) in da.data.iter_mut().zip(&b.data) {
        *slot *= bv;
    }
    let mut db = grad_c.clone();
    for (slot, &av) in db.data.iter_mut().zip(&a.data) {
        *slot *= av;
    }
    (da, db)
}

/// Column-wise concatenation of same-height matrices.
pub fn concat_cols(parts: &[&Tensor2D]) -> Result<Tensor2D> {
    let rows = parts.first().map_or(0, |p| p.rows);
    if parts.iter().any(|p| p.rows != rows) {
        return Err(Error::contract("concat: row counts differ"));
    }
    let cols: usize = parts.iter().map(|p| p.cols).sum();
    let mut out = Tensor2D::zeros(rows, cols);
    for r in 0..rows {
        let mut offset = 0;
        for p in parts {
            out.row_mut(r)[offset..offset + p.cols].copy_from_slice(p.row(r));
            offset += p.cols;
        }
    }
    Ok(out)
}

/// Splits a gradient back into the concatenated parts (backward of concat).
pub fn split_cols(grad: &Tensor2D, widths: &[usize]) -> Result<Vec<Tensor2D>> {
    if widths.iter().sum::<usize>() != grad.cols {
        return Err(Error::contract("split: widths do not sum to column count"));
    }
    let mut parts: Vec<Tensor2D> = widths.iter().map(|&w| Tensor2D::zeros(grad.rows, w)).collect();
    for r in 0..grad.rows {
        let mut offset = 0;
        for p in parts.iter_mut() {
            let w = p.cols;
            p.row_mut(r).copy_from_slice(&grad.row(r)[offset..offset + w]);
            offset += w;
        }
    }
    Ok(parts)
}

/// Mean over each field's contiguous block of `dim` columns:
/// `(batch, fields*dim)` -> `(batch, fields)`.
pub fn reduce_mean_per_field_forward(x: &Tensor2D, dim: usize) -> Result<Tensor2D> {
    if dim == 0 || x.cols % dim != 0 {
        return Err(Error::contract(format!(
            "reduce_mean_per_field: {} columns not divisible by field dim {dim}",
            x.cols
        )));
    }
    let fields = x.cols / dim;
    let mut out = Tensor2D::zeros(x.rows, fields);
    for r in 0..x.rows {
        let row = x.row(r);
        for f in 0..fields {
            let s: f64 = row[f * dim..(f + 1) * dim].iter().sum();
            out.set(r, f, s / dim as f64);
        }
    }
    Ok(out)
}

/// Broadcasts the field gradient back over each field's block, divided by
/// the block width.
pub fn reduce_mean_per_field_backward(grad_out: &Tensor2D, dim: usize) -> Tensor2D {
    let mut out = Tensor2D::zeros(grad_out.rows, grad_out.cols * dim);
    for r in 0..grad_out.rows {
        for f in 0..grad_out.cols {
            let g = grad_out.get(r, f) / dim as f64;
            for slot in &mut out.row_mut(r)[f * dim..(f + 1) * dim] {
                *slot = g;
            }
        }
    }
    out
}

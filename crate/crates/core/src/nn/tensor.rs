//! Row-major 2-D f64 matrix with the handful of operations the kernel needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2D {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Tensor2D {
        Tensor2D {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor2D> {
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "tensor data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Tensor2D { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2D {
        Tensor2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Errors with the offending layer name if any entry is NaN/Inf.
    pub fn ensure_finite(&self, layer: &str) -> Result<()> {
        for (i, &x) in self.data.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::numeric(
                    layer,
                    format!("entry ({},{}) = {x}", i / self.cols, i % self.cols),
                ));
            }
        }
        Ok(())
    }

    fn check_inner(a: &Tensor2D, b: &Tensor2D, a_cols: usize, b_rows: usize, op: &str) -> Result<()> {
        if a_cols != b_rows {
            return Err(Error::contract(format!(
                "{op}: inner dimensions {}x{} . {}x{} do not compose",
                a.rows, a.cols, b.rows, b.cols
            )));
        }
        Ok(())
    }

    /// `self (m,k) . other (k,n)`.
    pub fn matmul(&self, other: &Tensor2D) -> Result<Tensor2D> {
        Self::check_inner(self, other, self.cols, other.rows, "matmul")?;
        let mut out = Tensor2D::zeros(self.rows, other.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                other.cols,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
        Ok(out)
    }

    /// `selfᵀ (k,m)ᵀ . other (k,n)` -> (m, n). Used for weight gradients.
    pub fn matmul_transpose_self(&self, other: &Tensor2D) -> Result<Tensor2D> {
        Self::check_inner(self, other, self.rows, other.rows, "matmul_transpose_self")?;
        let mut out = Tensor2D::zeros(self.cols, other.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.cols,
                self.rows,
                other.cols,
                1.0,
                self.data.as_ptr(),
                1,
                self.cols as isize,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
        Ok(out)
    }

    /// `self (m,k) . otherᵀ (n,k)ᵀ` -> (m, n). Used for input gradients.
    pub fn matmul_transpose_other(&self, other: &Tensor2D) -> Result<Tensor2D> {
        Self::check_inner(self, other, self.cols, other.cols, "matmul_transpose_other")?;
        let mut out = Tensor2D::zeros(self.rows, other.rows);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                other.rows,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                1,
                other.cols as isize,
                0.0,
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
        Ok(out)
    }
}

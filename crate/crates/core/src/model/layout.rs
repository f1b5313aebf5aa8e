//! Flat parameter vector with a named block table.
//!
//! All model parameters live in one `Vec<f64>`; the layout maps block names
//! to (offset, rows, cols). This keeps the optimizer a single loop, makes
//! checkpoint serialization explicit, and lets tests perturb or copy
//! individual blocks by name.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamLayout {
    pub blocks: Vec<ParamBlock>,
    pub total: usize,
}

impl ParamLayout {
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate block {name}");
        self.blocks.push(ParamBlock {
            name,
            rows,
            cols,
            offset: self.total,
        });
        self.total += rows * cols;
    }

    pub fn find(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn block(&self, name: &str) -> Result<&ParamBlock> {
        self.find(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter block {name:?}")))
    }

    pub fn slice<'a>(&self, params: &'a [f64], name: &str) -> Result<&'a [f64]> {
        Ok(&params[self.block(name)?.range()])
    }

    pub fn slice_mut<'a>(&self, params: &'a mut [f64], name: &str) -> Result<&'a mut [f64]> {
        Ok(&mut params[self.block(name)?.range()])
    }

    /// Copies a block out as a matrix. Blocks are small relative to the
    /// batch matmuls they feed, so the copy is noise.
    pub fn tensor(&self, params: &[f64], name: &str) -> Result<Tensor2D> {
        let b = self.block(name)?;
        Tensor2D::from_vec(b.rows, b.cols, params[b.range()].to_vec())
    }

    /// Accumulates a gradient contribution into the named block.
    pub fn accumulate(&self, grads: &mut [f64], name: &str, contribution: &[f64]) -> Result<()> {
        let b = self.block(name)?;
        if contribution.len() != b.len() {
            return Err(Error::contract(format!(
                "gradient for {name:?} has {} entries, block has {}",
                contribution.len(),
                b.len()
            )));
        }
        for (g, &c) in grads[b.range()].iter_mut().zip(contribution) {
            *g += c;
        }
        Ok(())
    }
}

//! Flat parameter vectors with a named block layout.
//!
//! Models expose their trainable state as a single flat `Vec<f64>` plus a
//! layout describing named blocks (weight matrices, bias rows, …). The flat
//! form is what optimizers update and what the companion crate serializes;
//! the layout is what the tape uses to hand each block to the model as a
//! matrix of the right shape.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::Tensor;

/// One named block inside a [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Offset of the block's first element in the flat data vector.
    pub offset: usize,
}

impl BlockSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A flat `f64` vector carved into named, shaped blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    blocks: Vec<BlockSpec>,
    data: Vec<f64>,
}

impl ParamVector {
    /// An empty vector with no blocks (used by parameter-free models).
    pub fn empty() -> Self {
        ParamVector {
            blocks: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Builds a zero-filled vector from `(name, rows, cols)` block shapes.
    pub fn zeros_from_shapes(shapes: &[(String, usize, usize)]) -> Self {
        let mut blocks = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for (name, rows, cols) in shapes {
            blocks.push(BlockSpec {
                name: name.clone(),
                rows: *rows,
                cols: *cols,
                offset,
            });
            offset += rows * cols;
        }
        ParamVector {
            blocks,
            data: vec![0.0; offset],
        }
    }

    /// Reassembles a vector from a layout and flat data.
    /// Panics if the data length does not match the layout.
    pub fn from_parts(blocks: Vec<BlockSpec>, data: Vec<f64>) -> Self {
        let expect = blocks.iter().map(BlockSpec::len).sum::<usize>();
        assert_eq!(
            data.len(),
            expect,
            "ParamVector::from_parts: layout wants {expect} values, got {}",
            data.len()
        );
        ParamVector { blocks, data }
    }

    /// A zero vector with the same layout as `self`.
    pub fn zeros_like(&self) -> Self {
        ParamVector {
            blocks: self.blocks.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Block `i` copied out as a shaped matrix.
    pub fn block_tensor(&self, i: usize) -> Tensor {
        let b = &self.blocks[i];
        Tensor::from_vec(b.rows, b.cols, self.data[b.offset..b.offset + b.len()].to_vec())
    }

    /// Block `i` as a flat slice.
    pub fn block_slice(&self, i: usize) -> &[f64] {
        let b = &self.blocks[i];
        &self.data[b.offset..b.offset + b.len()]
    }

    /// Block `i` as a mutable flat slice.
    pub fn block_slice_mut(&mut self, i: usize) -> &mut [f64] {
        let b = self.blocks[i].clone();
        &mut self.data[b.offset..b.offset + b.len()]
    }

    /// Index of the block with the given name, if any.
    pub fn find_block(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    /// Overwrites block `i` from a shaped matrix. Panics on shape mismatch.
    pub fn set_block(&mut self, i: usize, t: &Tensor) {
        let b = &self.blocks[i];
        assert_eq!(
            (b.rows, b.cols),
            t.shape(),
            "set_block `{}`: shape mismatch",
            b.name
        );
        let (off, len) = (b.offset, b.len());
        self.data[off..off + len].copy_from_slice(t.data());
    }

    /// True if `other` has the identical block layout.
    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.blocks == other.blocks
    }

    /// `self += alpha * other`. Panics if layouts differ.
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) {
        assert!(self.same_layout(other), "ParamVector::axpy: layout mismatch");
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        math::l2_norm(&self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn sample() -> ParamVector {
        ParamVector::zeros_from_shapes(&[
            ("w0".to_string(), 2, 3),
            ("b0".to_string(), 1, 2),
        ])
    }

    #[test]
    fn layout_offsets_are_contiguous() {
        let p = sample();
        assert_eq!(p.len(), 8);
        assert_eq!(p.blocks()[0].offset, 0);
        assert_eq!(p.blocks()[1].offset, 6);
        assert_eq!(p.find_block("b0"), Some(1));
        assert_eq!(p.find_block("nope"), None);
    }

    #[test]
    fn set_block_round_trips() {
        let mut p = sample();
        let w = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        p.set_block(0, &w);
        assert_eq!(p.block_tensor(0), w);
        assert_eq!(p.block_slice(1), &[0.0, 0.0]);
    }
}

//! Online protocols. Every protocol is a method on [`Party`] that runs in
//! lock-step with the other two parties and is vectorized over its inputs.
//!
//! [`Party`]: crate::party::Party

mod compare;
mod linear;
mod maxpool;
mod numeric;
mod relu;
mod trunc;

pub use compare::pc_rounds;
pub use linear::{col2im_indices, conv_out_dim, im2col_indices, transpose, ConvGeom};
pub use numeric::{BnCache, BN_EPSILON};
pub use relu::WrapParts;

use crate::error::{Error, Result};
use crate::rss::Shares;

/// A share vector with a row-major shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapedShares {
    pub shares: Shares,
    pub shape: Vec<usize>,
}

impl ShapedShares {
    pub fn new(shares: Shares, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != shares.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                shares.len()
            )));
        }
        Ok(ShapedShares { shares, shape })
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        ShapedShares::new(self.shares, shape)
    }

    /// Rows and columns of a matrix-shaped value.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Shape(format!("expected a matrix, got {:?}", self.shape))),
        }
    }
}

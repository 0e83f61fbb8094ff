//! Convolutional networks with explicit backward passes.

pub mod block;
pub mod checkpoint;
pub mod conv;
pub mod discriminator;
pub mod freeze;
pub mod generator;
pub mod optim;
pub mod tensor;

use sha2::{Digest, Sha256};

use crate::scalar::Real;
use block::{BlockCache, ConvBlock};

/// Gradients laid out like the parameters: block, tensor, element.
pub type Grads<T> = Vec<Vec<Vec<T>>>;
pub type BlockCaches<T> = Vec<BlockCache<T>>;

/// A network stored as an ordered list of parameter blocks.
pub trait Network<T: Real> {
    fn blocks(&self) -> &[ConvBlock<T>];
    fn blocks_mut(&mut self) -> &mut [ConvBlock<T>];

    fn param_count(&self) -> usize {
        self.blocks().iter().map(ConvBlock::param_count).sum()
    }

    fn zero_grads(&self) -> Grads<T> {
        self.blocks().iter().map(ConvBlock::zero_grads).collect()
    }

    /// SHA-256 over all parameters, little-endian, in block order.
    fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        for block in self.blocks() {
            for tensor in &block.params {
                buf.clear();
                tensor.iter().for_each(|v| v.write_le(&mut buf));
                hasher.update(&buf);
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Checksum of a single block's parameters.
    fn block_checksum(&self, index: usize) -> String {
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        for tensor in &self.blocks()[index].params {
            tensor.iter().for_each(|v| v.write_le(&mut buf));
        }
        hasher.update(&buf);
        hex::encode(hasher.finalize())
    }

    fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.params.iter().flatten().all(|v| v.is_finite()))
    }
}

pub(crate) fn scale_grads<T: Real>(grads: &mut Grads<T>, factor: T) {
    grads.iter_mut().flatten().flatten().for_each(|g| *g *= factor);
}

//! PatchGAN critic: stride-2 conv stages followed by a pointwise head that
//! emits one logit per receptive-field patch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::block::{init_block, Activation, BlockKind, BlockSpec, ConvBlock, NormKind};
use super::conv::ConvGeometry;
use super::tensor::Tensor;
use super::{BlockCaches, Grads, Network};
use crate::error::{Error, Result};
use crate::image::{Image, Plane};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub num_layers: usize,
    pub base_channels: usize,
    pub channel_cap: usize,
    pub norm: NormKind,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig { num_layers: 3, base_channels: 64, channel_cap: 512, norm: NormKind::Instance }
    }
}

impl DiscriminatorConfig {
    pub fn divisor(&self) -> usize {
        1usize << self.num_layers
    }

    pub fn block_specs(&self) -> Vec<BlockSpec> {
        let g = ConvGeometry::DOWN;
        let norm = self.norm == NormKind::Instance;
        let mut specs = Vec::with_capacity(self.num_layers + 1);
        let mut cin = 1;
        for layer in 1..=self.num_layers {
            let cout = (self.base_channels << (layer - 1)).min(self.channel_cap.max(self.base_channels));
            specs.push(BlockSpec {
                name: format!("stage{layer}"),
                kind: BlockKind::Down,
                in_channels: cin,
                out_channels: cout,
                kernel: g.kernel,
                stride: g.stride,
                padding: g.padding,
                norm,
                bias: !norm,
                activation: Activation::LeakyRelu,
            });
            cin = cout;
        }
        let p = ConvGeometry::POINTWISE;
        specs.push(BlockSpec {
            name: "head".into(),
            kind: BlockKind::Down,
            in_channels: cin,
            out_channels: 1,
            kernel: p.kernel,
            stride: p.stride,
            padding: p.padding,
            norm: false,
            bias: true,
            activation: Activation::Identity,
        });
        specs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorModel<T> {
    config: DiscriminatorConfig,
    blocks: Vec<ConvBlock<T>>,
}

impl<T: Real> DiscriminatorModel<T> {
    pub fn new<R: Rng + ?Sized>(config: DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let blocks = config.block_specs().into_iter().map(|s| init_block(s, 0.02, rng)).collect();
        Ok(DiscriminatorModel { config, blocks })
    }

    pub fn constant(config: DiscriminatorConfig, value: T) -> Result<Self> {
        config.validate()?;
        let blocks = config
            .block_specs()
            .into_iter()
            .map(|spec| {
                let params = spec.param_lens().into_iter().map(|l| vec![value; l]).collect();
                ConvBlock::from_spec(spec, params)
            })
            .collect();
        Ok(DiscriminatorModel { config, blocks })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let divisor = self.config.divisor();
        if x.channels != 1 {
            return Err(Error::Shape(format!("discriminator expects 1 channel, got {}", x.channels)));
        }
        if x.height % divisor != 0 || x.width % divisor != 0 || x.height == 0 || x.width == 0 {
            return Err(Error::Divisibility {
                height: x.height,
                width: x.width,
                divisor,
                what: "discriminator",
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(x)?.0)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BlockCaches<T>)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for block in &self.blocks {
            let (out, cache) = block.forward(&h);
            caches.push(cache);
            h = out;
        }
        Ok((h, caches))
    }

    /// Returns the gradient with respect to the critic input. Parameter
    /// gradients are accumulated only when `grads` is given.
    pub fn backward(&self, caches: BlockCaches<T>, dout: Tensor<T>, mut grads: Option<&mut Grads<T>>) -> Tensor<T> {
        let mut g = dout;
        for (i, cache) in caches.iter().enumerate().rev() {
            let slot = grads.as_deref_mut().map(|gr| &mut gr[i]);
            g = self.blocks[i].backward(cache, g, slot, true).expect("input gradient requested");
        }
        g
    }
}

impl DiscriminatorConfig {
    fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.base_channels == 0 || self.channel_cap == 0 {
            return Err(Error::Config("discriminator layers and channels must be positive".into()));
        }
        Ok(())
    }
}

impl<T: Real> Network<T> for DiscriminatorModel<T> {
    fn blocks(&self) -> &[ConvBlock<T>] {
        &self.blocks
    }

    fn blocks_mut(&mut self) -> &mut [ConvBlock<T>] {
        &mut self.blocks
    }
}

/// Patch logits for one image.
pub fn discriminator_forward<T: Real>(model: &DiscriminatorModel<T>, y: &Image<T>) -> Result<Plane<T>> {
    let t = Tensor::from_vec(1, y.height(), y.width(), y.data().to_vec());
    let out = model.forward(&t)?;
    Ok(Plane { height: out.height, width: out.width, data: out.data })
}

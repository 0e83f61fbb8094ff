//! U-Net translator: `depth` strided-conv encoder blocks, `depth`
//! transposed-conv decoder blocks, skip connections between mirrored levels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::block::{init_block, Activation, BlockKind, BlockSpec, ConvBlock, NormKind};
use super::conv::ConvGeometry;
use super::tensor::Tensor;
use super::{BlockCaches, Grads, Network};
use crate::error::{Error, Result};
use crate::image::{Domain, Image};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub depth: usize,
    pub base_channels: usize,
    pub channel_cap: usize,
    pub norm: NormKind,
    /// Normalize the outermost encoder block too. When off, that block
    /// carries a bias and sees absolute input intensities.
    pub input_norm: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { depth: 8, base_channels: 64, channel_cap: 512, norm: NormKind::Instance, input_norm: true }
    }
}

impl GeneratorConfig {
    pub fn new(depth: usize, base_channels: usize, norm: NormKind) -> Self {
        GeneratorConfig { depth, base_channels, norm, ..Default::default() }
    }

    /// Channels produced by encoder level `level` (1-based).
    pub fn level_channels(&self, level: usize) -> usize {
        let doubled = self.base_channels.saturating_mul(1usize << (level - 1).min(40));
        doubled.min(self.channel_cap.max(self.base_channels))
    }

    pub fn divisor(&self) -> usize {
        1usize << self.depth
    }

    fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 16 {
            return Err(Error::Config(format!("generator depth must be in 1..=16, got {}", self.depth)));
        }
        if self.base_channels == 0 || self.channel_cap == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Block layouts in forward order: encoder shallow to deep, then decoder
    /// deep to shallow.
    pub fn block_specs(&self) -> Vec<BlockSpec> {
        let d = self.depth;
        let norm = self.norm == NormKind::Instance;
        let g = ConvGeometry::DOWN;
        let mut specs = Vec::with_capacity(2 * d);
        for level in 1..=d {
            let cin = if level == 1 { 1 } else { self.level_channels(level - 1) };
            let norm = norm && (level > 1 || self.input_norm);
            specs.push(BlockSpec {
                name: format!("enc{level}"),
                kind: BlockKind::Down,
                in_channels: cin,
                out_channels: self.level_channels(level),
                kernel: g.kernel,
                stride: g.stride,
                padding: g.padding,
                norm,
                bias: !norm,
                activation: Activation::LeakyRelu,
            });
        }
        // Decoder block j restores encoder level d - j; from the second block
        // on its input is [previous decoder output, skip from level d - j + 1].
        for j in 1..=d {
            let cin = if j == 1 {
                self.level_channels(d)
            } else {
                2 * self.level_channels(d - j + 1)
            };
            let last = j == d;
            specs.push(BlockSpec {
                name: format!("dec{}", d - j + 1),
                kind: BlockKind::Up,
                in_channels: cin,
                out_channels: if last { 1 } else { self.level_channels(d - j) },
                kernel: g.kernel,
                stride: g.stride,
                padding: g.padding,
                norm: norm && !last,
                bias: !norm || last,
                activation: if last { Activation::Tanh } else { Activation::Relu },
            });
        }
        specs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel<T> {
    config: GeneratorConfig,
    blocks: Vec<ConvBlock<T>>,
}

/// Forward state of one sample.
pub struct GeneratorCache<T> {
    blocks: BlockCaches<T>,
    /// Channel count of the decoder-side half of each concatenated decoder input.
    split_at: Vec<usize>,
}

impl<T: Real> GeneratorModel<T> {
    /// Random initialization: N(0, 0.02) weights with instance norm (norm
    /// scales around 1), He-normal weights without normalization.
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let with_norm = config.norm == NormKind::Instance;
        let blocks = config
            .block_specs()
            .into_iter()
            .map(|spec| {
                let fan_in = spec.in_channels * spec.kernel * spec.kernel;
                let std = if with_norm { 0.02 } else { (2.0 / fan_in as f64).sqrt() };
                init_block(spec, std, rng)
            })
            .collect();
        Ok(GeneratorModel { config, blocks })
    }

    /// Every parameter set to `value`.
    pub fn constant(config: GeneratorConfig, value: T) -> Result<Self> {
        config.validate()?;
        let blocks = config
            .block_specs()
            .into_iter()
            .map(|spec| {
                let params = spec.param_lens().into_iter().map(|l| vec![value; l]).collect();
                ConvBlock::from_spec(spec, params)
            })
            .collect();
        Ok(GeneratorModel { config, blocks })
    }

    pub(crate) fn from_blocks(config: GeneratorConfig, blocks: Vec<ConvBlock<T>>) -> Result<Self> {
        config.validate()?;
        let specs = config.block_specs();
        if specs.len() != blocks.len() || specs.iter().zip(&blocks).any(|(s, b)| *s != b.spec) {
            return Err(Error::ArchitectureMismatch(
                "stored blocks do not match the generator configuration".into(),
            ));
        }
        Ok(GeneratorModel { config, blocks })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn depth(&self) -> usize {
        self.config.depth
    }

    pub fn check_input(&self, height: usize, width: usize) -> Result<()> {
        let divisor = self.config.divisor();
        if height == 0 || width == 0 || height % divisor != 0 || width % divisor != 0 {
            return Err(Error::Divisibility { height, width, divisor, what: "generator" });
        }
        Ok(())
    }

    /// Inference on a `1 x H x W` tensor.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(x)?.0)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, GeneratorCache<T>)> {
        if x.channels != 1 {
            return Err(Error::Shape(format!("generator expects 1 channel, got {}", x.channels)));
        }
        self.check_input(x.height, x.width)?;
        let d = self.config.depth;
        let mut caches = Vec::with_capacity(2 * d);
        let mut skips: Vec<Tensor<T>> = Vec::with_capacity(d);
        let mut h = x.clone();
        for block in &self.blocks[..d] {
            let (out, cache) = block.forward(&h);
            caches.push(cache);
            skips.push(out.clone());
            h = out;
        }
        let mut split_at = Vec::with_capacity(d);
        let mut u = skips.pop().expect("depth >= 1");
        for (j, block) in self.blocks[d..].iter().enumerate() {
            if j > 0 {
                split_at.push(u.channels);
                let skip = skips.pop().expect("one skip per level");
                u = u.concat(&skip);
            }
            let (out, cache) = block.forward(&u);
            caches.push(cache);
            u = out;
        }
        Ok((u, GeneratorCache { blocks: caches, split_at }))
    }

    /// Backpropagate `dout` through the network, accumulating parameter
    /// gradients for blocks whose `trainable` flag is set.
    ///
    /// Blocks upstream of every trainable block are skipped entirely.
    pub fn backward(&self, cache: GeneratorCache<T>, dout: Tensor<T>, grads: &mut Grads<T>, trainable: &[bool]) {
        let d = self.config.depth;
        assert_eq!(trainable.len(), 2 * d, "trainable mask length");
        let Some(first) = trainable.iter().position(|&t| t) else {
            return;
        };
        // Input gradient of block b is needed iff some trainable block precedes it.
        let need_dx = |b: usize| b > first;
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; d];
        let mut du = Some(dout);
        let mut caches = cache.blocks;
        let dec_caches = caches.split_off(d);
        for (j, c) in dec_caches.iter().enumerate().rev() {
            let b = d + j;
            let g = du.take().expect("gradient flows while needed");
            let grad_slot = trainable[b].then(|| &mut grads[b]);
            let dx = self.blocks[b].backward(c, g, grad_slot, need_dx(b));
            let Some(dx) = dx else { return };
            if j == 0 {
                push_grad(&mut skip_grads[d - 1], dx);
            } else {
                let (dprev, dskip) = dx.split(cache.split_at[j - 1]);
                // decoder block j consumed the skip of encoder level d - j
                push_grad(&mut skip_grads[d - j - 1], dskip);
                du = Some(dprev);
            }
        }
        let mut dh: Option<Tensor<T>> = None;
        for (i, c) in caches.iter().enumerate().rev() {
            if i < first {
                break;
            }
            let mut g = skip_grads[i].take().expect("skip gradient present");
            if let Some(from_next) = dh.take() {
                g.add_assign(&from_next);
            }
            let grad_slot = trainable[i].then(|| &mut grads[i]);
            dh = self.blocks[i].backward(c, g, grad_slot, need_dx(i));
        }
    }
}

fn push_grad<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

impl<T: Real> Network<T> for GeneratorModel<T> {
    fn blocks(&self) -> &[ConvBlock<T>] {
        &self.blocks
    }

    fn blocks_mut(&mut self) -> &mut [ConvBlock<T>] {
        &mut self.blocks
    }
}

/// Convenience constructor mirroring the library-level operation.
pub fn build_generator<T: Real, R: Rng + ?Sized>(
    depth: usize,
    base_channels: usize,
    norm: NormKind,
    rng: &mut R,
) -> Result<GeneratorModel<T>> {
    GeneratorModel::new(GeneratorConfig::new(depth, base_channels, norm), rng)
}

/// Forward pass on a normalized image.
pub fn generator_forward<T: Real>(model: &GeneratorModel<T>, x: &Image<T>) -> Result<Image<T>> {
    if x.domain() != Domain::Norm {
        return Err(Error::Data("generator input must be in the normalized domain".into()));
    }
    let t = Tensor::from_vec(1, x.height(), x.width(), x.data().to_vec());
    let out = model.forward(&t)?;
    Ok(Image::from_parts(out.height, out.width, out.data, Domain::Norm))
}

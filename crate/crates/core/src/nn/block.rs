//! Convolution block: (transposed) conv, optional instance norm, activation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conv::{col2im, im2col, ConvGeometry};
use super::tensor::Tensor;
use crate::scalar::Real;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Per-sample, per-channel normalization with learned scale and shift.
    Instance,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Relu,
    Tanh,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Strided convolution.
    Down,
    /// Strided transposed convolution.
    Up,
}

/// Architecture of one block, enough to rebuild it without its weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub kind: BlockKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub norm: bool,
    pub bias: bool,
    pub activation: Activation,
}

impl BlockSpec {
    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry { kernel: self.kernel, stride: self.stride, padding: self.padding }
    }

    pub fn weight_len(&self) -> usize {
        self.in_channels * self.out_channels * self.kernel * self.kernel
    }

    /// Lengths of the parameter tensors in storage order:
    /// weight, then bias if present, then norm scale and shift if present.
    pub fn param_lens(&self) -> Vec<usize> {
        let mut lens = vec![self.weight_len()];
        if self.bias {
            lens.push(self.out_channels);
        }
        if self.norm {
            lens.push(self.out_channels);
            lens.push(self.out_channels);
        }
        lens
    }

    pub fn param_count(&self) -> usize {
        self.param_lens().iter().sum()
    }
}

/// A block and its parameters. Down blocks store weights as
/// `out x (in*k*k)`, up blocks as `in x (out*k*k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    pub spec: BlockSpec,
    pub params: Vec<Vec<T>>,
}

/// Fresh block: N(0, `weight_std`) weights, zero bias and shift, norm
/// scale drawn from N(1, 0.02).
pub fn init_block<T: Real, R: Rng + ?Sized>(spec: BlockSpec, weight_std: f64, rng: &mut R) -> ConvBlock<T> {
    let w = Normal::new(0.0, weight_std).expect("finite std");
    let s = Normal::new(1.0, 0.02).expect("finite std");
    let mut params = vec![(0..spec.weight_len()).map(|_| T::lit(w.sample(rng))).collect::<Vec<T>>()];
    if spec.bias {
        params.push(vec![T::zero(); spec.out_channels]);
    }
    if spec.norm {
        params.push((0..spec.out_channels).map(|_| T::lit(s.sample(rng))).collect());
        params.push(vec![T::zero(); spec.out_channels]);
    }
    ConvBlock { spec, params }
}

/// Forward-pass state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    in_shape: (usize, usize, usize),
    out_hw: (usize, usize),
    // Down: im2col of the input. Up: the input itself.
    lowered: Vec<T>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    out: Vec<T>,
}

impl<T: Real> ConvBlock<T> {
    pub fn from_spec(spec: BlockSpec, params: Vec<Vec<T>>) -> Self {
        let lens = spec.param_lens();
        assert_eq!(params.len(), lens.len(), "parameter tensor count for {}", spec.name);
        for (p, l) in params.iter().zip(&lens) {
            assert_eq!(p.len(), *l, "parameter length for {}", spec.name);
        }
        ConvBlock { spec, params }
    }

    fn bias(&self) -> Option<&[T]> {
        self.spec.bias.then(|| self.params[1].as_slice())
    }

    fn norm_params(&self) -> Option<(&[T], &[T])> {
        if !self.spec.norm {
            return None;
        }
        let at = if self.spec.bias { 2 } else { 1 };
        Some((&self.params[at], &self.params[at + 1]))
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    pub fn output_hw(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        let g = self.spec.geometry();
        match self.spec.kind {
            BlockKind::Down => Some((g.out_len(height)?, g.out_len(width)?)),
            BlockKind::Up => Some((g.transposed_len(height), g.transposed_len(width))),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, BlockCache<T>) {
        let spec = &self.spec;
        assert_eq!(x.channels, spec.in_channels, "input channels for {}", spec.name);
        let geom = spec.geometry();
        let (oh, ow) = self
            .output_hw(x.height, x.width)
            .expect("caller validated spatial size");
        let taps = geom.taps();
        let cout = spec.out_channels;
        let n_out = oh * ow;

        let (mut z, lowered) = match spec.kind {
            BlockKind::Down => {
                let cols = im2col(&x.data, x.channels, x.height, x.width, geom, oh, ow);
                let mut z = vec![T::zero(); cout * n_out];
                T::gemm(cout, x.channels * taps, n_out, T::one(), &self.params[0], false, &cols, false, T::zero(), &mut z);
                (z, cols)
            }
            BlockKind::Up => {
                let n_in = x.plane();
                let mut cols = vec![T::zero(); cout * taps * n_in];
                T::gemm(cout * taps, x.channels, n_in, T::one(), &self.params[0], true, &x.data, false, T::zero(), &mut cols);
                let z = col2im(&cols, cout, oh, ow, geom, x.height, x.width);
                (z, x.data.clone())
            }
        };

        if let Some(b) = self.bias() {
            for (plane, &bv) in z.chunks_mut(n_out).zip(b) {
                plane.iter_mut().for_each(|v| *v += bv);
            }
        }

        let mut xhat = Vec::new();
        let mut inv_std = Vec::new();
        if let Some((gamma, beta)) = self.norm_params() {
            let eps = T::lit(NORM_EPS);
            let count = T::from_usize(n_out).unwrap();
            xhat = vec![T::zero(); z.len()];
            for ch in 0..cout {
                let plane = &mut z[ch * n_out..(ch + 1) * n_out];
                let mean = plane.iter().copied().sum::<T>() / count;
                let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
                let is = T::one() / (var + eps).sqrt();
                inv_std.push(is);
                let xh = &mut xhat[ch * n_out..(ch + 1) * n_out];
                for (v, h) in plane.iter_mut().zip(xh.iter_mut()) {
                    *h = (*v - mean) * is;
                    *v = *h * gamma[ch] + beta[ch];
                }
            }
        }

        let slope = T::lit(LEAKY_SLOPE);
        match spec.activation {
            Activation::LeakyRelu => z.iter_mut().for_each(|v| {
                if *v < T::zero() {
                    *v = *v * slope
                }
            }),
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(T::zero())),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Identity => {}
        }

        let cache = BlockCache {
            in_shape: (x.channels, x.height, x.width),
            out_hw: (oh, ow),
            lowered,
            xhat,
            inv_std,
            out: z.clone(),
        };
        (Tensor::from_vec(cout, oh, ow, z), cache)
    }

    /// Backpropagate `dy` (gradient w.r.t. the block output).
    ///
    /// Parameter gradients are accumulated into `grads` when given; the input
    /// gradient is returned when `need_input_grad` is set.
    pub fn backward(
        &self,
        cache: &BlockCache<T>,
        dy: Tensor<T>,
        grads: Option<&mut Vec<Vec<T>>>,
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let spec = &self.spec;
        let geom = spec.geometry();
        let taps = geom.taps();
        let cout = spec.out_channels;
        let (oh, ow) = cache.out_hw;
        let n_out = oh * ow;
        let (cin, ih, iw) = cache.in_shape;
        let mut dz = dy.data;

        let slope = T::lit(LEAKY_SLOPE);
        match spec.activation {
            Activation::LeakyRelu => {
                for (d, &o) in dz.iter_mut().zip(&cache.out) {
                    if o <= T::zero() {
                        *d = *d * slope;
                    }
                }
            }
            Activation::Relu => {
                for (d, &o) in dz.iter_mut().zip(&cache.out) {
                    if o <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            Activation::Tanh => {
                for (d, &o) in dz.iter_mut().zip(&cache.out) {
                    *d = *d * (T::one() - o * o);
                }
            }
            Activation::Identity => {}
        }

        let mut grads = grads;
        if let Some((gamma, _)) = self.norm_params() {
            let at = if spec.bias { 2 } else { 1 };
            let count = T::from_usize(n_out).unwrap();
            for ch in 0..cout {
                let d = &mut dz[ch * n_out..(ch + 1) * n_out];
                let xh = &cache.xhat[ch * n_out..(ch + 1) * n_out];
                let sum_d = d.iter().copied().sum::<T>();
                let sum_dx = d.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
                if let Some(g) = grads.as_deref_mut() {
                    g[at][ch] += sum_dx;
                    g[at + 1][ch] += sum_d;
                }
                // d/dz of gamma * (z - mean) * inv_std
                let scale = gamma[ch] * cache.inv_std[ch] / count;
                for (v, &h) in d.iter_mut().zip(xh) {
                    *v = (*v * count - sum_d - h * sum_dx) * scale;
                }
            }
        }

        if let Some(g) = grads.as_deref_mut() {
            if spec.bias {
                for (ch, plane) in dz.chunks(n_out).enumerate() {
                    g[1][ch] += plane.iter().copied().sum::<T>();
                }
            }
        }

        match spec.kind {
            BlockKind::Down => {
                let k = cin * taps;
                if let Some(g) = grads {
                    T::gemm(cout, n_out, k, T::one(), &dz, false, &cache.lowered, true, T::one(), &mut g[0]);
                }
                need_input_grad.then(|| {
                    let mut dcols = vec![T::zero(); k * n_out];
                    T::gemm(k, cout, n_out, T::one(), &self.params[0], true, &dz, false, T::zero(), &mut dcols);
                    Tensor::from_vec(cin, ih, iw, col2im(&dcols, cin, ih, iw, geom, oh, ow))
                })
            }
            BlockKind::Up => {
                let n_in = ih * iw;
                let dcols = im2col(&dz, cout, oh, ow, geom, ih, iw);
                if let Some(g) = grads {
                    T::gemm(cin, n_in, cout * taps, T::one(), &cache.lowered, false, &dcols, true, T::one(), &mut g[0]);
                }
                need_input_grad.then(|| {
                    let mut dx = vec![T::zero(); cin * n_in];
                    T::gemm(cin, cout * taps, n_in, T::one(), &self.params[0], false, &dcols, false, T::zero(), &mut dx);
                    Tensor::from_vec(cin, ih, iw, dx)
                })
            }
        }
    }
}

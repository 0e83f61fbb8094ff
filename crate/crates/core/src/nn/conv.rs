//! im2col lowering for strided 2-D convolutions.
//!
//! A convolution with kernel `k`, stride `s` and padding `p` maps a
//! `C x H x W` volume onto an output grid `Ho x Wo`. The column matrix has
//! one row per `(channel, ky, kx)` tap and one column per output location;
//! the transposed convolution is the same index map read in the opposite
//! direction, so both layer kinds share these two routines.

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub const DOWN: ConvGeometry = ConvGeometry { kernel: 4, stride: 2, padding: 1 };
    pub const POINTWISE: ConvGeometry = ConvGeometry { kernel: 1, stride: 1, padding: 0 };

    /// Output size along one axis of a forward convolution, `None` if empty.
    pub fn out_len(&self, len: usize) -> Option<usize> {
        let padded = len + 2 * self.padding;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    /// Output size of the transposed convolution.
    pub fn transposed_len(&self, len: usize) -> usize {
        (len - 1) * self.stride + self.kernel - 2 * self.padding
    }

    pub fn taps(&self) -> usize {
        self.kernel * self.kernel
    }
}

/// Gather `x` (`channels x height x width`) into a `(channels*k*k) x (out_h*out_w)` matrix.
pub fn im2col<T: Real>(
    x: &[T],
    channels: usize,
    height: usize,
    width: usize,
    geom: ConvGeometry,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let k = geom.kernel;
    let n = out_h * out_w;
    let mut cols = vec![T::zero(); channels * k * k * n];
    for ch in 0..channels {
        let src = &x[ch * height * width..(ch + 1) * height * width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..out_h {
                    let iy = (oy * geom.stride + ky) as isize - geom.padding as isize;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    let src_row = &src[iy as usize * width..(iy as usize + 1) * width];
                    let dst_row = &mut dst[oy * out_w..(oy + 1) * out_w];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * geom.stride + kx) as isize - geom.padding as isize;
                        if ix >= 0 && ix < width as isize {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add the column matrix back onto a `channels x height x width` volume.
pub fn col2im<T: Real>(
    cols: &[T],
    channels: usize,
    height: usize,
    width: usize,
    geom: ConvGeometry,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let k = geom.kernel;
    let n = out_h * out_w;
    let mut x = vec![T::zero(); channels * height * width];
    for ch in 0..channels {
        let dst = &mut x[ch * height * width..(ch + 1) * height * width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..out_h {
                    let iy = (oy * geom.stride + ky) as isize - geom.padding as isize;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * width..(iy as usize + 1) * width];
                    let src_row = &src[oy * out_w..(oy + 1) * out_w];
                    for (ox, &s) in src_row.iter().enumerate() {
                        let ix = (ox * geom.stride + kx) as isize - geom.padding as isize;
                        if ix >= 0 && ix < width as isize {
                            dst_row[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn down_geometry_halves() {
        let g = ConvGeometry::DOWN;
        assert_eq!(g.out_len(256), Some(128));
        assert_eq!(g.out_len(2), Some(1));
        assert_eq!(g.transposed_len(1), 2);
        assert_eq!(g.transposed_len(64), 128);
    }

    // col2im is the adjoint of im2col: <im2col(x), c> == <x, col2im(c)>.
    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (ch, h, w) = (2, 6, 4);
        let g = ConvGeometry::DOWN;
        let (oh, ow) = (g.out_len(h).unwrap(), g.out_len(w).unwrap());
        let x: Vec<f64> = (0..ch * h * w).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let c: Vec<f64> = (0..ch * 16 * oh * ow).map(|i| ((i * 5) % 13) as f64 * 0.25).collect();
        let lhs: f64 = im2col(&x, ch, h, w, g, oh, ow).iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&col2im(&c, ch, h, w, g, oh, ow)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}

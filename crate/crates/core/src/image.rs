//! Single-channel rasters with an explicit value domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Value domain of an [`Image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    /// Raw 8-bit intensities, `[0, 255]`.
    Raw,
    /// Network domain, `[-1, 1]`.
    Norm,
}

impl Domain {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Domain::Raw => (0.0, 255.0),
            Domain::Norm => (-1.0, 1.0),
        }
    }
}

/// Row-major raster, `channels` planes of `height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
    domain: Domain,
}

impl<T: Real> Image<T> {
    /// Single-channel image; every value must be finite and inside the domain.
    pub fn new(height: usize, width: usize, data: Vec<T>, domain: Domain) -> Result<Self> {
        Self::with_channels(height, width, 1, data, domain)
    }

    pub fn with_channels(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<T>,
        domain: Domain,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "image dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "buffer of {} values does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        let (lo, hi) = domain.bounds();
        if let Some(bad) = data.iter().find(|v| {
            let v = v.as_f64();
            !(v >= lo && v <= hi)
        }) {
            return Err(Error::Data(format!(
                "value {bad} outside the {domain:?} domain [{lo}, {hi}]"
            )));
        }
        Ok(Image { height, width, channels, data, domain })
    }

    /// Caller guarantees the domain invariant (e.g. clipped or Tanh output).
    pub(crate) fn from_parts(height: usize, width: usize, data: Vec<T>, domain: Domain) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Image { height, width, channels: 1, data, domain }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        domain: Domain,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data, domain)
    }

    pub fn filled(height: usize, width: usize, value: T, domain: Domain) -> Result<Self> {
        Self::new(height, width, vec![value; height * width], domain)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for plane in self.data.chunks(self.height * self.width) {
            for row in plane.chunks(self.width) {
                data.extend(row.iter().rev());
            }
        }
        Image { data, ..*self }
    }

    /// Apply `f` to every value and clip into the domain.
    pub fn map_clipped(&self, f: impl Fn(T) -> T) -> Self {
        let (lo, hi) = self.domain.bounds();
        let (lo, hi) = (T::lit(lo), T::lit(hi));
        let data = self.data.iter().map(|&v| f(v).max(lo).min(hi)).collect();
        Image { data, ..*self }
    }

    /// Bilinear resample to a new size (half-pixel centres, edge clamp).
    pub fn resize(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape("resize target must be positive".into()));
        }
        let plane = self.height * self.width;
        let mut data = Vec::with_capacity(height * width * self.channels);
        for src in self.data.chunks(plane) {
            data.extend(resize_bilinear(src, self.height, self.width, height, width));
        }
        let (lo, hi) = self.domain.bounds();
        let (lo, hi) = (T::lit(lo), T::lit(hi));
        for v in &mut data {
            *v = v.max(lo).min(hi);
        }
        Ok(Image { height, width, channels: self.channels, data, domain: self.domain })
    }

    /// Rectangular sub-window.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::Shape(format!(
                "crop {height}x{width}@({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        let plane = self.height * self.width;
        let mut data = Vec::with_capacity(height * width * self.channels);
        for src in self.data.chunks(plane) {
            for r in top..top + height {
                data.extend_from_slice(&src[r * self.width + left..r * self.width + left + width]);
            }
        }
        Ok(Image { height, width, channels: self.channels, data, domain: self.domain })
    }
}

/// Bilinear interpolation of one plane.
///
/// Source coordinate for destination pixel `d` is `(d + 0.5) * src/dst - 0.5`,
/// clamped to the valid range; same-size resizing is the identity.
pub fn resize_bilinear<T: Real>(
    src: &[T],
    height: usize,
    width: usize,
    new_height: usize,
    new_width: usize,
) -> Vec<T> {
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let scale = src_len as f64 / dst_len as f64;
        let pos = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (pos.floor() as usize).min(src_len - 1);
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, pos - i0 as f64)
    };
    let cols: Vec<_> = (0..new_width).map(|c| axis(c, width, new_width)).collect();
    let mut out = Vec::with_capacity(new_height * new_width);
    for r in 0..new_height {
        let (r0, r1, fr) = axis(r, height, new_height);
        let fr = T::lit(fr);
        for &(c0, c1, fc) in &cols {
            let fc = T::lit(fc);
            let top = lerp(src[r0 * width + c0], src[r0 * width + c1], fc);
            let bottom = lerp(src[r1 * width + c0], src[r1 * width + c1], fc);
            out.push(lerp(top, bottom, fr));
        }
    }
    out
}

// Exact at both ends and for equal endpoints.
#[inline]
fn lerp<T: Real>(a: T, b: T, t: T) -> T {
    a + (b - a) * t
}

/// Real-valued map with an image's spatial shape but no domain constraint
/// (ensemble means, standard deviations, patch scores).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Plane<T> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Plane { height, width, data: vec![T::zero(); height * width] }
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum::<f64>() / self.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_domain_values() {
        assert!(Image::<f32>::new(1, 2, vec![0.0, 256.0], Domain::Raw).is_err());
        assert!(Image::<f32>::new(1, 2, vec![0.0, 1.5], Domain::Norm).is_err());
        assert!(Image::<f32>::new(1, 2, vec![0.0, f32::NAN], Domain::Raw).is_err());
        assert!(Image::<f32>::new(0, 2, vec![], Domain::Raw).is_err());
    }

    #[test]
    fn same_size_resize_is_identity() {
        let img = Image::<f64>::from_fn(5, 7, Domain::Raw, |r, c| ((r * 31 + c * 17) % 256) as f64)
            .unwrap();
        assert_eq!(img.resize(5, 7).unwrap(), img);
    }

    #[test]
    fn upsample_constant_stays_constant() {
        let img = Image::<f32>::filled(3, 3, 42.0, Domain::Raw).unwrap();
        let up = img.resize(8, 5).unwrap();
        assert!(up.data().iter().all(|&v| v == 42.0));
    }

    #[test]
    fn flip_twice_is_identity() {
        let img = Image::<f32>::from_fn(3, 4, Domain::Raw, |r, c| (r * 4 + c) as f32).unwrap();
        assert_eq!(img.flip_horizontal().get(0, 0), 3.0);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    }
}

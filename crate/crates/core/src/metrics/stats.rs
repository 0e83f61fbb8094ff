//! Reference-free image statistics and embedding similarity.

use crate::data::denormalize;
use crate::error::{Error, Result};
use crate::image::{Domain, Image};
use crate::perturb::round_half_up;
use crate::scalar::Real;

fn raw_values<T: Real>(x: &Image<T>) -> Result<Vec<f64>> {
    let raw = match x.domain() {
        Domain::Raw => x.clone(),
        Domain::Norm => denormalize(x)?,
    };
    Ok(raw.data().iter().map(|v| v.as_f64()).collect())
}

/// Shannon entropy in bits of the 256-bin intensity histogram.
pub fn shannon_entropy<T: Real>(x: &Image<T>) -> Result<f64> {
    let mut hist = [0usize; 256];
    for v in raw_values(x)? {
        hist[round_half_up(v).clamp(0.0, 255.0) as usize] += 1;
    }
    let n = x.len() as f64;
    Ok(hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

/// 4-neighbour Laplacian.
pub const LAPLACIAN: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];

/// `(laplacian_variance, rms_contrast)` in the image's own units.
///
/// The Laplacian is evaluated on interior pixels only.
pub fn sharpness_stats<T: Real>(x: &Image<T>) -> Result<(f64, f64)> {
    let (h, w) = x.shape();
    if h < 3 || w < 3 || x.channels() != 1 {
        return Err(Error::Shape(format!("sharpness needs a single-channel image of at least 3x3, got {h}x{w}")));
    }
    let v: Vec<f64> = x.data().iter().map(|p| p.as_f64()).collect();
    let mut response = Vec::with_capacity((h - 2) * (w - 2));
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let mut s = 0.0;
            for (dr, krow) in LAPLACIAN.iter().enumerate() {
                for (dc, k) in krow.iter().enumerate() {
                    s += k * v[(r + dr - 1) * w + c + dc - 1];
                }
            }
            response.push(s);
        }
    }
    Ok((population_std(&response).powi(2), population_std(&v)))
}

fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Maps an image to a feature vector.
pub trait Embedder<T: Real> {
    fn embed(&self, x: &Image<T>) -> Result<Vec<f64>>;
}

/// Bilinear downsample to `side x side`, flattened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DownsampleEmbedder {
    pub side: usize,
}

impl Default for DownsampleEmbedder {
    fn default() -> Self {
        DownsampleEmbedder { side: 32 }
    }
}

impl<T: Real> Embedder<T> for DownsampleEmbedder {
    fn embed(&self, x: &Image<T>) -> Result<Vec<f64>> {
        Ok(x.resize(self.side, self.side)?.data().iter().map(|v| v.as_f64()).collect())
    }
}

/// Cosine of the angle between two embedding vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("embedding lengths differ: {} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| (x / na) * (y / nb)).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

pub fn cosine_similarity<T: Real, E: Embedder<T> + ?Sized>(a: &Image<T>, b: &Image<T>, embedder: &E) -> Result<f64> {
    cosine(&embedder.embed(a)?, &embedder.embed(b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn entropy_examples() {
        let c = Image::<f32>::filled(4, 4, 17.0, Domain::Raw).unwrap();
        assert_eq!(shannon_entropy(&c).unwrap(), 0.0);
        let two = Image::<f32>::from_fn(4, 4, Domain::Raw, |r, _| if r < 2 { 0.0 } else { 200.0 }).unwrap();
        assert_abs_diff_eq!(shannon_entropy(&two).unwrap(), 1.0, epsilon = 1e-12);
        let all = Image::<f32>::from_fn(16, 16, Domain::Raw, |r, c| (r * 16 + c) as f32).unwrap();
        assert_abs_diff_eq!(shannon_entropy(&all).unwrap(), 8.0, epsilon = 1e-12);
        // Normalized images are binned after mapping back to [0, 255].
        let norm = Image::<f32>::from_fn(4, 4, Domain::Norm, |r, _| if r < 2 { -1.0 } else { 1.0 }).unwrap();
        assert_abs_diff_eq!(shannon_entropy(&norm).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sharpness_examples() {
        let c = Image::<f64>::filled(5, 5, 80.0, Domain::Raw).unwrap();
        assert_eq!(sharpness_stats(&c).unwrap(), (0.0, 0.0));
        let half = Image::<f64>::from_fn(4, 4, Domain::Raw, |_, c| if c < 2 { 0.0 } else { 255.0 }).unwrap();
        assert_abs_diff_eq!(sharpness_stats(&half).unwrap().1, 127.5, epsilon = 1e-12);

        // Checkerboard: every interior response is +-1020, so the variance is 1020^2.
        let board = Image::<f64>::from_fn(6, 6, Domain::Raw, |r, c| if (r + c) % 2 == 0 { 0.0 } else { 255.0 }).unwrap();
        let (lv, _) = sharpness_stats(&board).unwrap();
        assert_abs_diff_eq!(lv, 1020.0f64.powi(2), epsilon = 1e-6);
        let smooth = Image::<f64>::from_fn(6, 6, Domain::Raw, |r, c| (r * 10 + c * 5) as f64).unwrap();
        assert!(sharpness_stats(&smooth).unwrap().0 < lv);
        assert!(sharpness_stats(&Image::<f64>::filled(2, 5, 0.0, Domain::Raw).unwrap()).is_err());
    }

    #[test]
    fn cosine_examples() {
        let x = Image::<f32>::from_fn(40, 40, Domain::Raw, |r, c| (r + c) as f32).unwrap();
        assert_abs_diff_eq!(cosine_similarity(&x, &x, &DownsampleEmbedder::default()).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cosine(&[1.0, -2.0], &[-1.0, 2.0]).unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[0.0, 1.0]), Err(Error::ZeroNorm)));
        let z = Image::<f32>::filled(8, 8, 0.0, Domain::Raw).unwrap();
        assert!(cosine_similarity(&z, &x, &DownsampleEmbedder::default()).is_err());
    }

    proptest! {
        #[test]
        fn entropy_is_bounded(v in prop::collection::vec(0u8..=255, 1..300)) {
            let n = v.len();
            let x = Image::<f32>::new(1, n, v.into_iter().map(f32::from).collect(), Domain::Raw).unwrap();
            let h = shannon_entropy(&x).unwrap();
            prop_assert!((0.0..=8.0).contains(&h));
        }
    }
}

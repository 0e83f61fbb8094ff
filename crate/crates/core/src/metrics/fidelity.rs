//! Reference-based agreement: Pearson, PSNR, SSIM and histogram matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Domain, Image};
use crate::scalar::Real;

fn same_shape<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<()> {
    if a.shape() != b.shape() || a.channels() != b.channels() {
        return Err(Error::Shape(format!(
            "metric inputs differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn values<T: Real>(x: &Image<T>) -> Vec<f64> {
    x.data().iter().map(|v| v.as_f64()).collect()
}

/// Pearson correlation over all pixels. Constant inputs are an error.
pub fn pearson<T: Real>(y: &Image<T>, y_hat: &Image<T>) -> Result<f64> {
    same_shape(y, y_hat)?;
    let a = values(y);
    let b = values(y_hat);
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, z) in a.iter().zip(&b) {
        let (da, db) = (x - ma, z - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 {
        return Err(Error::UndefinedCorrelation("reference"));
    }
    if sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("predicted"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Peak signal-to-noise ratio in dB; identical images give `f64::INFINITY`.
pub fn psnr<T: Real>(y: &Image<T>, y_hat: &Image<T>, peak: f64) -> Result<f64> {
    same_shape(y, y_hat)?;
    if !(peak > 0.0) {
        return Err(Error::Config(format!("PSNR peak must be positive, got {peak}")));
    }
    let mse = y
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum::<f64>()
        / y.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub dynamic_range: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig { window: 11, sigma: 1.5, dynamic_range: 255.0, k1: 0.01, k2: 0.03 }
    }
}

impl SsimConfig {
    /// Defaults with the dynamic range of `domain`.
    pub fn for_domain(domain: Domain) -> Self {
        let (lo, hi) = domain.bounds();
        SsimConfig { dynamic_range: hi - lo, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || self.window == 0 {
            return Err(Error::Config(format!("SSIM window must be odd, got {}", self.window)));
        }
        if !(self.dynamic_range > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::Config("SSIM dynamic range and sigma must be positive".into()));
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }
}

// Separable Gaussian filter over the valid region.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = k.iter().enumerate().map(|(i, kv)| kv * x[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = k.iter().enumerate().map(|(i, kv)| kv * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Local SSIM map over every fully contained window.
pub fn ssim_map<T: Real>(y: &Image<T>, y_hat: &Image<T>, cfg: &SsimConfig) -> Result<Vec<f64>> {
    same_shape(y, y_hat)?;
    cfg.validate()?;
    let (h, w) = y.shape();
    if h < cfg.window || w < cfg.window || y.channels() != 1 {
        return Err(Error::Shape(format!(
            "SSIM needs a single-channel image of at least {0}x{0}, got {h}x{w}",
            cfg.window
        )));
    }
    let a = values(y);
    let b = values(y_hat);
    let k = cfg.kernel();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mu_a = filter_valid(&a, h, w, &k);
    let mu_b = filter_valid(&b, h, w, &k);
    let saa = filter_valid(&prod(&a, &a), h, w, &k);
    let sbb = filter_valid(&prod(&b, &b), h, w, &k);
    let sab = filter_valid(&prod(&a, &b), h, w, &k);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    Ok((0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = saa[i] - ma * ma;
            let vb = sbb[i] - mb * mb;
            let cov = sab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect())
}

/// Mean structural similarity.
pub fn ssim<T: Real>(y: &Image<T>, y_hat: &Image<T>, cfg: &SsimConfig) -> Result<f64> {
    let map = ssim_map(y, y_hat, cfg)?;
    Ok((map.iter().sum::<f64>() / map.len() as f64).clamp(-1.0, 1.0))
}

/// Exact histogram specification: the k-th smallest pixel of `y_hat`
/// (ties in raster order) takes the k-th smallest reference value.
pub fn histogram_match<T: Real>(y_hat: &Image<T>, reference: &Image<T>) -> Result<Image<T>> {
    if y_hat.len() != reference.len() {
        return Err(Error::Shape(format!(
            "histogram matching needs equal pixel counts, got {} and {}",
            y_hat.len(),
            reference.len()
        )));
    }
    let mut order: Vec<usize> = (0..y_hat.len()).collect();
    let src = y_hat.data();
    // Stable sort keeps raster order among ties.
    order.sort_by(|&i, &j| src[i].partial_cmp(&src[j]).expect("finite pixels"));
    let mut sorted = reference.data().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite pixels"));
    let mut out = vec![T::zero(); src.len()];
    for (rank, &idx) in order.iter().enumerate() {
        out[idx] = sorted[rank];
    }
    Image::with_channels(y_hat.height(), y_hat.width(), y_hat.channels(), out, reference.domain())
}

//! Evaluation metrics.

pub mod fidelity;
pub mod signif;
pub mod stats;

pub use fidelity::{histogram_match, pearson, psnr, ssim, ssim_map, SsimConfig};
pub use signif::{holm_adjust, paired_test, paired_test_family, PairedTest};
pub use stats::{cosine, cosine_similarity, sharpness_stats, shannon_entropy, DownsampleEmbedder, Embedder, LAPLACIAN};

use serde::{Deserialize, Serialize};

use crate::data::denormalize;
use crate::error::{Error, Result};
use crate::image::{Domain, Image};
use crate::scalar::Real;

/// PSNR values may be infinite; JSON has no infinity, so they are written
/// as the string `"inf"`.
pub mod psnr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad PSNR value `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub pearson: f64,
    #[serde(with = "psnr_serde")]
    pub psnr: f64,
    pub ssim: f64,
    pub entropy: f64,
    pub laplacian_variance: f64,
    pub rms_contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pearson: f64,
    #[serde(with = "psnr_serde")]
    pub psnr: f64,
    pub ssim: f64,
    pub entropy: f64,
    pub laplacian_variance: f64,
    pub rms_contrast: f64,
    pub per_image: Vec<ImageMetrics>,
}

fn to_raw<T: Real>(x: &Image<T>) -> Result<Image<T>> {
    match x.domain() {
        Domain::Raw => Ok(x.clone()),
        Domain::Norm => denormalize(x),
    }
}

/// All metrics for one prediction against its reference.
///
/// Pearson uses the prediction as produced; PSNR and SSIM use the 8-bit
/// prediction after histogram matching to the reference; the statistics
/// describe the 8-bit prediction.
pub fn evaluate_pair<T: Real>(id: &str, prediction: &Image<T>, reference: &Image<T>) -> Result<ImageMetrics> {
    let rho = pearson(reference, prediction)?;
    let pred = to_raw(prediction)?;
    let reference = to_raw(reference)?;
    let matched = histogram_match(&pred, &reference)?;
    let (laplacian_variance, rms_contrast) = sharpness_stats(&pred)?;
    Ok(ImageMetrics {
        id: id.to_string(),
        pearson: rho,
        psnr: psnr(&reference, &matched, 255.0)?,
        ssim: ssim(&reference, &matched, &SsimConfig::default())?,
        entropy: shannon_entropy(&pred)?,
        laplacian_variance,
        rms_contrast,
    })
}

/// Aggregate (mean) report over a set of predictions.
pub fn evaluate<T: Real>(ids: &[String], predictions: &[Image<T>], references: &[Image<T>]) -> Result<MetricReport> {
    if predictions.len() != references.len() || ids.len() != predictions.len() {
        return Err(Error::Shape("evaluation inputs differ in length".into()));
    }
    if predictions.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let per_image = ids
        .iter()
        .zip(predictions.iter().zip(references))
        .map(|(id, (p, r))| evaluate_pair(id, p, r))
        .collect::<Result<Vec<_>>>()?;
    let mean = |f: fn(&ImageMetrics) -> f64| per_image.iter().map(f).sum::<f64>() / per_image.len() as f64;
    Ok(MetricReport {
        pearson: mean(|m| m.pearson),
        psnr: mean(|m| m.psnr),
        ssim: mean(|m| m.ssim),
        entropy: mean(|m| m.entropy),
        laplacian_variance: mean(|m| m.laplacian_variance),
        rms_contrast: mean(|m| m.rms_contrast),
        per_image,
    })
}

/// Mean Pearson correlation, the selection criterion used during training.
pub fn mean_pearson<T: Real>(predictions: &[Image<T>], references: &[Image<T>]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != references.len() {
        return Err(Error::Shape("mean_pearson needs equal, non-empty lists".into()));
    }
    let mut s = 0.0;
    for (p, r) in predictions.iter().zip(references) {
        s += pearson(r, p)?;
    }
    Ok(s / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_of_perfect_prediction() {
        let x = Image::<f32>::from_fn(16, 16, Domain::Raw, |r, c| ((r * 16 + c) % 256) as f32).unwrap();
        let rep = evaluate(&["a".to_string()], &[x.clone()], &[x.clone()]).unwrap();
        assert_eq!(rep.pearson, 1.0);
        assert_eq!(rep.psnr, f64::INFINITY);
        assert!((rep.ssim - 1.0).abs() < 1e-12);
        assert_eq!(rep.per_image.len(), 1);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"psnr\":\"inf\""));
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }
}

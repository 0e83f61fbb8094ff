//! Dataset ingestion, splitting, normalization and image persistence.
//!
//! Directory convention: a source (paired) dataset holds `<id>_input.<ext>`
//! and `<id>_target.<ext>` for every id; a target (unlabeled) dataset holds
//! `<id>_input.<ext>` files, or plain `<id>.<ext>` files. PNG and TIFF are
//! accepted, 8- or 16-bit grayscale; 16-bit samples are divided by 257.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Domain, Image};
use crate::perturb::round_half_up;
use crate::rng::substream;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub id: String,
    pub input: Image<T>,
    pub target: Option<Image<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub samples: Vec<Sample<T>>,
    pub split: Option<Split>,
    pub domain: DomainTag,
}

impl<T: Real> Dataset<T> {
    pub fn new(samples: Vec<Sample<T>>, domain: DomainTag) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id `{}`", s.id)));
            }
            if domain == DomainTag::Source && s.target.is_none() {
                return Err(Error::Data(format!("source sample `{}` has no target", s.id)));
            }
        }
        Ok(Dataset { samples, split: None, domain })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn inputs(&self) -> Vec<Image<T>> {
        self.samples.iter().map(|s| s.input.clone()).collect()
    }

    /// Apply `f` to every input, keeping ids and targets.
    pub fn map_inputs(&self, f: impl Fn(&Image<T>) -> Result<Image<T>>) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| Ok(Sample { id: s.id.clone(), input: f(&s.input)?, target: s.target.clone() }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { samples, split: self.split, domain: self.domain })
    }

    /// Inputs and targets mapped to the network domain.
    pub fn normalized_pairs(&self) -> Result<Vec<(Image<T>, Image<T>)>> {
        self.samples
            .iter()
            .map(|s| {
                let t = s
                    .target
                    .as_ref()
                    .ok_or_else(|| Error::Data(format!("sample `{}` has no target", s.id)))?;
                Ok((to_norm(&s.input)?, to_norm(t)?))
            })
            .collect()
    }

    pub fn normalized_inputs(&self) -> Result<Vec<Image<T>>> {
        self.samples.iter().map(|s| to_norm(&s.input)).collect()
    }
}

fn to_norm<T: Real>(x: &Image<T>) -> Result<Image<T>> {
    match x.domain() {
        Domain::Raw => normalize(x),
        Domain::Norm => Ok(x.clone()),
    }
}

/// Partition sizes for `n` samples with 7 : 1.5 : 1.5 ratios: train and
/// validation are floored, test takes the remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let val = n * 15 / 100;
    (train, val, n - train - val)
}

/// Seeded shuffle into train / validation / test.
pub fn split_dataset<T: Real>(dataset: &Dataset<T>, seed: u64) -> Result<(Dataset<T>, Dataset<T>, Dataset<T>)> {
    let n = dataset.len();
    if n < 3 {
        return Err(Error::Data(format!("need at least 3 samples to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "split"));
    let (train, val, _) = split_sizes(n);
    let take = |idx: &[usize], split| Dataset {
        samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
        split: Some(split),
        domain: dataset.domain,
    };
    Ok((
        take(&order[..train], Split::Train),
        take(&order[train..train + val], Split::Val),
        take(&order[train + val..], Split::Test),
    ))
}

/// `v / 127.5 - 1`.
pub fn normalize<T: Real>(x: &Image<T>) -> Result<Image<T>> {
    if x.domain() != Domain::Raw {
        return Err(Error::Data("normalize expects a raw [0, 255] image".into()));
    }
    let half = T::lit(127.5);
    let data = x.data().iter().map(|&v| v / half - T::one()).collect();
    Image::with_channels(x.height(), x.width(), x.channels(), data, Domain::Norm)
}

/// Inverse of [`normalize`], clipped to `[0, 255]` and rounded half up.
pub fn denormalize<T: Real>(x: &Image<T>) -> Result<Image<T>> {
    if x.domain() != Domain::Norm {
        return Err(Error::Data("denormalize expects a normalized [-1, 1] image".into()));
    }
    let half = T::lit(127.5);
    let hi = T::lit(255.0);
    let data = x
        .data()
        .iter()
        .map(|&v| round_half_up((v + T::one()) * half).max(T::zero()).min(hi))
        .collect();
    Image::with_channels(x.height(), x.width(), x.channels(), data, Domain::Raw)
}

/// Read one grayscale image as raw `[0, 255]` values.
pub fn read_image<T: Real>(path: &Path) -> Result<Image<T>> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<T> = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| T::lit(v as f64)).collect(),
        DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(|v| T::lit(v as f64 / 257.0)).collect(),
        other => {
            if other.color().has_color() {
                return Err(Error::Data(format!("{} is not grayscale", path.display())));
            }
            other.into_luma16().into_raw().into_iter().map(|v| T::lit(v as f64 / 257.0)).collect()
        }
    };
    Image::new(h, w, data, Domain::Raw)
}

/// Write an image as 8-bit grayscale (format from the extension).
pub fn write_image<T: Real>(img: &Image<T>, path: &Path) -> Result<()> {
    let raw = match img.domain() {
        Domain::Raw => img.clone(),
        Domain::Norm => denormalize(img)?,
    };
    let bytes: Vec<u8> = raw
        .data()
        .iter()
        .map(|v| round_half_up(*v).as_f64().clamp(0.0, 255.0) as u8)
        .collect();
    let gray = GrayImage::from_raw(raw.width() as u32, raw.height() as u32, bytes)
        .ok_or_else(|| Error::Shape("image buffer size".into()))?;
    gray.save(path)?;
    Ok(())
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "tif" | "tiff")
    )
}

/// Load a directory, resizing every image bilinearly to `resize_to` squared.
pub fn load_images<T: Real>(dir: &Path, resize_to: Option<usize>, domain: DomainTag) -> Result<Dataset<T>> {
    if !dir.is_dir() {
        return Err(Error::Data(format!("{} is not a directory", dir.display())));
    }
    let mut inputs: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut targets: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries.into_iter().filter(|p| is_image(p)) {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if let Some(id) = stem.strip_suffix("_target") {
            targets.insert(id.to_string(), path);
        } else if let Some(id) = stem.strip_suffix("_input") {
            inputs.insert(id.to_string(), path);
        } else {
            inputs.insert(stem, path);
        }
    }
    let load = |p: &Path| -> Result<Image<T>> {
        let img = read_image::<T>(p)?;
        match resize_to {
            Some(s) if img.shape() != (s, s) => img.resize(s, s).map(|i| i.map_clipped(round_half_up)),
            _ => Ok(img),
        }
    };
    let mut samples = Vec::with_capacity(inputs.len());
    for (id, path) in &inputs {
        let target = match targets.get(id) {
            Some(t) => Some(load(t)?),
            None if domain == DomainTag::Source => {
                return Err(Error::Data(format!("source sample `{id}` has no `{id}_target` image")));
            }
            None => None,
        };
        samples.push(Sample { id: id.clone(), input: load(path)?, target });
    }
    if let Some(orphan) = targets.keys().find(|k| !inputs.contains_key(*k)) {
        return Err(Error::Data(format!("target `{orphan}_target` has no matching input")));
    }
    Dataset::new(samples, domain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(n: usize) -> Dataset<f32> {
        let samples = (0..n)
            .map(|i| Sample {
                id: format!("s{i:03}"),
                input: Image::filled(2, 2, i as f32 % 256.0, Domain::Raw).unwrap(),
                target: Some(Image::filled(2, 2, 0.0, Domain::Raw).unwrap()),
            })
            .collect();
        Dataset::new(samples, DomainTag::Source).unwrap()
    }

    #[test]
    fn split_sizes_examples() {
        assert_eq!(split_sizes(100), (70, 15, 15));
        assert_eq!(split_sizes(10), (7, 1, 2));
        assert_eq!(split_sizes(300), (210, 45, 45));
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seeded() {
        let d = dataset(37);
        let (a, b, c) = split_dataset(&d, 4).unwrap();
        let mut ids: Vec<_> = a.samples.iter().chain(&b.samples).chain(&c.samples).map(|s| s.id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 37);
        let (a2, _, _) = split_dataset(&d, 4).unwrap();
        assert_eq!(a, a2);
        let (a3, _, _) = split_dataset(&d, 5).unwrap();
        assert_ne!(a, a3);
        assert!(split_dataset(&dataset(2), 0).is_err());
    }

    #[test]
    fn normalize_endpoints() {
        let x = Image::<f64>::new(1, 3, vec![0.0, 127.5, 255.0], Domain::Raw).unwrap();
        assert_eq!(normalize(&x).unwrap().data(), &[-1.0, 0.0, 1.0]);
        assert!(normalize(&normalize(&x).unwrap()).is_err());
        assert!(denormalize(&x).is_err());
    }

    #[test]
    fn normalize_round_trips_every_integer_level() {
        let x = Image::<f32>::new(1, 256, (0..256).map(|v| v as f32).collect(), Domain::Raw).unwrap();
        assert_eq!(denormalize(&normalize(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn duplicate_ids_and_missing_targets_are_rejected() {
        let img = Image::<f32>::filled(2, 2, 0.0, Domain::Raw).unwrap();
        let s = |id: &str, t: bool| Sample { id: id.into(), input: img.clone(), target: t.then(|| img.clone()) };
        assert!(Dataset::new(vec![s("a", true), s("a", true)], DomainTag::Source).is_err());
        assert!(Dataset::new(vec![s("a", false)], DomainTag::Source).is_err());
        assert!(Dataset::new(vec![s("a", false)], DomainTag::Target).is_ok());
    }
}

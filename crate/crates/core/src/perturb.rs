//! Synthetic acquisition shifts and the procedural paired scene generator.
//!
//! Rounding is fixed for reproducibility: intensities round half up,
//! crop sizes round to nearest, crop offsets floor.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Domain, Image};
use crate::rng::substream;
use crate::scalar::Real;

pub const OVEREXPOSURE_PRESETS: [f64; 3] = [1.2, 1.5, 1.7];
pub const GRADIENT_PRESETS: [f64; 3] = [40.0, 80.0, 120.0];
pub const ZOOM_PRESETS: [f64; 3] = [1.2, 1.4, 1.6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Scale,
    Overexpose,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    /// Zoom factor, brightness factor, or gradient maximum.
    pub magnitude: f64,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, magnitude: f64) -> Result<Self> {
        let spec = PerturbationSpec { kind, magnitude };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.magnitude;
        let ok = match self.kind {
            PerturbationKind::Scale => m > 1.0,
            PerturbationKind::Overexpose => m > 0.0,
            PerturbationKind::Gradient => (0.0..=255.0).contains(&m),
        };
        if ok && m.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid {:?} magnitude {m}", self.kind)))
        }
    }

    pub fn apply<T: Real>(&self, x: &Image<T>) -> Result<Image<T>> {
        match self.kind {
            PerturbationKind::Scale => scale_zoom(x, self.magnitude),
            PerturbationKind::Overexpose => overexpose(x, self.magnitude),
            PerturbationKind::Gradient => illumination_gradient(x, self.magnitude),
        }
    }

    pub fn label(&self) -> String {
        let kind = match self.kind {
            PerturbationKind::Scale => "scale",
            PerturbationKind::Overexpose => "overexpose",
            PerturbationKind::Gradient => "gradient",
        };
        format!("{kind}x{}", self.magnitude)
    }
}

#[inline]
pub(crate) fn round_half_up<T: Real>(v: T) -> T {
    (v + T::lit(0.5)).floor()
}

fn require_raw<T: Real>(x: &Image<T>) -> Result<()> {
    if x.domain() != Domain::Raw {
        return Err(Error::Data("perturbations operate on raw [0, 255] images".into()));
    }
    Ok(())
}

/// Multiplicative brightness: `clip(round(x * factor), 0, 255)`.
pub fn overexpose<T: Real>(x: &Image<T>, factor: f64) -> Result<Image<T>> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Config(format!("brightness factor must be positive, got {factor}")));
    }
    require_raw(x)?;
    let f = T::lit(factor);
    Ok(x.map_clipped(|v| round_half_up(v * f)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientDirection {
    LeftToRight,
    RightToLeft,
}

/// Additive horizontal ramp from 0 at the left edge to `max_add` at the right.
pub fn illumination_gradient<T: Real>(x: &Image<T>, max_add: f64) -> Result<Image<T>> {
    illumination_gradient_dir(x, max_add, GradientDirection::LeftToRight)
}

/// Column `c` gains `round(max_add * c' / (W - 1))` with `c'` counted from the
/// ramp origin, then the image is clipped to `[0, 255]`.
pub fn illumination_gradient_dir<T: Real>(
    x: &Image<T>,
    max_add: f64,
    direction: GradientDirection,
) -> Result<Image<T>> {
    if !(0.0..=255.0).contains(&max_add) {
        return Err(Error::Config(format!("gradient maximum must lie in [0, 255], got {max_add}")));
    }
    require_raw(x)?;
    let w = x.width();
    let offsets: Vec<T> = (0..w)
        .map(|c| {
            let from_origin = match direction {
                GradientDirection::LeftToRight => c,
                GradientDirection::RightToLeft => w - 1 - c,
            };
            if w == 1 {
                T::zero()
            } else {
                round_half_up(T::lit(max_add * from_origin as f64 / (w - 1) as f64))
            }
        })
        .collect();
    let hi = T::lit(255.0);
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v + offsets[i % w]).min(hi).max(T::zero()))
        .collect();
    Image::with_channels(x.height(), x.width(), x.channels(), data, Domain::Raw)
}

/// Centre crop geometry of a digital zoom along one axis: `(offset, size)`.
pub fn zoom_crop(side: usize, zoom: f64) -> (usize, usize) {
    let crop = (side as f64 / zoom).round() as usize;
    let crop = crop.min(side);
    ((side - crop) / 2, crop)
}

/// Digital zoom: centre crop of side `round(side / zoom)` resized back to
/// the original size with bilinear interpolation.
pub fn scale_zoom<T: Real>(x: &Image<T>, zoom: f64) -> Result<Image<T>> {
    if !(zoom > 1.0 && zoom.is_finite()) {
        return Err(Error::Config(format!("zoom factor must exceed 1, got {zoom}")));
    }
    let (top, ch) = zoom_crop(x.height(), zoom);
    let (left, cw) = zoom_crop(x.width(), zoom);
    if ch < 2 || cw < 2 {
        return Err(Error::Config(format!("zoom {zoom} leaves a degenerate {ch}x{cw} crop")));
    }
    let zoomed = x.crop(top, left, ch, cw)?.resize(x.height(), x.width())?;
    Ok(match x.domain() {
        Domain::Raw => zoomed.map_clipped(round_half_up),
        Domain::Norm => zoomed,
    })
}

/// Procedural stand-in for paired transmitted-light / fluorescence data.
///
/// Blobs have Gaussian profiles. The target is the clean sum of blob
/// intensities on a zero background; the input is `background + contrast *
/// target` plus Gaussian noise, so a negative contrast renders blobs as
/// dark absorbers on a bright field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    pub height: usize,
    pub width: usize,
    pub num_blobs: usize,
    pub radius_range: (f64, f64),
    pub intensity_range: (f64, f64),
    pub background: f64,
    pub contrast: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        SyntheticSceneSpec {
            height: 128,
            width: 128,
            num_blobs: 12,
            radius_range: (3.0, 8.0),
            intensity_range: (80.0, 220.0),
            background: 70.0,
            contrast: 0.35,
            noise_std: 8.0,
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64| (0.0..=255.0).contains(&v);
        let (r0, r1) = self.radius_range;
        let (i0, i1) = self.intensity_range;
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("scene size must be positive".into()));
        }
        if !(r0 > 0.0 && r0 <= r1 && in_range(r1)) {
            return Err(Error::Config(format!("bad blob radius range {:?}", self.radius_range)));
        }
        if !(in_range(i0) && in_range(i1) && i0 <= i1) {
            return Err(Error::Config(format!("bad intensity range {:?}", self.intensity_range)));
        }
        if !in_range(self.background) || !(0.0..=255.0).contains(&self.noise_std) {
            return Err(Error::Config("background and noise must lie in [0, 255]".into()));
        }
        if !self.contrast.is_finite() {
            return Err(Error::Config("contrast must be finite".into()));
        }
        Ok(())
    }

    /// The same scene layout with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        SyntheticSceneSpec { seed, ..self.clone() }
    }
}

/// Generate one `(input, target)` pair, both raw 8-bit grids.
pub fn generate_synthetic_pair<T: Real>(spec: &SyntheticSceneSpec) -> Result<(Image<T>, Image<T>)> {
    spec.validate()?;
    let mut rng = substream(spec.seed, "synth");
    let (h, w) = (spec.height, spec.width);
    let mut clean = vec![0.0f64; h * w];
    for _ in 0..spec.num_blobs {
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        let r = uniform(&mut rng, spec.radius_range);
        let a = uniform(&mut rng, spec.intensity_range);
        let reach = (3.0 * r).ceil() as isize;
        let inv = 1.0 / (2.0 * r * r);
        let (y0, x0) = (cy.floor() as isize, cx.floor() as isize);
        for y in (y0 - reach).max(0)..(y0 + reach + 1).min(h as isize) {
            for x in (x0 - reach).max(0)..(x0 + reach + 1).min(w as isize) {
                let dy = y as f64 + 0.5 - cy;
                let dx = x as f64 + 0.5 - cx;
                clean[y as usize * w + x as usize] += a * (-(dy * dy + dx * dx) * inv).exp();
            }
        }
    }
    let noise = Normal::new(0.0, spec.noise_std.max(0.0)).expect("finite std");
    let quantize = |v: f64| (v + 0.5).floor().clamp(0.0, 255.0);
    let mut input = Vec::with_capacity(h * w);
    let mut target = Vec::with_capacity(h * w);
    for &c in &clean {
        let c = c.min(255.0);
        let n = if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        input.push(T::lit(quantize(spec.background + spec.contrast * c + n)));
        target.push(T::lit(quantize(c)));
    }
    Ok((Image::new(h, w, input, Domain::Raw)?, Image::new(h, w, target, Domain::Raw)?))
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(h: usize, w: usize, f: impl FnMut(usize, usize) -> f64) -> Image<f64> {
        Image::from_fn(h, w, Domain::Raw, f).unwrap()
    }

    #[test]
    fn overexpose_examples() {
        let x = raw(1, 2, |_, c| if c == 0 { 100.0 } else { 200.0 });
        let y = overexpose(&x, 1.5).unwrap();
        assert_eq!(y.data(), &[150.0, 255.0]);
        for f in OVEREXPOSURE_PRESETS {
            assert!(PerturbationSpec::new(PerturbationKind::Overexpose, f).is_ok());
        }
        assert!(overexpose(&x, 0.0).is_err());
        assert!(overexpose(&x, -1.0).is_err());
    }

    #[test]
    fn overexpose_rounds_half_up() {
        // 5 * 1.5 = 7.5 -> 8
        let x = raw(1, 1, |_, _| 5.0);
        assert_eq!(overexpose(&x, 1.5).unwrap().data(), &[8.0]);
    }

    #[test]
    fn gradient_examples() {
        let x = raw(2, 1024, |_, _| 0.0);
        let y = illumination_gradient(&x, 120.0).unwrap();
        assert_eq!(y.get(0, 0), 0.0);
        assert_eq!(y.get(1, 1023), 120.0);
        let x = raw(1, 8, |_, c| if c == 7 { 250.0 } else { 10.0 });
        let y = illumination_gradient(&x, 40.0).unwrap();
        assert_eq!(y.get(0, 7), 255.0);
        assert_eq!(y.get(0, 0), 10.0);
        assert!(illumination_gradient(&x, 256.0).is_err());
        assert!(illumination_gradient(&x, -1.0).is_err());
    }

    #[test]
    fn zoom_crop_geometry() {
        assert_eq!(zoom_crop(1024, 1.2), (85, 853));
        assert_eq!(zoom_crop(1024, 1.0001), (0, 1024));
    }

    #[test]
    fn near_unit_zoom_is_identity() {
        let x = raw(16, 16, |r, c| ((r * 13 + c * 7) % 256) as f64);
        assert_eq!(scale_zoom(&x, 1.0001).unwrap(), x);
        assert!(scale_zoom(&x, 1.0).is_err());
        assert!(scale_zoom(&x, 12.0).is_err());
    }

    #[test]
    fn scene_is_seed_deterministic() {
        let spec = SyntheticSceneSpec { height: 32, width: 32, seed: 9, ..Default::default() };
        let a = generate_synthetic_pair::<f32>(&spec).unwrap();
        let b = generate_synthetic_pair::<f32>(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_pair::<f32>(&spec.with_seed(10)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn scene_without_blobs_is_constant() {
        let spec = SyntheticSceneSpec { num_blobs: 0, height: 16, width: 16, ..Default::default() };
        let (_, target) = generate_synthetic_pair::<f64>(&spec).unwrap();
        assert!(target.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noiseless_scene_input_is_function_of_layout() {
        let spec = SyntheticSceneSpec {
            noise_std: 0.0,
            background: 0.0,
            height: 32,
            width: 32,
            ..Default::default()
        };
        let (input, target) = generate_synthetic_pair::<f64>(&spec).unwrap();
        let (input2, _) = generate_synthetic_pair::<f64>(&spec).unwrap();
        assert_eq!(input, input2);
        // zero background and no noise: the input is the scaled clean target
        for (i, t) in input.data().iter().zip(target.data()) {
            assert!((i - (spec.contrast * t)).abs() <= spec.contrast * 0.5 + 0.5);
        }
    }

    fn arb_image() -> impl Strategy<Value = Image<f64>> {
        (2usize..12, 2usize..12).prop_flat_map(|(h, w)| {
            proptest::collection::vec(0u8..=255, h * w).prop_map(move |v| {
                Image::new(h, w, v.into_iter().map(f64::from).collect(), Domain::Raw).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn overexpose_is_monotone_in_factor(x in arb_image(), a in 0.1f64..3.0, b in 0.1f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let yl = overexpose(&x, lo).unwrap();
            let yh = overexpose(&x, hi).unwrap();
            prop_assert!(yl.data().iter().zip(yh.data()).all(|(l, h)| l <= h));
            prop_assert!(yh.data().iter().all(|&v| (0.0..=255.0).contains(&v)));
        }

        #[test]
        fn gradient_offset_is_monotone_from_zero(x in arb_image(), m in 0.0f64..=255.0) {
            let zero = Image::filled(x.height(), x.width(), 0.0, Domain::Raw).unwrap();
            let y = illumination_gradient(&zero, m).unwrap();
            for r in 0..y.height() {
                prop_assert_eq!(y.get(r, 0), 0.0);
                for c in 1..y.width() {
                    prop_assert!(y.get(r, c) >= y.get(r, c - 1));
                }
            }
            let z = illumination_gradient(&x, m).unwrap();
            prop_assert!(z.data().iter().all(|&v| (0.0..=255.0).contains(&v)));
        }

        #[test]
        fn overexpose_commutes_with_flip(x in arb_image(), f in 0.1f64..3.0) {
            prop_assert_eq!(
                overexpose(&x.flip_horizontal(), f).unwrap(),
                overexpose(&x, f).unwrap().flip_horizontal()
            );
        }

        #[test]
        fn gradient_mirrors_under_flip(x in arb_image(), m in 0.0f64..=255.0) {
            let lhs = illumination_gradient(&x, m).unwrap().flip_horizontal();
            let rhs = illumination_gradient_dir(&x.flip_horizontal(), m, GradientDirection::RightToLeft).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        // Bilinear weights computed from opposite edges can differ in the
        // last ulp, which may move a value across a rounding boundary.
        #[test]
        fn zoom_commutes_with_flip_when_crop_is_centred(half in 4usize..24, zoom in 1.05f64..2.0) {
            let side = 2 * half;
            let (off, crop) = zoom_crop(side, zoom);
            prop_assume!(crop >= 2 && side - crop == 2 * off);
            let x = Image::from_fn(side, side, Domain::Raw, |r, c| ((r * 37 + c * 91) % 256) as f64).unwrap();
            let lhs = scale_zoom(&x.flip_horizontal(), zoom).unwrap();
            let rhs = scale_zoom(&x, zoom).unwrap().flip_horizontal();
            prop_assert!(lhs.data().iter().zip(rhs.data()).all(|(a, b)| (a - b).abs() <= 1.0));
        }

        #[test]
        fn perturbations_are_pure(x in arb_image(), f in 1.01f64..2.0) {
            for kind in [PerturbationKind::Scale, PerturbationKind::Overexpose, PerturbationKind::Gradient] {
                let magnitude = if kind == PerturbationKind::Gradient { f * 50.0 } else { f };
                let spec = PerturbationSpec { kind, magnitude };
                prop_assume!(spec.validate().is_ok());
                let a = spec.apply(&x);
                let b = spec.apply(&x);
                match (a, b) {
                    (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false, "nondeterministic outcome"),
                }
            }
        }
    }
}

#![allow(dead_code)]

pub mod oracles;
pub mod pipeline;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitadda::{Domain, Image};

/// 8-bit reference and a noisy, partly correlated prediction.
pub fn random_pair(seed: u64, side: usize) -> (Image<f64>, Image<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = side * side;
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..=255) as f64).collect();
    let mix: f64 = rng.random_range(0.0..1.0);
    let b: Vec<f64> = a
        .iter()
        .map(|&v| (mix * v + (1.0 - mix) * rng.random_range(0..=255) as f64).round().clamp(0.0, 255.0))
        .collect();
    (
        Image::new(side, side, a, Domain::Raw).unwrap(),
        Image::new(side, side, b, Domain::Raw).unwrap(),
    )
}

/// Largest absolute disagreement between library metrics and the oracles
/// over `count` random pairs, keyed by metric name.
pub fn metric_deviations(count: u64, side: usize) -> Vec<(&'static str, f64)> {
    use sitadda::metrics::{histogram_match, pearson, psnr, shannon_entropy, sharpness_stats, ssim, SsimConfig};
    let mut worst = [("pearson", 0.0f64), ("psnr", 0.0), ("ssim", 0.0), ("histogram_match", 0.0), ("entropy", 0.0), ("laplacian_variance", 0.0), ("rms_contrast", 0.0)];
    for seed in 0..count {
        let (y, p) = random_pair(seed, side);
        let (a, b) = (y.data(), p.data());
        let mut bump = |i: usize, d: f64| worst[i].1 = worst[i].1.max(if d.is_nan() { f64::INFINITY } else { d });
        bump(0, (pearson(&y, &p).unwrap() - oracles::pearson(a, b)).abs());
        let (lib, ora) = (psnr(&y, &p, 255.0).unwrap(), oracles::psnr(a, b, 255.0));
        bump(1, if lib == ora { 0.0 } else { (lib - ora).abs() });
        bump(2, (ssim(&y, &p, &SsimConfig::default()).unwrap() - oracles::ssim(a, b, side, side, 255.0)).abs());
        let matched = histogram_match(&p, &y).unwrap();
        let expected = oracles::histogram_match(b, a);
        bump(3, matched.data().iter().zip(&expected).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max));
        bump(4, (shannon_entropy(&p).unwrap() - oracles::entropy(b)).abs());
        let (lv, rc) = sharpness_stats(&p).unwrap();
        let (olv, orc) = oracles::sharpness(b, side, side);
        bump(5, (lv - olv).abs());
        bump(6, (rc - orc).abs());
    }
    worst.to_vec()
}

//! Brute-force metric references. Deliberately naive: direct double loops,
//! one-pass sums and O(n^2) ranking, sharing no code with the library.

#![allow(dead_code)]

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        sa += a[i];
        sb += b[i];
        sab += a[i] * b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
    }
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> f64 {
    let mut se = 0.0;
    for i in 0..a.len() {
        se += (a[i] - b[i]) * (a[i] - b[i]);
    }
    if se == 0.0 {
        return f64::INFINITY;
    }
    20.0 * peak.log10() - 10.0 * (se / a.len() as f64).log10()
}

/// Gaussian-weighted SSIM over every fully contained 11x11 window, with the
/// 2-D weights built directly rather than as two separable passes.
pub fn ssim(a: &[f64], b: &[f64], h: usize, w: usize, dynamic_range: f64) -> f64 {
    const N: usize = 11;
    let sigma: f64 = 1.5;
    let mut weights = [[0.0f64; N]; N];
    let mut total = 0.0;
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let mut sum = 0.0;
    let mut count = 0;
    for r in 0..=h - N {
        for c in 0..=w - N {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let k = weights[i][j] / total;
                    ma += k * a[(r + i) * w + c + j];
                    mb += k * b[(r + i) * w + c + j];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let k = weights[i][j] / total;
                    let da = a[(r + i) * w + c + j] - ma;
                    let db = b[(r + i) * w + c + j] - mb;
                    va += k * da * da;
                    vb += k * db * db;
                    cov += k * da * db;
                }
            }
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

/// Pixel `i` of the source receives the reference value whose rank equals
/// the number of source pixels ordered before it (ties broken by index).
pub fn histogram_match(src: &[f64], reference: &[f64]) -> Vec<f64> {
    let mut sorted = reference.to_vec();
    sorted.sort_by(f64::total_cmp);
    (0..src.len())
        .map(|i| {
            let rank = (0..src.len()).filter(|&j| src[j] < src[i] || (src[j] == src[i] && j < i)).count();
            sorted[rank]
        })
        .collect()
}

/// Entropy of 8-bit integer-valued pixels, natural log converted to bits.
pub fn entropy(x: &[f64]) -> f64 {
    let mut counts = std::collections::HashMap::new();
    for &v in x {
        *counts.entry(v as i64).or_insert(0usize) += 1;
    }
    let n = x.len() as f64;
    let nats: f64 = counts.values().map(|&c| -(c as f64 / n) * (c as f64 / n).ln()).sum();
    nats / std::f64::consts::LN_2
}

/// (variance of the interior 4-neighbour Laplacian, population std).
pub fn sharpness(x: &[f64], h: usize, w: usize) -> (f64, f64) {
    let mut lap = Vec::new();
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let v = x[(r - 1) * w + c] + x[(r + 1) * w + c] + x[r * w + c - 1] + x[r * w + c + 1] - 4.0 * x[r * w + c];
            lap.push(v);
        }
    }
    let var = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
    };
    (var(&lap), var(x).sqrt())
}

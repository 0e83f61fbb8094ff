//! Wilcoxon signed-rank test with Holm multiplicity control.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest sample size for which the null distribution is enumerated.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    /// `W+ - W-`: positive when `a` tends to exceed `b`.
    pub statistic: f64,
    pub p_value: f64,
    pub adjusted_p: f64,
    /// Nonzero differences that entered the ranking.
    pub n: usize,
    pub exact: bool,
}

fn midranks(abs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&i, &j| abs[i].partial_cmp(&abs[j]).expect("finite differences"));
    let mut ranks = vec![0.0; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test on paired samples (zero differences
/// dropped). The family of one makes `adjusted_p` equal to `p_value`.
pub fn paired_test(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 5 {
        return Err(Error::Data(format!("paired test needs at least 5 pairs, got {}", a.len())));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Data("paired test on non-finite scores".into()));
    }
    if diffs.is_empty() {
        return Err(Error::DegenerateTest);
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let statistic = 2.0 * w_plus - total;

    let (p, exact) = if n <= EXACT_MAX_N {
        (exact_p(&ranks, w_plus), true)
    } else {
        (normal_p(&ranks, w_plus), false)
    };
    let p = p.min(1.0);
    Ok(PairedTest { statistic, p_value: p, adjusted_p: p, n, exact })
}

// Enumerates the sign-flip distribution of W+ over doubled (integer) midranks.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let total: f64 = counts.iter().sum();
    let obs = (w_plus * 2.0).round() as usize;
    let upper: f64 = counts[obs..].iter().sum::<f64>() / total;
    let lower: f64 = counts[..=obs].iter().sum::<f64>() / total;
    2.0 * upper.min(lower)
}

fn normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut ties = 0.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2)
}

/// Holm step-down adjustment; output is in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].partial_cmp(&p[j]).expect("finite p-values"));
    let mut out = vec![0.0; m];
    let mut running = 0.0f64;
    for (k, &i) in order.iter().enumerate() {
        running = running.max(((m - k) as f64 * p[i]).min(1.0));
        out[i] = running;
    }
    out
}

/// One test per `(a, b)` pair, Holm-adjusted across the family.
pub fn paired_test_family(pairs: &[(&[f64], &[f64])]) -> Result<Vec<PairedTest>> {
    let mut tests = pairs.iter().map(|(a, b)| paired_test(a, b)).collect::<Result<Vec<_>>>()?;
    let adjusted = holm_adjust(&tests.iter().map(|t| t.p_value).collect::<Vec<_>>());
    for (t, adj) in tests.iter_mut().zip(adjusted) {
        t.adjusted_p = adj;
    }
    Ok(tests)
}

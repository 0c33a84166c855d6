//! Rank trend test and chi-square homogeneity test used by the Monte Carlo checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    /// Jonckheere–Terpstra statistic.
    pub statistic: f64,
    pub z: f64,
    /// One-sided p-value against an increasing trend across the ordered groups.
    pub p_increasing: f64,
}

fn tie_sums(values: &mut [f64]) -> (f64, f64, f64) {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < values.len() {
        let mut j = i + 1;
        while j < values.len() && values[j] == values[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        a += t * (t - 1.0) * (2.0 * t + 5.0);
        b += t * (t - 1.0) * (t - 2.0);
        c += t * (t - 1.0);
        i = j;
    }
    (a, b, c)
}

/// Jonckheere–Terpstra test with the tie-corrected null variance.
///
/// Groups are ordered; a small `p_increasing` is evidence that values grow with the
/// group index. With zero null variance (all values tied) the p-value is 1.
pub fn jonckheere_terpstra(groups: &[Vec<f64>]) -> TrendTest {
    let mut j_stat = 0.0;
    for (i, gi) in groups.iter().enumerate() {
        for gj in &groups[i + 1..] {
            for &x in gi {
                for &y in gj {
                    if y > x {
                        j_stat += 1.0;
                    } else if y == x {
                        j_stat += 0.5;
                    }
                }
            }
        }
    }
    let sizes: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
    let n: f64 = sizes.iter().sum();
    let mean = (n * n - sizes.iter().map(|s| s * s).sum::<f64>()) / 4.0;
    let mut all: Vec<f64> = groups.iter().flatten().copied().collect();
    let (ta, tb, tc) = tie_sums(&mut all);
    let ga: f64 = sizes.iter().map(|s| s * (s - 1.0) * (2.0 * s + 5.0)).sum();
    let gb: f64 = sizes.iter().map(|s| s * (s - 1.0) * (s - 2.0)).sum();
    let gc: f64 = sizes.iter().map(|s| s * (s - 1.0)).sum();
    let base = n * (n - 1.0) * (2.0 * n + 5.0) / 72.0;
    let mut var = base - (ga + ta) / 72.0;
    if n > 2.0 {
        var += gb * tb / (36.0 * n * (n - 1.0) * (n - 2.0));
    }
    if n > 1.0 {
        var += gc * tc / (8.0 * n * (n - 1.0));
    }
    // Full ties cancel the variance only up to rounding.
    if var <= 1e-9 * base.max(1.0) {
        return TrendTest {
            statistic: j_stat,
            z: 0.0,
            p_increasing: 1.0,
        };
    }
    let z = (j_stat - mean) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    TrendTest {
        statistic: j_stat,
        z,
        p_increasing: 1.0 - normal.cdf(z),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson homogeneity test of two count vectors over the same categories.
/// Categories empty in both samples are dropped.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> ChiSquareTest {
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    let total = na + nb;
    let mut stat = 0.0;
    let mut cats: usize = 0;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cats += 1;
        for (obs, rows) in [(x as f64, na), (y as f64, nb)] {
            let exp = rows * col / total;
            if exp > 0.0 {
                stat += (obs - exp).powi(2) / exp;
            }
        }
    }
    let dof = cats.saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat)
    };
    ChiSquareTest {
        statistic: stat,
        dof,
        p_value,
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

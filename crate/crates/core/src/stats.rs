//! Small statistics toolkit shared by the experiments.

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_sorted(&sorted(xs), 0.5)
}

pub fn iqr(xs: &[f64]) -> f64 {
    let s = sorted(xs);
    quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return Err(Error::Degenerate(format!("need at least two paired points, got {n}")));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all abscissae equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit { slope, intercept, slope_se })
}

/// Percentile bootstrap interval of `stat` at level `1 - 2 * tail`.
pub fn bootstrap_ci<R, F>(xs: &[f64], resamples: usize, tail: f64, rng: &mut R, mut stat: F) -> (f64, f64)
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let n = xs.len();
    let mut buf = vec![0.0; n];
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = xs[rng.gen_range(0..n)];
        }
        let s = stat(&buf);
        if s.is_finite() {
            stats.push(s);
        }
    }
    if stats.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let s = sorted(&stats);
    (quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail))
}

pub fn lag1_correlation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let num: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let den: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    num / den
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rx = ranks(xs);
    let ry = ranks(ys);
    let mx = mean(&rx);
    let my = mean(&ry);
    let num: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let dx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let dy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    num / (dx * dy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson goodness-of-fit. Cells with expected count below `min_expected` are pooled
/// from the right into a tail cell, which receives the remaining probability mass.
pub fn chi_square_gof(counts: &[u64], probs: &[f64], min_expected: f64) -> Result<ChiSquareTest> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Degenerate("no observations".into()));
    }
    let n = total as f64;
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let mut used_p = 0.0;
    let mut used_c = 0u64;
    for (i, &p) in probs.iter().enumerate() {
        if n * p < min_expected || n * (1.0 - used_p - p) < min_expected {
            break;
        }
        let c = counts.get(i).copied().unwrap_or(0);
        obs.push(c as f64);
        exp.push(n * p);
        used_p += p;
        used_c += c;
    }
    obs.push((total - used_c) as f64);
    exp.push(n * (1.0 - used_p).max(0.0));
    if obs.len() < 2 {
        return Err(Error::Degenerate("fewer than two usable cells".into()));
    }
    let statistic: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = obs.len() - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(statistic);
    Ok(ChiSquareTest { statistic, dof, p_value, bins: obs.len() })
}

/// Total variation distance between two histograms over a common support.
pub fn histogram_tv(a: &[u64], b: &[u64]) -> f64 {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let len = a.len().max(b.len());
    0.5 * (0..len)
        .map(|i| {
            let pa = a.get(i).copied().unwrap_or(0) as f64 / na as f64;
            let pb = b.get(i).copied().unwrap_or(0) as f64 / nb as f64;
            (pa - pb).abs()
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantiles_and_iqr() {
        let xs: Vec<f64> = (1..=5).map(f64::from).collect();
        assert_eq!(median(&xs), 3.0);
        assert_eq!(iqr(&xs), 2.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 5.0);
    }

    #[test]
    fn exact_line_fit() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!(f.slope_se < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn spearman_monotone_and_ties() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&xs, &[10.0, 20.0, 30.0, 45.0]) - 1.0).abs() < 1e-14);
        assert!((spearman(&xs, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-14);
        assert_eq!(ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn chi_square_accepts_exact_counts() {
        let probs = [0.5, 0.25, 0.125, 0.125];
        let t = chi_square_gof(&[500, 250, 125, 125], &probs, 5.0).unwrap();
        assert!(t.statistic.abs() < 1e-12);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        let bad = chi_square_gof(&[800, 100, 50, 50], &probs, 5.0).unwrap();
        assert!(bad.p_value < 1e-6);
    }

    #[test]
    fn bootstrap_covers_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
        let (lo, hi) = bootstrap_ci(&xs, 300, 0.005, &mut rng, mean);
        assert!(lo < 0.5 && 0.5 < hi && hi - lo < 0.1);
    }

    #[test]
    fn tv_of_identical_histograms_is_zero() {
        assert_eq!(histogram_tv(&[1, 2, 3], &[2, 4, 6]), 0.0);
        assert!((histogram_tv(&[1, 0], &[0, 1]) - 1.0).abs() < 1e-15);
    }
}

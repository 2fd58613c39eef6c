//! Small statistics helpers used across the experiment harness.

use crate::error::{ensure_all_finite, Error, Result};

/// z value for two-sided 95% intervals.
pub const Z_95: f64 = 1.959_963_984_540_054;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; NaN for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Empirical q-quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Parameter("quantile of empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Parameter(format!("quantile q = {q} outside [0, 1]")));
    }
    ensure_all_finite("quantile input", xs)?;
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Median via [`quantile`]; panics only on empty/non-finite input misuse.
pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5).expect("median input")
}

/// Median absolute deviation (no consistency factor).
pub fn mad(xs: &[f64]) -> f64 {
    let m = median(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m).abs()).collect();
    median(&dev)
}

/// Wilson 95% score interval for a binomial proportion.
///
/// Behaves sensibly at the boundaries: successes = 0 gives a lower bound of
/// exactly 0, successes = n gives an upper bound of exactly 1.
pub fn wilson_ci(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    // At the boundaries center == half exactly in real arithmetic; pin the
    // result so roundoff cannot leak a nonzero lower bound.
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Ordinary least-squares slope and intercept of y on x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("linear_fit: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Parameter("linear_fit needs at least 2 points".into()));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("linear_fit: x has zero variance".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Standard normal upper-tail probability Q(x) = P(Z > x).
///
/// Abramowitz-Stegun 7.1.26 style rational approximation through erfc;
/// absolute error below 1.5e-7, plenty for p-value reporting.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// One-sided paired sign test that `improved` beats `regressed`.
///
/// Takes the discordant-pair counts (b = improved, c = regressed) and returns
/// the p-value of seeing at least `b` improvements among b + c discordant
/// pairs under the null that both directions are equally likely. Exact
/// binomial tail for small counts, normal approximation with continuity
/// correction otherwise.
pub fn paired_sign_test(improved: u64, regressed: u64) -> f64 {
    let n = improved + regressed;
    if n == 0 {
        return 1.0;
    }
    if n <= 64 {
        // Exact tail: sum_{k >= improved} C(n, k) / 2^n.
        let mut tail = 0.0f64;
        for k in improved..=n {
            tail += binom_ln(n, k).exp();
        }
        return (tail / 2f64.powi(n as i32)).min(1.0);
    }
    let mean = n as f64 / 2.0;
    let sd = (n as f64 / 4.0).sqrt();
    normal_sf((improved as f64 - 0.5 - mean) / sd)
}

fn binom_ln(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Classification tallies for a batch of threshold decisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn add(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn tnr(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    /// Mean of TPR and TNR; robust to class imbalance.
    pub fn balanced_accuracy(&self) -> f64 {
        0.5 * (self.tpr() + self.tnr())
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return f64::NAN;
        }
        2.0 * self.tp as f64 / denom as f64
    }
}

fn ratio(num: u64, denom: u64) -> f64 {
    if denom == 0 {
        f64::NAN
    } else {
        num as f64 / denom as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&xs, 1.0).unwrap(), 4.0);
        assert!((quantile(&xs, 0.5).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn quantile_rejects_bad_input() {
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&[1.0], 1.5).is_err());
        assert!(quantile(&[f64::NAN], 0.5).is_err());
    }

    #[test]
    fn wilson_boundaries() {
        let (lo, hi) = wilson_ci(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_ci(100, 100);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.95);
    }

    #[test]
    fn wilson_covers_half() {
        let (lo, hi) = wilson_ci(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
        assert!((hi - lo) < 0.21);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (slope, intercept) = linear_fit(&x, &y).unwrap();
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((intercept + 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_sf_reference_points() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-7);
        assert!((normal_sf(1.959_964) - 0.025).abs() < 1e-5);
        assert!((normal_sf(-1.0) - 0.841_344_7).abs() < 1e-5);
    }

    #[test]
    fn sign_test_small_counts_exact() {
        // 5 improvements, 0 regressions: p = 2^-5 = 0.03125.
        let p = paired_sign_test(5, 0);
        assert!((p - 0.03125).abs() < 1e-12, "p = {p}");
        assert_eq!(paired_sign_test(0, 0), 1.0);
    }

    #[test]
    fn sign_test_large_counts_significant() {
        let p = paired_sign_test(300, 100);
        assert!(p < 1e-10, "p = {p}");
    }

    #[test]
    fn counts_metrics() {
        let mut c = Counts::default();
        for _ in 0..90 {
            c.add(true, true);
        }
        for _ in 0..10 {
            c.add(false, true);
        }
        for _ in 0..95 {
            c.add(false, false);
        }
        for _ in 0..5 {
            c.add(true, false);
        }
        assert!((c.tpr() - 0.9).abs() < 1e-12);
        assert!((c.fpr() - 0.05).abs() < 1e-12);
        assert!((c.balanced_accuracy() - 0.925).abs() < 1e-12);
        assert!(c.f1() > 0.9);
    }

    #[test]
    fn mad_of_constant_is_zero() {
        assert_eq!(mad(&[3.0, 3.0, 3.0]), 0.0);
    }
}

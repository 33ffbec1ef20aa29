//! Statistical utilities used to validate simulator output: summary
//! statistics with standard errors, Wilson score intervals for proportions,
//! Kolmogorov–Smirnov distances with asymptotic critical values, and
//! least-squares fits on log scales.

use crate::math;
use crate::{Error, Result};

/// Two-sided normal quantile for 95% coverage.
pub const Z_95: f64 = 1.959_963_984_540_054;
/// Two-sided normal quantile for 99% coverage.
pub const Z_99: f64 = 2.575_829_303_548_9;

/// Count, mean, unbiased sample variance and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
}

impl SummaryStats {
    /// Symmetric normal confidence interval `mean ± z·se`.
    pub fn mean_ci(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.se, self.mean + z * self.se)
    }
}

/// Two-pass mean/variance summary.  Errors on an empty slice.
pub fn summarize(xs: &[f64]) -> Result<SummaryStats> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("summarize requires data"));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let variance = if xs.len() < 2 {
        0.0
    } else {
        xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    };
    Ok(SummaryStats {
        count: xs.len(),
        mean,
        variance,
        se: math::sqrt(variance / n),
    })
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::InsufficientData("wilson interval requires trials"));
    }
    if successes > trials {
        return Err(Error::InvalidInput("successes exceed trials"));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * math::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

/// Sort a sample in place (total order; NaNs would sort last but are
/// rejected).
fn sort_checked(xs: &mut [f64]) -> Result<()> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("sample contains NaN"));
    }
    xs.sort_unstable_by(f64::total_cmp);
    Ok(())
}

/// Two-sided one-sample Kolmogorov–Smirnov statistic
/// `D = sup_x |F_n(x) - F(x)|` against the CDF `cdf`.  Sorts its input.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &mut [f64], cdf: F) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("KS requires data"));
    }
    sort_checked(xs)?;
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let lo = f - i as f64 / n;
        let hi = (i + 1) as f64 / n - f;
        d = d.max(lo).max(hi);
    }
    Ok(d)
}

/// One-sided statistic `D⁺ = sup_x (F_n(x) - F(x))`: detects the empirical
/// distribution sitting above the reference, i.e. the sample being
/// stochastically *smaller*.  Sorts its input.
pub fn ks_one_sample_plus<F: Fn(f64) -> f64>(xs: &mut [f64], cdf: F) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("KS requires data"));
    }
    sort_checked(xs)?;
    let n = xs.len() as f64;
    let mut d = f64::MIN;
    for (i, &x) in xs.iter().enumerate() {
        d = d.max((i + 1) as f64 / n - cdf(x));
    }
    Ok(d.max(0.0))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) - F_b(x)|`.
/// Sorts both inputs.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("KS requires data in both samples"));
    }
    sort_checked(a)?;
    sort_checked(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max(math::abs(i as f64 / na - j as f64 / nb));
    }
    Ok(d)
}

/// Asymptotic two-sided one-sample KS critical value at level `alpha`:
/// `sqrt(-ln(alpha/2)/2) / sqrt(n)`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    math::sqrt(-math::ln(alpha / 2.0) / 2.0) / math::sqrt(n as f64)
}

/// Asymptotic one-sided KS critical value at level `alpha`:
/// `sqrt(-ln(alpha)/2) / sqrt(n)`.
pub fn ks_critical_one_sided(alpha: f64, n: usize) -> f64 {
    math::sqrt(-math::ln(alpha) / 2.0) / math::sqrt(n as f64)
}

/// Asymptotic two-sample KS critical value at level `alpha` for sample sizes
/// `n` and `m`.
pub fn ks_two_sample_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    math::sqrt(-math::ln(alpha / 2.0) / 2.0) * math::sqrt((n + m) / (n * m))
}

/// Ordinary least squares line fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `y = slope·x + intercept`.  Requires at least two
/// distinct x values.  `r_squared` is 1 for an exact fit (including constant
/// data fitted exactly).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput("fit inputs differ in length"));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData("fit requires at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("fit requires distinct x values"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|&y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Harmonic number `H_n = 1 + 1/2 + … + 1/n` (0 for `n = 0`), summed from
/// the small end for accuracy.
pub fn harmonic(n: u64) -> f64 {
    let mut h = 0.0;
    for k in (1..=n).rev() {
        h += 1.0 / k as f64;
    }
    h
}

//! Closed-form and numerically exact quantities for the star-graph epidemic:
//! the distribution of how many of `a` infected leaves outlive the root's
//! immune span, the resulting round-failure probability, series and bounds
//! used by the survival-time analysis, the single-leaf transition semigroup,
//! and exact mean survival times via linear solves on the lumped chain.

mod linalg;
mod oracle;

pub use linalg::{expm3, lu_factor, LuFactors};
pub use oracle::{exact_mean_survival, exact_survival_profile, OracleProfile, OracleSolution};

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

const PI: f64 = core::f64::consts::PI;
const LN_2PI_HALF: f64 = 0.918_938_533_204_672_7; // ln(2*pi)/2

/// Lanczos approximation (g = 7, 9 terms), with reflection below 1/2.
/// Relative accuracy is ~1e-14 on the positive axis.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn ln_gamma_core(x: f64) -> f64 {
    // Valid for x >= 0.5.
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + 7.5;
    LN_2PI_HALF + (z + 0.5) * math::ln(t) - t + math::ln(acc)
}

/// Natural log of the gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(
            "ln_gamma requires a positive finite argument",
        ));
    }
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
        Ok(math::ln(PI / math::sin(PI * x)) - ln_gamma_core(1.0 - x))
    } else {
        Ok(ln_gamma_core(x))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(
            "alpha must be positive and finite",
        ));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(
            "lambda must be positive and finite",
        ));
    }
    Ok(())
}

/// Largest `a` for which [`immunity_survival_pmf`] will allocate its table.
pub const PMF_MAX_A: u32 = 10_000_000;

/// `p(0) = alpha * Gamma(alpha) * Gamma(a+1) / Gamma(alpha+a+1)`, the chance
/// that none of the `a` leaves outlives the immune span; successive terms
/// follow the exact ratio `p(b+1)/p(b) = (b+alpha)/(b+1)`.
fn pmf_first_term(a: u32, alpha: f64) -> Result<f64> {
    let ln_p0 = math::ln(alpha) + ln_gamma(alpha)? + ln_gamma(f64::from(a) + 1.0)?
        - ln_gamma(alpha + f64::from(a) + 1.0)?;
    Ok(math::exp(ln_p0))
}

/// Distribution of the number of leaves still infected when the root's
/// immunity ends.
///
/// Start a round's immune phase with `a` infected leaves; each recovers at
/// rate 1 while the immune span is `Exp(alpha)`.  The returned vector has
/// length `a + 1`; entry `b` is
///
/// ```text
/// p(b) = alpha * C(a, b) * B(b + alpha, a - b + 1)
///      = alpha * (Gamma(a+1) / Gamma(alpha+a+1)) * (Gamma(b+alpha) / Gamma(b+1))
/// ```
///
/// computed by a forward recurrence in `b` (exact positive ratios, no
/// cancellation).  For `a = 0` the distribution is a point mass at 0.
pub fn immunity_survival_pmf(a: u32, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if a > PMF_MAX_A {
        return Err(Error::Capacity("pmf table would be too large"));
    }
    if a == 0 {
        let mut v = Vec::with_capacity(1);
        v.push(1.0);
        return Ok(v);
    }
    let mut pmf = Vec::with_capacity(a as usize + 1);
    let mut term = pmf_first_term(a, alpha)?;
    pmf.push(term);
    for b in 0..a {
        term *= (f64::from(b) + alpha) / (f64::from(b) + 1.0);
        pmf.push(term);
    }
    Ok(pmf)
}

/// Probability that a round fails, given that `a` leaves were infected when
/// the root recovered.
///
/// Each leaf alive when immunity ends fails, independently, to reinfect the
/// root with probability `1/(1+lambda)` (its recovery clock beats the edge's
/// infection clock), so
///
/// ```text
/// p_fail(a) = sum_b p(b) * (1+lambda)^(-b)
/// ```
///
/// with `p` the distribution of [`immunity_survival_pmf`].  Equals 1 at
/// `a = 0`, and is strictly decreasing in both `a` and `lambda`.
pub fn round_failure_prob(a: u32, lambda: f64, alpha: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_alpha(alpha)?;
    if a == 0 {
        return Ok(1.0);
    }
    let q = 1.0 / (1.0 + lambda);
    let mut term = pmf_first_term(a, alpha)?;
    let mut sum = term;
    for b in 0..a {
        term *= q * (f64::from(b) + alpha) / (f64::from(b) + 1.0);
        sum += term;
    }
    Ok(sum)
}

/// Truncated evaluation of the series `S_alpha(x) = sum_{b>=0}
/// Gamma(b+alpha)/Gamma(b+1) * x^b` for `0 < x < 1`, with relative error at
/// most `tol`.
///
/// Terms follow the ratio `x (b+alpha)/(b+1)`; once that ratio `q` drops
/// below 1 (immediately for `alpha <= 1`, since by Gautschi's inequality the
/// term ratios are then bounded by `x`), the tail after term `b` is at most
/// `t_b * q/(1-q)`, which drives the stopping rule.
pub fn gautschi_series(alpha: f64, x: f64, tol: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidParameter(
            "series requires 0 < x < 1",
        ));
    }
    if !(tol >= 1e-14 && tol < 0.5) {
        return Err(Error::InvalidParameter(
            "tolerance must lie in [1e-14, 0.5)",
        ));
    }
    let mut term = math::exp(ln_gamma(alpha)?);
    let mut sum = term;
    let mut b = 0u64;
    const MAX_TERMS: u64 = 100_000_000;
    loop {
        // Ratio envelope for all terms after index b: increasing towards x
        // when alpha <= 1, decreasing from the current value otherwise.
        let q = if alpha <= 1.0 {
            x
        } else {
            x * (b as f64 + alpha) / (b as f64 + 1.0)
        };
        if q < 1.0 {
            let tail_bound = term * q / (1.0 - q);
            if tail_bound <= tol * sum {
                return Ok(sum);
            }
        }
        term *= x * (b as f64 + alpha) / (b as f64 + 1.0);
        sum += term;
        b += 1;
        if b > MAX_TERMS {
            return Err(Error::Capacity("series did not converge"));
        }
    }
}

/// Chernoff-style tail bound for a sum of exponentials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaTailBound {
    /// The threshold `(1+t) * n / rate` the bound refers to.
    pub threshold: f64,
    /// `P(sum of n iid Exp(rate) >= threshold) <= ((1+t) e^{-t})^n`.
    pub bound: f64,
}

/// Tail bound `P(Gamma(n, rate) >= (1+t) n / rate) <= ((1+t) e^{-t})^n`.
pub fn gamma_tail_bound(n: u64, rate: f64, t: f64) -> Result<GammaTailBound> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one summand"));
    }
    check_lambda(rate).map_err(|_| Error::InvalidParameter("rate must be positive and finite"))?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter("t must be non-negative and finite"));
    }
    let threshold = (1.0 + t) * n as f64 / rate;
    let bound = math::exp(n as f64 * (math::ln_1p(t) - t));
    Ok(GammaTailBound { threshold, bound })
}

/// Expected maximum of `n` iid exponentials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaxExponentials {
    /// Exact value `H_n / rate`.
    pub mean: f64,
    /// The simple envelope `(1 + ln n) / rate` (equality at `n = 1`).
    pub upper_bound: f64,
}

/// `E[max of n iid Exp(rate)] = H_n / rate <= (1 + ln n) / rate`.
pub fn expected_max_exponentials(n: u64, rate: f64) -> Result<MaxExponentials> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one exponential"));
    }
    check_lambda(rate).map_err(|_| Error::InvalidParameter("rate must be positive and finite"))?;
    Ok(MaxExponentials {
        mean: crate::stats::harmonic(n) / rate,
        upper_bound: (1.0 + math::ln(n as f64)) / rate,
    })
}

/// Transition semigroup of a single leaf whose root never stops being
/// infected: states ordered (S, I, R), generator rows
/// `S: (-lambda, lambda, 0)`, `I: (0, -1, 1)`, `R: (alpha, 0, -alpha)`.
/// Returns `exp(x G)` (row-stochastic).
pub fn leaf_transition_matrix(x: f64, lambda: f64, alpha: f64) -> Result<[[f64; 3]; 3]> {
    check_lambda(lambda)?;
    check_alpha(alpha)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter("time must be non-negative and finite"));
    }
    let g = [
        -lambda * x,
        lambda * x,
        0.0,
        0.0,
        -x,
        x,
        alpha * x,
        0.0,
        -alpha * x,
    ];
    let e = expm3(&g);
    Ok([
        [e[0], e[1], e[2]],
        [e[3], e[4], e[5]],
        [e[6], e[7], e[8]],
    ])
}

/// Stable evaluation of `g(u, s) = (e^{u s} - 1) / u` (equal to `s` at
/// `u = 0`), switching to a Taylor expansion for small `|u| s`.
fn exp_ratio(u: f64, s: f64) -> f64 {
    let us = u * s;
    if math::abs(us) > 1e-5 {
        math::exp_m1(us) / u
    } else {
        s * (1.0 + us / 2.0 + us * us / 6.0 + us * us * us / 24.0)
    }
}

/// `h(u, s) = d/du g(u, s) = (s e^{u s} - g(u, s)) / u`, i.e. the integral
/// of `t e^{u t}` over `[0, s]`, with a series branch for small `|u| s`.
fn exp_ratio_derivative(u: f64, s: f64) -> f64 {
    let us = u * s;
    if math::abs(us) > 1e-4 {
        (s * math::exp(us) - exp_ratio(u, s)) / u
    } else {
        let s2 = s * s;
        s2 * (0.5 + us / 3.0 + us * us / 8.0 + us * us * us / 30.0)
    }
}

/// `P(H <= x < H + Q)` for independent `H ~ Exp(lambda)`, `Q ~ Exp(1)`: the
/// chance that a single infection attempt lands within a window of length
/// `x` and outlives it.  Equals `lambda (e^{-lambda x} - e^{-x})/(1-lambda)`
/// with the continuous limit `x e^{-x}` at `lambda = 1`.
pub fn single_hop_window_prob(x: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter("window must be non-negative and finite"));
    }
    Ok(math::exp(-x) * lambda * exp_ratio(1.0 - lambda, x))
}

/// `P(D + H <= x < D + H + Q)` for independent `D ~ Exp(alpha)`,
/// `H ~ Exp(lambda)`, `Q ~ Exp(1)`: a de-immunization followed by an
/// infection attempt that lands in the window and outlives it.  All the
/// coincident-rate limits (`lambda = 1`, `alpha = 1`, `lambda = alpha`) are
/// handled by series branches of the shared kernel.
pub fn deimmunize_hop_window_prob(x: f64, lambda: f64, alpha: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_alpha(alpha)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter("window must be non-negative and finite"));
    }
    let u = 1.0 - alpha;
    let v = 1.0 - lambda;
    // Divided difference (g(u,x) - g(v,x)) / (u - v), collapsing to
    // dg/du at the midpoint when the rates (nearly) coincide.
    let dd = if math::abs(u - v) > 1e-6 {
        (exp_ratio(u, x) - exp_ratio(v, x)) / (u - v)
    } else {
        exp_ratio_derivative(0.5 * (u + v), x)
    };
    Ok(math::exp(-x) * alpha * lambda * dd)
}

/// The non-immune floor constant `B(alpha) = min(alpha / (16 (alpha+1)^2),
/// e^{-alpha} / 8)`: with high probability the non-immune fraction of leaves
/// never drops below it.
pub fn prop_s_constant(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let a = alpha / (16.0 * (alpha + 1.0) * (alpha + 1.0));
    let b = math::exp(-alpha) / 8.0;
    Ok(a.min(b))
}

/// Rate of the conditioned race: for independent `xi ~ Exp(a)`,
/// `eta ~ Exp(b)`, the law of `xi` given `xi < eta` is `Exp(a + b)`.
pub fn conditioned_exponential_rate(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() || !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidParameter("rates must be positive and finite"));
    }
    Ok(a + b)
}

/// The predicted survival-time scale `((lambda^2 n) / (lambda+1)^2)^alpha +
/// ln n` that mean survival times are compared against.  The leafless
/// boundary `n = 0` returns 1, the exact mean survival (a lone root dies at
/// a unit-rate exponential), keeping the yardstick positive everywhere.
pub fn survival_scale(n: u32, lambda: f64, alpha: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_alpha(alpha)?;
    if n == 0 {
        return Ok(1.0);
    }
    let nf = f64::from(n);
    let base = lambda * lambda * nf / ((lambda + 1.0) * (lambda + 1.0));
    Ok(math::pow(base, alpha) + math::ln(nf))
}

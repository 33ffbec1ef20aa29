//! Replica orchestration, deterministic aggregation, and statistical audits.
//!
//! An experiment is a grid of [`PointSpec`]s.  Replica `r` of point `p`
//! always draws its randomness from the stream addressed by
//! `(master_seed, p, r)`, so results are reproducible run-to-run and
//! independent of execution order; [`aggregate_point`] reduces samples in
//! replica order, which keeps aggregates bit-identical however the replicas
//! were scheduled.
//!
//! The audits turn the model's structural laws into measurements:
//!
//! * [`fit_exponent`] — in the regime where the polynomial term
//!   `(lambda^2 n / (lambda+1)^2)^alpha` dominates `ln n`, the log–log slope
//!   of mean survival time against that term estimates `alpha`.
//! * [`empirical_round_failure`] — round failures from `a` infected leaves
//!   at root recovery, measured by direct conditional simulation, against
//!   the closed form.
//! * [`conditioned_gap_check`] — the mean reinfection gap from a
//!   deimmunized root with `b` infected leaves against its
//!   `[1/((lambda+1) b), 1/(lambda b)]` envelope.
//! * [`audit_floor`] — the susceptible-leaf floor: runs should essentially
//!   never drive the non-immune fraction below the variant's constant.
//! * [`audit_coupling`] / [`audit_sustained_failures`] — the coupling and
//!   restart constructions of [`crate::coupling`], checked in bulk.
//! * [`compare_engines`] — the two simulation engines sample the same law.

use alloc::vec::Vec;

use crate::analytics;
use crate::coupling::{run_coupled_xy, run_sustained, DEFAULT_ROUND_CAP};
use crate::process::{
    race_to_reinfection, run_survival, EngineKind, ProcessParams, RunOptions, StarState,
    SurvivalSample, Variant, VertexState,
};
use crate::rng::SeedSpec;
use crate::stats::{self, SummaryStats};
use crate::{math, Error, Result};

/// Default dominance requirement for [`fit_exponent`]: the polynomial term
/// must exceed this multiple of `ln n` for a point to enter the fit.
pub const DEFAULT_DOMINANCE_FACTOR: f64 = 2.0;

/// One grid point of a survival experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointSpec {
    pub n: u32,
    pub lambda: f64,
    pub alpha: f64,
    pub variant: Variant,
    pub engine: EngineKind,
    pub replicas: u64,
    pub horizon: f64,
}

impl PointSpec {
    pub fn params(&self) -> Result<ProcessParams> {
        ProcessParams::new(self.n, self.lambda, self.alpha, self.variant)
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            horizon: self.horizon,
            ..RunOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.options().validate()?;
        if self.replicas == 0 {
            return Err(Error::InvalidParameter("a point needs replicas"));
        }
        Ok(())
    }
}

/// Aggregated estimates at one grid point.  Survival statistics are over
/// uncensored replicas only.
#[derive(Clone, Copy, Debug)]
pub struct PointResult {
    pub index: u64,
    pub spec: PointSpec,
    pub tau: SummaryStats,
    pub psi: SummaryStats,
    pub min_non_immune: SummaryStats,
    pub censored: u64,
    /// Predicted scale `(lambda^2 n / (lambda+1)^2)^alpha + ln n`.
    pub scale: f64,
}

impl PointResult {
    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.spec.replicas as f64
    }

    /// Censoring above one percent makes survival means untrustworthy.
    pub fn censoring_acceptable(&self) -> bool {
        self.censored_fraction() <= 0.01
    }
}

/// The random stream for replica `replica` of grid point `point_index`.
pub fn replica_seed(master_seed: u64, point_index: u64, replica: u64) -> Result<SeedSpec> {
    SeedSpec::with_path(master_seed, &[point_index, replica])
}

/// Run a single replica of a point.
pub fn run_replica(
    spec: &PointSpec,
    master_seed: u64,
    point_index: u64,
    replica: u64,
) -> Result<SurvivalSample> {
    let seed = replica_seed(master_seed, point_index, replica)?;
    let out = run_survival(&spec.params()?, &seed, spec.engine, &spec.options())?;
    Ok(out.sample)
}

/// Reduce one point's samples (in replica order) to a [`PointResult`].
/// The reduction order is fixed, so parallel replica execution still yields
/// bit-identical aggregates.
pub fn aggregate_point(
    index: u64,
    spec: &PointSpec,
    samples: &[SurvivalSample],
) -> Result<PointResult> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples to aggregate"));
    }
    let censored = samples.iter().filter(|s| s.censored).count() as u64;
    let kept: Vec<&SurvivalSample> = samples.iter().filter(|s| !s.censored).collect();
    if kept.is_empty() {
        return Err(Error::InsufficientData("every replica was censored"));
    }
    let taus: Vec<f64> = kept.iter().map(|s| s.tau).collect();
    let psis: Vec<f64> = kept.iter().map(|s| f64::from(s.psi)).collect();
    let mins: Vec<f64> = kept.iter().map(|s| s.min_non_immune_fraction).collect();
    Ok(PointResult {
        index,
        spec: *spec,
        tau: stats::summarize(&taus)?,
        psi: stats::summarize(&psis)?,
        min_non_immune: stats::summarize(&mins)?,
        censored,
        scale: analytics::survival_scale(spec.n, spec.lambda, spec.alpha)?,
    })
}

/// Run all replicas of one point sequentially and aggregate.
pub fn run_point(index: u64, spec: &PointSpec, master_seed: u64) -> Result<PointResult> {
    spec.validate()?;
    let mut samples = Vec::with_capacity(spec.replicas as usize);
    for replica in 0..spec.replicas {
        samples.push(run_replica(spec, master_seed, index, replica)?);
    }
    aggregate_point(index, spec, &samples)
}

/// Run a whole grid sequentially; point `i` uses point index `i`.
pub fn run_grid(specs: &[PointSpec], master_seed: u64) -> Result<Vec<PointResult>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| run_point(i as u64, spec, master_seed))
        .collect()
}

/// Which grid variable drives an exponent fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMode {
    /// `lambda` varies at a common `n`.
    VaryLambdaFixedN,
    /// `n` varies at a common `lambda`.
    VaryNFixedLambda,
}

/// Log–log exponent fit over the polynomial-dominated points.
#[derive(Clone, Copy, Debug)]
pub struct ExponentFit {
    /// Estimated exponent (the slope; tracks `alpha`).
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Points that passed the dominance filter / points offered.
    pub used: usize,
    pub total: usize,
}

/// Fit `ln(mean tau) = slope * ln(lambda^2 n) + intercept` over the points
/// whose polynomial term dominates the additive log:
/// `(lambda^2 n)^alpha >= dominance_factor * ln n`.  In that regime the
/// slope estimates the common `alpha` of the fitted points.  The mode names
/// the driven variable and is validated: the other one must be constant
/// across the offered points.
pub fn fit_exponent(
    points: &[PointResult],
    mode: FitMode,
    dominance_factor: f64,
) -> Result<ExponentFit> {
    if !(dominance_factor > 0.0) || !dominance_factor.is_finite() {
        return Err(Error::InvalidParameter("dominance factor must be positive"));
    }
    if let Some(first) = points.first() {
        let homogeneous = points.iter().all(|p| match mode {
            FitMode::VaryLambdaFixedN => p.spec.n == first.spec.n,
            FitMode::VaryNFixedLambda => p.spec.lambda == first.spec.lambda,
        });
        if !homogeneous {
            return Err(Error::InvalidInput(
                "the fit mode's fixed variable differs across points",
            ));
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut alpha = None;
    for p in points {
        let s = &p.spec;
        let drive = s.lambda * s.lambda * f64::from(s.n);
        if !(drive > 0.0) {
            continue;
        }
        let poly = math::pow(drive, s.alpha);
        if poly < dominance_factor * math::ln(f64::from(s.n).max(1.0)) {
            continue;
        }
        if !(p.tau.mean > 0.0) {
            continue;
        }
        match alpha {
            None => alpha = Some(s.alpha),
            Some(a) if a == s.alpha => {}
            Some(_) => {
                return Err(Error::InvalidInput(
                    "exponent fit requires a common alpha across points",
                ))
            }
        }
        xs.push(math::ln(drive));
        ys.push(math::ln(p.tau.mean));
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(
            "exponent fit needs at least three dominated points",
        ));
    }
    let fit = stats::linear_fit(&xs, &ys)?;
    Ok(ExponentFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        used: xs.len(),
        total: points.len(),
    })
}

/// Max/min ratio of a set of positive values (a two-sided band width).
pub fn band_ratio(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("band ratio needs values"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &v in values {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidInput("band ratio needs positive finite values"));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(hi / lo)
}

/// Empirical round-failure probability against the closed form.
#[derive(Clone, Copy, Debug)]
pub struct RoundFailureCheck {
    pub a: u32,
    pub lambda: f64,
    pub alpha: f64,
    pub trials: u64,
    pub failures: u64,
    pub fraction: f64,
    /// 99% Wilson interval for the empirical fraction.
    pub lower: f64,
    pub upper: f64,
    pub predicted: f64,
    pub ok: bool,
}

/// Estimate the probability that a round starting at root recovery with `a`
/// infected leaves fails, by direct conditional simulation (a star with
/// `n = a`: susceptible leaves are inert while the root is not infectious,
/// so the conditional law only depends on the infected count).
pub fn empirical_round_failure(
    a: u32,
    lambda: f64,
    alpha: f64,
    trials: u64,
    master_seed: u64,
    point_index: u64,
) -> Result<RoundFailureCheck> {
    if trials == 0 {
        return Err(Error::InvalidParameter("failure estimate needs trials"));
    }
    let params = ProcessParams::new(a, lambda, alpha, Variant::X)?;
    let initial = StarState {
        root: VertexState::Recovered,
        infected_leaves: a,
        immune_leaves: 0,
    };
    let mut failures = 0u64;
    for t in 0..trials {
        let seed = replica_seed(master_seed, point_index, t)?;
        let (reinfected, _) = race_to_reinfection(&params, &initial, &seed)?;
        if !reinfected {
            failures += 1;
        }
    }
    let fraction = failures as f64 / trials as f64;
    let (lower, upper) = stats::wilson_interval(failures, trials, stats::Z_99)?;
    let predicted = analytics::round_failure_prob(a, lambda, alpha)?;
    Ok(RoundFailureCheck {
        a,
        lambda,
        alpha,
        trials,
        failures,
        fraction,
        lower,
        upper,
        predicted,
        ok: lower <= predicted && predicted <= upper,
    })
}

/// Conditional reinfection-gap measurement.
#[derive(Clone, Copy, Debug)]
pub struct GapCheck {
    pub b: u32,
    pub lambda: f64,
    pub trials: u64,
    pub successes: u64,
    /// Mean gap over successful reinfections.
    pub mean_gap: f64,
    pub se: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Bounds held within `z_slack` standard errors.
    pub ok: bool,
}

/// Measure the mean time to root reinfection from a just-deimmunized root
/// with `b` infected leaves (conditioned on reinfection happening) and
/// compare against the `[1/((lambda+1) b), 1/(lambda b)]` envelope.
pub fn conditioned_gap_check(
    b: u32,
    lambda: f64,
    alpha: f64,
    trials: u64,
    master_seed: u64,
    point_index: u64,
    z_slack: f64,
) -> Result<GapCheck> {
    if b == 0 {
        return Err(Error::InvalidParameter("gap check needs infected leaves"));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("gap check needs trials"));
    }
    if !(z_slack >= 0.0) || !z_slack.is_finite() {
        return Err(Error::InvalidParameter("slack must be non-negative"));
    }
    let params = ProcessParams::new(b, lambda, alpha, Variant::X)?;
    let initial = StarState {
        root: VertexState::Susceptible,
        infected_leaves: b,
        immune_leaves: 0,
    };
    let mut gaps = Vec::new();
    for t in 0..trials {
        let seed = replica_seed(master_seed, point_index, t)?;
        let (reinfected, gap) = race_to_reinfection(&params, &initial, &seed)?;
        if reinfected {
            gaps.push(gap);
        }
    }
    if gaps.len() < 2 {
        return Err(Error::InsufficientData("too few successful reinfections"));
    }
    let summary = stats::summarize(&gaps)?;
    let lower_bound = 1.0 / ((lambda + 1.0) * f64::from(b));
    let upper_bound = 1.0 / (lambda * f64::from(b));
    let slack = z_slack * summary.se;
    Ok(GapCheck {
        b,
        lambda,
        trials,
        successes: gaps.len() as u64,
        mean_gap: summary.mean,
        se: summary.se,
        lower_bound,
        upper_bound,
        ok: summary.mean + slack >= lower_bound && summary.mean - slack <= upper_bound,
    })
}

/// Susceptible-floor audit result.
#[derive(Clone, Copy, Debug)]
pub struct FloorAudit {
    pub replicas: u64,
    /// Runs whose minimum non-immune leaf fraction stayed at or above the
    /// threshold (censored runs count as failures: their minimum is not
    /// fully observed).
    pub above: u64,
    pub threshold: f64,
    pub fraction_above: f64,
    pub required_fraction: f64,
    pub ok: bool,
}

/// Check that runs keep the non-immune leaf fraction above the variant
/// floor constant essentially always.
pub fn audit_floor(
    params: &ProcessParams,
    engine: EngineKind,
    replicas: u64,
    master_seed: u64,
    point_index: u64,
    required_fraction: f64,
) -> Result<FloorAudit> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("floor audit needs replicas"));
    }
    if !(0.0..=1.0).contains(&required_fraction) {
        return Err(Error::InvalidParameter(
            "required fraction must lie in [0, 1]",
        ));
    }
    let threshold = analytics::prop_s_constant(params.alpha)?;
    let options = RunOptions::default();
    let mut above = 0u64;
    for r in 0..replicas {
        let seed = replica_seed(master_seed, point_index, r)?;
        let out = run_survival(params, &seed, engine, &options)?;
        if !out.sample.censored && out.sample.min_non_immune_fraction >= threshold {
            above += 1;
        }
    }
    let fraction_above = above as f64 / replicas as f64;
    Ok(FloorAudit {
        replicas,
        above,
        threshold,
        fraction_above,
        required_fraction,
        ok: fraction_above >= required_fraction,
    })
}

/// Bulk coupled-run audit result.
#[derive(Clone, Copy, Debug)]
pub struct CouplingAudit {
    pub runs: u64,
    /// Runs with any violated per-round or whole-run audit.
    pub violations: u64,
    /// Runs where Y hit the round cap (their `psi_y` is a lower bound; the
    /// dominance checks still apply).
    pub capped: u64,
    pub mean_psi_x: f64,
    pub mean_psi_y: f64,
    pub ok: bool,
}

/// Run `runs` coupled X/Y pairs and count audit violations.
pub fn audit_coupling(
    n: u32,
    lambda: f64,
    alpha: f64,
    runs: u64,
    master_seed: u64,
) -> Result<CouplingAudit> {
    if runs == 0 {
        return Err(Error::InvalidParameter("coupling audit needs runs"));
    }
    let mut violations = 0u64;
    let mut capped = 0u64;
    let (mut sx, mut sy) = (0u64, 0u64);
    for k in 0..runs {
        let seed = SeedSpec::with_path(master_seed, &[k])?;
        let run = run_coupled_xy(n, lambda, alpha, &seed, DEFAULT_ROUND_CAP)?;
        if !run.all_ok {
            violations += 1;
        }
        if run.y_round_capped {
            capped += 1;
        }
        sx += u64::from(run.psi_x);
        sy += u64::from(run.psi_y);
    }
    Ok(CouplingAudit {
        runs,
        violations,
        capped,
        mean_psi_x: sx as f64 / runs as f64,
        mean_psi_y: sy as f64 / runs as f64,
        ok: violations == 0,
    })
}

/// Engine-agreement comparison.
#[derive(Clone, Copy, Debug)]
pub struct EngineComparison {
    pub replicas: u64,
    pub mean_tau_lumped: f64,
    pub mean_tau_general: f64,
    /// Normal z statistics for the difference of means.
    pub z_tau: f64,
    pub z_psi: f64,
    /// Two-sample Kolmogorov–Smirnov distance between the tau samples and
    /// its rejection threshold.
    pub ks_stat: f64,
    pub ks_critical: f64,
    pub ok: bool,
}

/// Compare the two engines at one parameter point: means within `4` joint
/// standard errors and survival-time distributions indistinguishable by a
/// two-sample KS test at level `ks_alpha`.  The engines read disjoint
/// random streams (distinct point indices).
pub fn compare_engines(
    params: &ProcessParams,
    replicas: u64,
    master_seed: u64,
    ks_alpha: f64,
) -> Result<EngineComparison> {
    if replicas < 2 {
        return Err(Error::InvalidParameter(
            "engine comparison needs at least two replicas",
        ));
    }
    let options = RunOptions::default();
    let mut tau = [Vec::new(), Vec::new()];
    let mut psi = [Vec::new(), Vec::new()];
    for (idx, engine) in [(0u64, EngineKind::Lumped), (1u64, EngineKind::General)] {
        for r in 0..replicas {
            let seed = replica_seed(master_seed, idx, r)?;
            let out = run_survival(params, &seed, engine, &options)?;
            if out.sample.censored {
                return Err(Error::InvalidInput(
                    "engine comparison requires uncensored runs",
                ));
            }
            tau[idx as usize].push(out.sample.tau);
            psi[idx as usize].push(f64::from(out.sample.psi));
        }
    }
    let (tl, tg) = (stats::summarize(&tau[0])?, stats::summarize(&tau[1])?);
    let (pl, pg) = (stats::summarize(&psi[0])?, stats::summarize(&psi[1])?);
    let z = |a: &SummaryStats, b: &SummaryStats| {
        let denom = math::sqrt(a.se * a.se + b.se * b.se);
        if denom == 0.0 {
            if a.mean == b.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            math::abs(a.mean - b.mean) / denom
        }
    };
    let z_tau = z(&tl, &tg);
    let z_psi = z(&pl, &pg);
    let (mut a, mut b) = (tau[0].clone(), tau[1].clone());
    let ks_stat = stats::ks_two_sample(&mut a, &mut b)?;
    let ks_critical = stats::ks_two_sample_critical(ks_alpha, a.len(), b.len());
    Ok(EngineComparison {
        replicas,
        mean_tau_lumped: tl.mean,
        mean_tau_general: tg.mean,
        z_tau,
        z_psi,
        ks_stat,
        ks_critical,
        ok: z_tau <= 4.0 && z_psi <= 4.0 && ks_stat < ks_critical,
    })
}

/// Failed-round residual measurement.
#[derive(Clone, Copy, Debug)]
pub struct ResidualCheck {
    pub runs: u64,
    /// Mean of `tau - tau_K^S` over runs (`K` the failed final round);
    /// negative contributions arise when extinction happens while the root
    /// is still immune.
    pub mean_residual: f64,
    /// Mean of the positive parts only.
    pub mean_positive_residual: f64,
    /// The `2 ln n` envelope.
    pub bound: f64,
    pub ok: bool,
}

/// Measure the post-immunity residual of the failed final round: the time
/// from the final round's immunity end to extinction must stay within a
/// `2 ln n` envelope on average (only leaf recoveries remain once the round
/// has failed).
pub fn residual_check(
    params: &ProcessParams,
    replicas: u64,
    master_seed: u64,
    point_index: u64,
) -> Result<ResidualCheck> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("residual check needs replicas"));
    }
    if params.n < 2 {
        return Err(Error::InvalidParameter(
            "residual bound needs at least two leaves",
        ));
    }
    let options = RunOptions::with_rounds();
    let mut total = 0.0f64;
    let mut positive = 0.0f64;
    for r in 0..replicas {
        let seed = replica_seed(master_seed, point_index, r)?;
        let out = run_survival(params, &seed, EngineKind::Lumped, &options)?;
        if out.sample.censored {
            return Err(Error::InvalidInput("residual check requires uncensored runs"));
        }
        let last = out
            .rounds
            .last()
            .ok_or(Error::Internal("uncensored run without rounds"))?;
        let residual = out.sample.tau - last.tau_i_s;
        total += residual;
        positive += residual.max(0.0);
    }
    let bound = 2.0 * math::ln(f64::from(params.n));
    let mean_residual = total / replicas as f64;
    let mean_positive_residual = positive / replicas as f64;
    Ok(ResidualCheck {
        runs: replicas,
        mean_residual,
        mean_positive_residual,
        bound,
        ok: mean_residual <= bound && mean_positive_residual <= bound,
    })
}

/// One conditional failure-rate group of the sustained audit.
#[derive(Clone, Copy, Debug)]
pub struct SustainedGroupCheck {
    /// Infected leaves at recovery defining the group.
    pub a: u32,
    pub rounds: u64,
    pub failures: u64,
    pub predicted: f64,
    pub lower: f64,
    pub upper: f64,
    pub ok: bool,
}

/// Sustained-process conditional failure audit.
#[derive(Clone, Debug)]
pub struct SustainedAudit {
    pub groups: Vec<SustainedGroupCheck>,
    pub ok: bool,
}

/// Pool rounds from sustained runs and check that, conditioned on the
/// infected-leaf count at recovery, failure rates match the closed form
/// (99% Wilson intervals).  Every target count must collect at least
/// `min_rounds` rounds.
pub fn audit_sustained_failures(
    params: &ProcessParams,
    runs: u64,
    rounds_per_run: u32,
    targets: &[u32],
    min_rounds: u64,
    master_seed: u64,
) -> Result<SustainedAudit> {
    if runs == 0 || targets.is_empty() {
        return Err(Error::InvalidParameter("sustained audit needs runs and targets"));
    }
    let mut counts: Vec<(u64, u64)> = alloc::vec![(0, 0); targets.len()];
    for k in 0..runs {
        let seed = SeedSpec::with_path(master_seed, &[k])?;
        let run = run_sustained(params, &seed, rounds_per_run)?;
        for round in &run.rounds {
            if let Some(slot) = targets.iter().position(|&t| t == round.a_at_recovery) {
                counts[slot].1 += 1;
                if !round.succeeded {
                    counts[slot].0 += 1;
                }
            }
        }
    }
    let mut groups = Vec::with_capacity(targets.len());
    let mut ok = true;
    for (&a, &(failures, rounds)) in targets.iter().zip(&counts) {
        if rounds < min_rounds {
            return Err(Error::InsufficientData(
                "a sustained audit group collected too few rounds",
            ));
        }
        let predicted = analytics::round_failure_prob(a, params.lambda, params.alpha)?;
        let (lower, upper) = stats::wilson_interval(failures, rounds, stats::Z_99)?;
        let group_ok = lower <= predicted && predicted <= upper;
        ok &= group_ok;
        groups.push(SustainedGroupCheck {
            a,
            rounds,
            failures,
            predicted,
            lower,
            upper,
            ok: group_ok,
        });
    }
    Ok(SustainedAudit { groups, ok })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: u32, lambda: f64, replicas: u64) -> PointSpec {
        PointSpec {
            n,
            lambda,
            alpha: 1.0,
            variant: Variant::X,
            engine: EngineKind::Lumped,
            replicas,
            horizon: crate::process::DEFAULT_HORIZON,
        }
    }

    #[test]
    fn replica_seeds_are_addressed_by_point_and_replica() {
        let a = replica_seed(7, 3, 11).unwrap();
        let b = replica_seed(7, 3, 11).unwrap();
        let c = replica_seed(7, 4, 11).unwrap();
        let d = replica_seed(7, 3, 12).unwrap();
        assert_eq!(a.path(), b.path());
        assert_ne!(a.path(), c.path());
        assert_ne!(a.path(), d.path());
    }

    #[test]
    fn run_point_is_deterministic_and_matches_manual_aggregation() {
        let s = spec(8, 0.6, 200);
        let first = run_point(5, &s, 99).unwrap();
        let second = run_point(5, &s, 99).unwrap();
        assert_eq!(first.tau.mean.to_bits(), second.tau.mean.to_bits());
        assert_eq!(first.psi.mean.to_bits(), second.psi.mean.to_bits());

        let samples: Vec<_> = (0..s.replicas)
            .map(|r| run_replica(&s, 99, 5, r).unwrap())
            .collect();
        let manual = aggregate_point(5, &s, &samples).unwrap();
        assert_eq!(manual.tau.mean.to_bits(), first.tau.mean.to_bits());
        assert_eq!(manual.censored, first.censored);
    }

    #[test]
    fn standard_error_shrinks_with_replica_count() {
        let small = run_point(0, &spec(5, 0.5, 400), 7).unwrap();
        let large = run_point(0, &spec(5, 0.5, 6_400), 7).unwrap();
        let ratio = small.tau.se / large.tau.se;
        // sqrt(16) = 4 expected; accept a generous band.
        assert!((2.5..6.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn aggregate_rejects_empty_and_counts_censoring() {
        let s = spec(5, 0.5, 4);
        assert!(aggregate_point(0, &s, &[]).is_err());
        let mut samples: Vec<_> = (0..4).map(|r| run_replica(&s, 1, 0, r).unwrap()).collect();
        samples[2].censored = true;
        let agg = aggregate_point(0, &s, &samples).unwrap();
        assert_eq!(agg.censored, 1);
        assert_eq!(agg.tau.count, 3);
        assert!((agg.censored_fraction() - 0.25).abs() < 1e-12);
        assert!(!agg.censoring_acceptable());
    }

    #[test]
    fn variant_y_accumulates_at_least_as_many_rounds() {
        let mut x = spec(50, 0.3, 2_000);
        let mut y = x;
        x.variant = Variant::X;
        y.variant = Variant::Y;
        let rx = run_point(0, &x, 11).unwrap();
        let ry = run_point(1, &y, 11).unwrap();
        assert!(
            ry.psi.mean >= rx.psi.mean,
            "Y mean {} vs X mean {}",
            ry.psi.mean,
            rx.psi.mean
        );
    }

    fn synthetic_point(index: u64, s: PointSpec, mean: f64) -> PointResult {
        let stat = SummaryStats {
            count: 10,
            mean,
            variance: 0.0,
            se: 0.0,
        };
        PointResult {
            index,
            spec: s,
            tau: stat,
            psi: stat,
            min_non_immune: stat,
            censored: 0,
            scale: 1.0,
        }
    }

    #[test]
    fn exponent_fit_recovers_a_synthetic_slope() {
        let mut points = Vec::new();
        for (i, &lambda) in [0.05f64, 0.1, 0.2, 0.4].iter().enumerate() {
            let drive = lambda * lambda * 10_000.0;
            let mean = 3.0 * math::pow(drive, 1.5);
            points.push(synthetic_point(i as u64, spec(10_000, lambda, 10), mean));
        }
        let fit = fit_exponent(&points, FitMode::VaryLambdaFixedN, 1.0).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-9, "slope {}", fit.slope);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert_eq!(fit.used, 4);

        // Flat data fits a zero slope.
        let flat: Vec<PointResult> = [0.05f64, 0.1, 0.2]
            .iter()
            .enumerate()
            .map(|(i, &l)| synthetic_point(i as u64, spec(10_000, l, 10), 7.0))
            .collect();
        let fit = fit_exponent(&flat, FitMode::VaryLambdaFixedN, 1.0).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn exponent_fit_supports_varying_n_at_fixed_lambda() {
        let points: Vec<PointResult> = [200u32, 400, 800]
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let drive = 1.0 * f64::from(n);
                synthetic_point(i as u64, spec(n, 1.0, 10), 0.25 * drive)
            })
            .collect();
        let fit = fit_exponent(&points, FitMode::VaryNFixedLambda, 2.0).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-9);
        // The same points fail the other mode's homogeneity requirement.
        assert!(matches!(
            fit_exponent(&points, FitMode::VaryLambdaFixedN, 2.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn exponent_fit_filters_subcritical_points_and_needs_three() {
        // lambda^2 n = 0.25 << ln n: filtered out entirely.
        let weak = synthetic_point(0, spec(10_000, 0.005, 10), 9.0);
        assert!(matches!(
            fit_exponent(&[weak, weak, weak], FitMode::VaryLambdaFixedN, 2.0),
            Err(Error::InsufficientData(_))
        ));
        // Two dominated points are not an acceptable range either.
        let strong: Vec<PointResult> = [0.2f64, 0.4]
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                synthetic_point(i as u64, spec(10_000, l, 10), l * l * 10_000.0)
            })
            .collect();
        assert!(matches!(
            fit_exponent(&strong, FitMode::VaryLambdaFixedN, 2.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn band_ratio_basics() {
        assert!((band_ratio(&[1.0, 2.0, 4.0]).unwrap() - 4.0).abs() < 1e-15);
        assert!((band_ratio(&[3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(band_ratio(&[]).is_err());
        assert!(band_ratio(&[1.0, 0.0]).is_err());
        assert!(band_ratio(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn empirical_failure_matches_closed_form() {
        let check = empirical_round_failure(3, 0.8, 1.0, 4_000, 21, 0).unwrap();
        assert!(check.ok, "CI [{}, {}] vs {}", check.lower, check.upper, check.predicted);
        // Degenerate round: no infected leaves at recovery always fails.
        let empty = empirical_round_failure(0, 0.8, 1.0, 50, 21, 1).unwrap();
        assert_eq!(empty.failures, 50);
        assert_eq!(empty.predicted, 1.0);
        assert!(empty.ok);
    }

    #[test]
    fn failure_probability_vanishes_at_large_infection_rates() {
        // With fast de-immunization nearly all survivors outlast the immune
        // span, and each then wins its reinfection race with overwhelming
        // probability; the frequency drops below 1% and keeps falling.
        let a = empirical_round_failure(5, 20.0, 10.0, 3_000, 23, 0).unwrap();
        let b = empirical_round_failure(5, 50.0, 10.0, 3_000, 23, 1).unwrap();
        assert!(a.ok && b.ok);
        assert!(b.predicted < a.predicted);
        assert!(a.fraction < 0.01, "fraction {}", a.fraction);
        assert!(b.fraction < 0.01, "fraction {}", b.fraction);
    }

    #[test]
    fn conditioned_gap_respects_envelope() {
        // b = 1: the conditional gap is exactly Exp(1 + lambda), so the mean
        // sits on the lower bound.
        let one = conditioned_gap_check(1, 0.5, 1.0, 4_000, 33, 0, 4.0).unwrap();
        assert!(one.ok, "mean {} bounds [{}, {}]", one.mean_gap, one.lower_bound, one.upper_bound);
        assert!((one.mean_gap - 1.0 / 1.5).abs() < 5.0 * one.se);
        let five = conditioned_gap_check(5, 0.1, 1.0, 4_000, 33, 1, 4.0).unwrap();
        assert!(five.ok, "mean {} bounds [{}, {}]", five.mean_gap, five.lower_bound, five.upper_bound);
        assert!(five.successes > 1_000);
    }

    #[test]
    fn floor_audit_accepts_a_subcritical_point() {
        let params = ProcessParams::new(200, 0.1, 1.0, Variant::X).unwrap();
        let audit = audit_floor(&params, EngineKind::Lumped, 400, 5, 0, 0.95).unwrap();
        assert!(audit.ok, "fraction above floor: {}", audit.fraction_above);
        assert!((audit.threshold - 1.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_audit_is_clean_in_bulk() {
        let audit = audit_coupling(30, 0.2, 1.0, 300, 17).unwrap();
        assert!(audit.ok);
        assert_eq!(audit.violations, 0);
        assert_eq!(audit.capped, 0);
        assert!(audit.mean_psi_x <= audit.mean_psi_y);
    }

    #[test]
    fn engines_agree_at_a_moderate_point() {
        let params = ProcessParams::new(30, 0.4, 1.0, Variant::X).unwrap();
        let cmp = compare_engines(&params, 3_000, 2, 0.001).unwrap();
        assert!(
            cmp.ok,
            "z_tau {} z_psi {} ks {} vs {}",
            cmp.z_tau, cmp.z_psi, cmp.ks_stat, cmp.ks_critical
        );
    }

    #[test]
    fn residual_stays_within_the_log_envelope() {
        let params = ProcessParams::new(50, 0.1, 1.0, Variant::X).unwrap();
        let check = residual_check(&params, 2_000, 3, 0).unwrap();
        assert!(
            check.ok,
            "mean {} positive {} bound {}",
            check.mean_residual, check.mean_positive_residual, check.bound
        );
    }

    #[test]
    fn sustained_audit_confirms_conditional_failure_rates() {
        let params = ProcessParams::new(6, 0.8, 1.0, Variant::X).unwrap();
        let audit =
            audit_sustained_failures(&params, 12, 1_000, &[1, 2], 300, 19).unwrap();
        assert!(audit.ok);
        for g in &audit.groups {
            assert!(g.rounds >= 300);
        }
    }
}

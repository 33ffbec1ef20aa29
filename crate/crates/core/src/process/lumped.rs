//! Exact Gillespie sampler on the lumped chain `(root, i, r)`.
//!
//! Leaf exchangeability makes the lumped chain a faithful reduction of the
//! per-vertex star process: holding times are `Exp(total rate)` and the next
//! transition is chosen proportionally to its rate, so the sampled law of
//! every functional (survival time, round structure, immune counts) matches
//! the full graphical construction.  This engine is the fast default; it
//! runs in memory `O(1)` plus whatever capture the caller asks for.

use alloc::vec::Vec;

use super::{
    star_transition_rates, ProcessParams, RunOptions, RunOutput, StarEvent, StarState,
    StarTrajectory, SurvivalSample, TrajectoryEvent, Variant, VertexState,
};
use crate::rng::SeedSpec;
use crate::rounds::RoundObserver;
use crate::{Error, Result};

/// Pick the next event by inverting one uniform draw against the cumulative
/// rate table.  The final entry absorbs any floating-point shortfall.
fn select_event(
    table: &super::RateTable,
    u: f64,
) -> (StarEvent, f64) {
    let target = u * table.total();
    let mut acc = 0.0;
    let mut chosen = None;
    for (event, rate) in table.iter() {
        acc += rate;
        if target < acc {
            chosen = Some((event, rate));
            break;
        }
    }
    chosen.unwrap_or_else(|| table.iter().last().expect("non-empty table"))
}

/// Run one survival sample on the lumped chain.
pub fn run_survival_lumped(
    params: &ProcessParams,
    seed: &SeedSpec,
    options: &RunOptions,
) -> Result<RunOutput> {
    params.validate()?;
    options.validate()?;
    let mut stream = seed.derive_stream();
    let mut state = StarState::initial();
    let mut t = 0.0f64;
    let mut events = 0u64;
    let mut psi = 0u32;
    let mut max_immune = 0u32;
    let mut censored = false;
    let sis = params.variant == Variant::Sis;
    let mut observer = if options.capture_rounds {
        Some(RoundObserver::new())
    } else {
        None
    };
    let mut trajectory = if options.capture_events {
        Some(StarTrajectory::default())
    } else {
        None
    };

    while !state.is_absorbing() {
        let table = star_transition_rates(params, &state);
        debug_assert!(!table.is_empty());
        let gap = stream.exp_unchecked(table.total());
        if t + gap > options.horizon {
            t = options.horizon;
            censored = true;
            break;
        }
        t += gap;
        let (event, _) = select_event(&table, stream.uniform());
        super::apply_star_event(params, &mut state, event);
        events += 1;
        if event == StarEvent::RootReinfect {
            psi = psi
                .checked_add(1)
                .ok_or(Error::Capacity("successful-round count overflow"))?;
        }
        max_immune = max_immune.max(state.immune_leaves);
        if let Some(obs) = observer.as_mut() {
            obs.on_event(t, event, state.infected_leaves, sis)?;
        }
        if let Some(traj) = trajectory.as_mut() {
            traj.events.push(TrajectoryEvent {
                time: t,
                event,
                infected_leaves_after: state.infected_leaves,
            });
        }
    }

    // If the run absorbed with the root still immune, the final round's
    // immunity span is still open; extend it by the memoryless residual so
    // the recorded span keeps its exact Exp(alpha) law.
    let completion = if !censored
        && state.root == VertexState::Recovered
        && (observer.is_some() || trajectory.is_some())
    {
        Some(t + stream.exp_unchecked(params.alpha))
    } else {
        None
    };

    let rounds = match observer {
        Some(mut obs) if !censored => {
            obs.on_extinction(completion)?;
            obs.into_records()?
        }
        _ => Vec::new(),
    };
    let trajectory = match trajectory {
        Some(mut traj) if !censored => {
            traj.final_time = t;
            traj.immunity_completion = completion;
            Some(traj)
        }
        _ => None,
    };

    let min_non_immune_fraction = if params.n == 0 || max_immune == 0 {
        1.0
    } else {
        f64::from(params.n - max_immune) / f64::from(params.n)
    };
    Ok(RunOutput {
        sample: SurvivalSample {
            tau: t,
            psi,
            events,
            min_non_immune_fraction,
            censored,
        },
        rounds,
        trajectory,
    })
}

/// Run the lumped chain from an arbitrary initial state until the root is
/// reinfected or the infection dies out.  Returns whether reinfection won
/// the race and the time at which the race ended.
///
/// With a non-infected root no new leaf infections occur, so the race
/// always terminates.  This is the conditional experiment behind the
/// round-failure law (start `(R, a, 0)`) and the reinfection-gap law
/// (start `(S, b, 0)`).
pub fn race_to_reinfection(
    params: &ProcessParams,
    initial: &StarState,
    seed: &SeedSpec,
) -> Result<(bool, f64)> {
    params.validate()?;
    initial.validate(params)?;
    if initial.root == VertexState::Infected {
        return Err(Error::InvalidInput(
            "the race starts with a non-infected root",
        ));
    }
    let mut stream = seed.derive_stream();
    let mut state = *initial;
    let mut t = 0.0f64;
    while !state.is_absorbing() {
        let table = star_transition_rates(params, &state);
        debug_assert!(!table.is_empty());
        t += stream.exp_unchecked(table.total());
        let (event, _) = select_event(&table, stream.uniform());
        super::apply_star_event(params, &mut state, event);
        if event == StarEvent::RootReinfect {
            return Ok((true, t));
        }
    }
    Ok((false, t))
}

//! Round decomposition of a star trajectory.
//!
//! A *round* starts whenever the root becomes infected (round 1 starts at
//! time 0).  Within round `i`:
//!
//! * `tau_i`     — round start (root infected),
//! * `tau_i_r = tau_i + xi_i`   — root recovery; `xi_i ~ Exp(1)`,
//! * `tau_i_s = tau_i_r + zeta_i` — end of root immunity; `zeta_i ~ Exp(alpha)`
//!   (for SIS the root skips immunity, so `zeta_i = 0` and
//!   `tau_i_s = tau_i_r`),
//! * the round *succeeds* if an infected leaf reinfects the root, which
//!   starts round `i + 1`; otherwise the infection dies out and the round —
//!   always exactly the last one — fails.
//!
//! The number of successful rounds is `psi`.  Infected-leaf counts are
//! captured at the three defining instants, immediately after the triggering
//! transition applies.  When a run absorbs while the root is still immune,
//! the recorded `zeta_i` extends to the (memoryless, hence still
//! `Exp(alpha)`) moment that immunity would have ended, so immunity spans
//! are identically distributed across all recorded rounds.

use alloc::vec::Vec;

use crate::process::{StarEvent, StarTrajectory, Variant};
use crate::{Error, Result};

/// Default threshold separating "good" rounds (`xi > epsilon`) from bad
/// ones in [`classify_rounds`].
pub const DEFAULT_ROUND_EPSILON: f64 = 0.25;

/// One round of a star trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub index: u32,
    /// Round start: the root became infected (0 for round 1).
    pub tau_i: f64,
    /// Infectious span of the root: `tau_i_r - tau_i`.
    pub xi_i: f64,
    /// Immune span of the root: `tau_i_s - tau_i_r` (0 for SIS).
    pub zeta_i: f64,
    /// Root recovery time.
    pub tau_i_r: f64,
    /// End of root immunity.
    pub tau_i_s: f64,
    /// Infected leaves at `tau_i`.
    pub infected_at_start: u32,
    /// Infected leaves at `tau_i_r`.
    pub infected_at_recovery: u32,
    /// Infected leaves at `tau_i_s`.
    pub infected_at_immunity_end: u32,
    /// Whether the round ended with the root reinfected.
    pub succeeded: bool,
}

/// Streaming round extractor: engines feed it applied root transitions; it
/// assembles [`RoundRecord`]s online without retaining the trajectory.
#[derive(Clone, Debug)]
pub(crate) struct RoundObserver {
    records: Vec<RoundRecord>,
    cur: PartialRound,
    last_time: f64,
    finished: bool,
}

#[derive(Clone, Copy, Debug)]
struct PartialRound {
    index: u32,
    tau_i: f64,
    infected_at_start: u32,
    recovery: Option<(f64, u32)>,
    immunity_end: Option<(f64, u32)>,
}

impl PartialRound {
    fn first() -> Self {
        PartialRound {
            index: 1,
            tau_i: 0.0,
            infected_at_start: 0,
            recovery: None,
            immunity_end: None,
        }
    }

    fn complete(&self, succeeded: bool) -> Result<RoundRecord> {
        let (tau_i_r, infected_at_recovery) = self
            .recovery
            .ok_or(Error::InvalidInput("round missing root recovery"))?;
        let (tau_i_s, infected_at_immunity_end) = self
            .immunity_end
            .ok_or(Error::InvalidInput("round missing immunity end"))?;
        Ok(RoundRecord {
            index: self.index,
            tau_i: self.tau_i,
            xi_i: tau_i_r - self.tau_i,
            zeta_i: tau_i_s - tau_i_r,
            tau_i_r,
            tau_i_s,
            infected_at_start: self.infected_at_start,
            infected_at_recovery,
            infected_at_immunity_end,
            succeeded,
        })
    }
}

impl RoundObserver {
    pub(crate) fn new() -> Self {
        RoundObserver {
            records: Vec::new(),
            cur: PartialRound::first(),
            last_time: 0.0,
            finished: false,
        }
    }

    /// Feed one applied transition (`infected_leaves` is the count just
    /// after it applies).  `sis` collapses the immunity span to zero at
    /// recovery.
    pub(crate) fn on_event(
        &mut self,
        time: f64,
        event: StarEvent,
        infected_leaves: u32,
        sis: bool,
    ) -> Result<()> {
        if self.finished {
            return Err(Error::InvalidInput("event after trajectory end"));
        }
        // Round 1 starts at time 0; every event is strictly later.
        if time <= self.last_time {
            return Err(Error::InvalidInput("event times must strictly increase"));
        }
        self.last_time = time;
        match event {
            StarEvent::RootRecover => {
                if self.cur.recovery.is_some() {
                    return Err(Error::InvalidInput("duplicate root recovery in round"));
                }
                self.cur.recovery = Some((time, infected_leaves));
                if sis {
                    self.cur.immunity_end = Some((time, infected_leaves));
                }
            }
            StarEvent::RootDeimmunize => {
                if self.cur.recovery.is_none() || self.cur.immunity_end.is_some() {
                    return Err(Error::InvalidInput("immunity end out of order"));
                }
                self.cur.immunity_end = Some((time, infected_leaves));
            }
            StarEvent::RootReinfect => {
                if self.cur.immunity_end.is_none() {
                    return Err(Error::InvalidInput("reinfection before immunity end"));
                }
                let record = self.cur.complete(true)?;
                self.records.push(record);
                self.cur = PartialRound {
                    index: self.cur.index + 1,
                    tau_i: time,
                    infected_at_start: infected_leaves,
                    recovery: None,
                    immunity_end: None,
                };
            }
            StarEvent::LeafInfect | StarEvent::LeafRecover | StarEvent::LeafDeimmunize => {}
        }
        Ok(())
    }

    /// Close the trajectory at absorption.  `immunity_completion` must be
    /// supplied (as an absolute time, strictly after the root's recovery)
    /// exactly when the run absorbed with the root still immune.
    pub(crate) fn on_extinction(&mut self, immunity_completion: Option<f64>) -> Result<()> {
        if self.finished {
            return Err(Error::InvalidInput("trajectory already ended"));
        }
        if self.cur.immunity_end.is_none() {
            let t = immunity_completion.ok_or(Error::InvalidInput(
                "absorbed while immune but no completion time given",
            ))?;
            let (tau_r, _) = self
                .cur
                .recovery
                .ok_or(Error::InvalidInput("absorbed before root recovery"))?;
            if t <= tau_r {
                return Err(Error::InvalidInput(
                    "immunity completion must follow recovery",
                ));
            }
            // Nothing is infected at (or indeed after) absorption.
            self.cur.immunity_end = Some((t, 0));
        } else if immunity_completion.is_some() {
            return Err(Error::InvalidInput(
                "completion time given but immunity already ended",
            ));
        }
        let record = self.cur.complete(false)?;
        self.records.push(record);
        self.finished = true;
        Ok(())
    }

    /// The assembled rounds (valid once extinction has been observed).
    pub(crate) fn into_records(self) -> Result<Vec<RoundRecord>> {
        if !self.finished {
            return Err(Error::InvalidInput("trajectory not ended"));
        }
        Ok(self.records)
    }
}

/// Extract the round decomposition from a captured trajectory of the given
/// variant (without immunity the span `zeta` collapses onto the recovery
/// instant).
///
/// Errors if event times are not strictly increasing or the root-transition
/// pattern is inconsistent (recovery/immunity-end/reinfection out of order,
/// or an immune-at-absorption trajectory missing its completion time).
/// Rounds that never began are not represented: the final, failed round is
/// the last record.
pub fn extract_rounds(
    trajectory: &StarTrajectory,
    variant: Variant,
) -> Result<Vec<RoundRecord>> {
    let mut obs = RoundObserver::new();
    let sis = !variant.root_immune();
    for ev in &trajectory.events {
        obs.on_event(ev.time, ev.event, ev.infected_leaves_after, sis)?;
    }
    obs.on_extinction(trajectory.immunity_completion)?;
    obs.into_records()
}

/// Round classification: `good[i]` marks rounds with `xi > epsilon`;
/// `bad_runs` is the run-length encoding of the bad stretches as
/// `(start position (0-based), length)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundClassification {
    pub epsilon: f64,
    pub good: Vec<bool>,
    pub bad_runs: Vec<(usize, usize)>,
}

/// Classify rounds by infectious-span length: a round is *good* when its
/// `xi` exceeds `epsilon` (default [`DEFAULT_ROUND_EPSILON`]), so a fraction
/// `exp(-epsilon)` of rounds is good on average.
pub fn classify_rounds(records: &[RoundRecord], epsilon: f64) -> Result<RoundClassification> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter("epsilon must be positive"));
    }
    let good: Vec<bool> = records.iter().map(|r| r.xi_i > epsilon).collect();
    let mut bad_runs = Vec::new();
    let mut start = None;
    for (i, &g) in good.iter().enumerate() {
        match (g, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                bad_runs.push((s, i - s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        bad_runs.push((s, good.len() - s));
    }
    Ok(RoundClassification {
        epsilon,
        good,
        bad_runs,
    })
}

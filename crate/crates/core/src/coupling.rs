//! Shared-clock couplings of the star process, with built-in audits.
//!
//! # Round-aligned coupling of the two immunity variants
//!
//! [`run_coupled_xy`] drives the full-immunity process (X) and the
//! root-only-immunity process (Y) through the *same* per-round clock bundle:
//! round `i` of both processes reads one fresh set of recovery /
//! de-immunization / infection clocks in round-relative time (memorylessness
//! makes redrawing clocks at round starts exact).  Because a leaf that is
//! immune in X is at worst susceptible in Y, the construction preserves, and
//! this implementation verifies after every applied event:
//!
//! * containment: every vertex infected in X is infected in Y throughout
//!   `[0, d_Y]` of each round (`d_Y` = Y's round end),
//! * identical root spans `xi` and `zeta` (the root clocks are shared),
//! * `a_X <= a_Y` for the infected-leaf counts at root recovery,
//! * when X succeeds a round, Y succeeds no later (`d_Y <= d_X`), and Y
//!   never dies in a round before X does, hence `Psi_X <= Psi_Y`.
//!
//! # Sustained process
//!
//! [`run_sustained`] runs the process on one global clock bundle (identical
//! layout and seed paths to the per-vertex engine, so the trajectory agrees
//! bitwise with [`crate::process::run_survival_general`] up to the first
//! extinction) and artificially reinfects the root whenever the infection
//! dies: immediately if the root is susceptible, at the pending
//! de-immunization moment if it is still immune.  Every recorded round then
//! carries complete `xi` and `zeta` spans, and given the infected-leaf count
//! `a` at recovery, round failures are independent Bernoulli draws with the
//! closed-form failure probability — the bridge between the simulator and
//! the analytical round law.

use alloc::vec::Vec;

use crate::process::{GeneralConfig, Graph, ProcessParams, Variant, VertexState};
use crate::rng::{ClockBundle, ClockClass, ClockId, SeedSpec};
use crate::{Error, Result};

/// Default bound on coupled / sustained round counts.
pub const DEFAULT_ROUND_CAP: u32 = 65_536;

/// Per-round audit record of the coupled pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoupledRoundAudit {
    /// 1-based round index.
    pub index: u32,
    /// Root infectious span (shared by both processes).
    pub xi: f64,
    /// Root immune span (shared; completed from the pending clock when the
    /// round ends with the root still immune).
    pub zeta: f64,
    /// Whether each process was alive when the round started.
    pub x_active: bool,
    pub y_active: bool,
    /// Round outcome per process (meaningful only when active).
    pub x_succeeded: bool,
    pub y_succeeded: bool,
    /// Round-relative end time per process (reinfection or extinction).
    pub x_duration: f64,
    pub y_duration: f64,
    /// Infected leaves at root recovery per process.
    pub x_infected_at_recovery: u32,
    pub y_infected_at_recovery: u32,
    /// Audit flags for this round.
    pub containment_ok: bool,
    pub duration_ok: bool,
    pub recovery_count_ok: bool,
}

impl CoupledRoundAudit {
    pub fn all_ok(&self) -> bool {
        self.containment_ok && self.duration_ok && self.recovery_count_ok
    }
}

/// Outcome of one coupled X/Y run.
#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub psi_x: u32,
    pub psi_y: u32,
    /// Global survival times (sums of round durations).
    pub tau_x: f64,
    pub tau_y: f64,
    pub rounds: Vec<CoupledRoundAudit>,
    /// `Psi_X <= Psi_Y` held.
    pub psi_ok: bool,
    /// Every per-round audit held, and `psi_ok`.
    pub all_ok: bool,
    /// Y outlived the round cap; `psi_y` is then a lower bound (X must
    /// already be dead, or the run errors instead).
    pub y_round_capped: bool,
}

/// One process's view inside the coupled round loop.
struct Side {
    states: Vec<VertexState>,
    infected_total: u32,
    /// Leaves become immune on recovery (X) or not (Y).
    leaves_immune: bool,
    alive: bool,
    /// Still consuming events in the current round.
    in_round: bool,
    succeeded: bool,
    round_end: f64,
    infected_at_recovery: Option<u32>,
    psi: u32,
    tau: f64,
}

impl Side {
    fn new(n: u32, leaves_immune: bool) -> Self {
        let mut states = alloc::vec![VertexState::Susceptible; n as usize + 1];
        states[0] = VertexState::Infected;
        Side {
            states,
            infected_total: 1,
            leaves_immune,
            alive: true,
            in_round: true,
            succeeded: false,
            round_end: 0.0,
            infected_at_recovery: None,
            psi: 0,
            tau: 0.0,
        }
    }

    fn infected(&self, v: usize) -> bool {
        self.states[v] == VertexState::Infected
    }

    fn infected_leaves(&self) -> u32 {
        self.infected_total - u32::from(self.infected(0))
    }

    fn begin_round(&mut self) {
        // A side begins a new round only after succeeding the previous one,
        // i.e. with its root freshly reinfected.
        debug_assert!(self.alive);
        debug_assert_eq!(self.states[0], VertexState::Infected);
        self.in_round = true;
        self.succeeded = false;
        self.round_end = 0.0;
        self.infected_at_recovery = None;
    }

    /// Apply one shared clock firing under this side's variant semantics.
    /// Returns whether the state of `target_of(clock)` changed.
    fn apply(&mut self, clock: ClockId, edges: &[(u32, u32)], time: f64) -> bool {
        if !self.in_round {
            return false;
        }
        match clock.class {
            ClockClass::Recovery => {
                let v = clock.index as usize;
                if self.states[v] != VertexState::Infected {
                    return false;
                }
                self.states[v] = if v == 0 || self.leaves_immune {
                    VertexState::Recovered
                } else {
                    VertexState::Susceptible
                };
                self.infected_total -= 1;
                if v == 0 {
                    self.infected_at_recovery = Some(self.infected_leaves());
                }
                self.check_extinction(time);
                true
            }
            ClockClass::Deimmunization => {
                let v = clock.index as usize;
                if self.states[v] != VertexState::Recovered {
                    return false;
                }
                self.states[v] = VertexState::Susceptible;
                true
            }
            ClockClass::Infection => {
                let k = (clock.index / 2) as usize;
                let (u, v) = edges[k];
                let (src, dst) = if clock.index % 2 == 0 { (u, v) } else { (v, u) };
                if self.states[src as usize] != VertexState::Infected
                    || self.states[dst as usize] != VertexState::Susceptible
                {
                    return false;
                }
                self.states[dst as usize] = VertexState::Infected;
                self.infected_total += 1;
                if dst == 0 {
                    // Natural reinfection: the round succeeds and ends now.
                    self.succeeded = true;
                    self.in_round = false;
                    self.round_end = time;
                    self.psi += 1;
                    self.tau += time;
                }
                true
            }
        }
    }

    fn check_extinction(&mut self, time: f64) {
        if self.infected_total == 0 {
            self.alive = false;
            self.in_round = false;
            self.succeeded = false;
            self.round_end = time;
            self.tau += time;
        }
    }
}

/// Number of vertices infected in X but not in Y (containment violations),
/// recomputed from scratch.
fn containment_defects(x: &Side, y: &Side) -> u32 {
    let mut bad = 0;
    for v in 0..x.states.len() {
        if x.infected(v) && !y.infected(v) {
            bad += 1;
        }
    }
    bad
}

/// Run the round-aligned coupling of the full-immunity (X) and
/// root-only-immunity (Y) processes on a star with `n` leaves.
///
/// `seed` may be at most one level deep: each round claims a child stream,
/// whose clocks claim children of their own.  Audits are recorded, not
/// asserted; inspect [`CoupledRun::all_ok`].  If the round cap is reached
/// while X is still alive the run cannot bound `Psi_X` and errors instead.
pub fn run_coupled_xy(
    n: u32,
    lambda: f64,
    alpha: f64,
    seed: &SeedSpec,
    round_cap: u32,
) -> Result<CoupledRun> {
    if seed.path().len() > 1 {
        return Err(Error::InvalidParameter(
            "coupled runs need a seed at most one level deep",
        ));
    }
    if round_cap == 0 {
        return Err(Error::InvalidParameter("round cap must be positive"));
    }
    // Shared layout: the X process's clocks (leaf de-immunization clocks
    // simply never match a Y state, which is the coupling).
    let config = GeneralConfig::new(Graph::star(n)?, lambda, alpha, Variant::X)?;
    let layout = config.clock_layout();
    let edges = config.graph.edges().to_vec();

    let mut x = Side::new(n, true);
    let mut y = Side::new(n, false);
    let mut rounds = Vec::new();
    let mut y_round_capped = false;

    for round_index in 1..=round_cap {
        let x_active = x.alive;
        let y_active = y.alive;
        debug_assert!(y_active, "Y dies only after X");
        let bundle_seed = seed.child(u64::from(round_index))?;
        let mut bundle = ClockBundle::new(&bundle_seed, &layout)?;

        // Round-start containment (vacuous when X is already dead).
        let mut containment_ok = containment_defects(&x, &y) == 0;

        let mut xi = None;
        let mut zeta = None;
        let mut recovery_time = None;
        while x.in_round || y.in_round {
            let (time, clock) = bundle
                .next_event()
                .ok_or(Error::Internal("coupled bundle ran dry"))?;
            let y_was_in_round = y.in_round;
            let x_changed = x.apply(clock, &edges, time);
            let y_changed = y.apply(clock, &edges, time);
            if x_changed || y_changed {
                // Track the shared root spans from whichever side applied
                // the transition (they are the same clock firings).
                if clock.class == ClockClass::Recovery && clock.index == 0 && xi.is_none() {
                    xi = Some(time);
                    recovery_time = Some(time);
                }
                if clock.class == ClockClass::Deimmunization
                    && clock.index == 0
                    && zeta.is_none()
                {
                    if let Some(r) = recovery_time {
                        zeta = Some(time - r);
                    }
                }
                // Containment must hold at every instant up to and
                // including Y's round end.
                if y_was_in_round && containment_defects(&x, &y) > 0 {
                    containment_ok = false;
                }
            }
        }

        // Complete the immune span from the pending root clock when the
        // round ended with the root still immune (memoryless, so the
        // recorded span keeps its exact law).
        let zeta = match (zeta, recovery_time) {
            (Some(z), _) => z,
            (None, Some(r)) => {
                let pending = bundle
                    .next_time_of(ClockId::new(ClockClass::Deimmunization, 0))
                    .ok_or(Error::Internal("missing root de-immunization clock"))?;
                pending - r
            }
            (None, None) => {
                return Err(Error::Internal("round ended before root recovery"));
            }
        };
        let xi = xi.ok_or(Error::Internal("round ended before root recovery"))?;

        let duration_ok = if x_active {
            match (x.succeeded, y.succeeded) {
                // X succeeding forces Y to have succeeded no later.
                (true, true) => y.round_end <= x.round_end,
                (true, false) => false,
                // X dying forces Y to die no earlier (if Y dies at all).
                (false, false) => x.round_end <= y.round_end,
                (false, true) => true,
            }
        } else {
            true
        };
        let recovery_count_ok = if x_active {
            x.infected_at_recovery.unwrap_or(0) <= y.infected_at_recovery.unwrap_or(0)
        } else {
            true
        };
        rounds.push(CoupledRoundAudit {
            index: round_index,
            xi,
            zeta,
            x_active,
            y_active,
            x_succeeded: x.succeeded,
            y_succeeded: y.succeeded,
            x_duration: x.round_end,
            y_duration: y.round_end,
            x_infected_at_recovery: x.infected_at_recovery.unwrap_or(0),
            y_infected_at_recovery: y.infected_at_recovery.unwrap_or(0),
            containment_ok,
            duration_ok,
            recovery_count_ok,
        });

        if !y.alive {
            break;
        }
        if round_index == round_cap {
            if x.alive {
                return Err(Error::Capacity(
                    "round cap reached with the full-immunity process still alive",
                ));
            }
            y_round_capped = true;
            break;
        }
        if x.alive {
            x.begin_round();
        }
        y.begin_round();
    }

    let psi_ok = x.psi <= y.psi;
    let all_ok = psi_ok && rounds.iter().all(CoupledRoundAudit::all_ok);
    Ok(CoupledRun {
        psi_x: x.psi,
        psi_y: y.psi,
        tau_x: x.tau,
        tau_y: y.tau,
        rounds,
        psi_ok,
        all_ok,
        y_round_capped,
    })
}

/// One round of the sustained process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SustainedRound {
    /// 1-based round index.
    pub index: u32,
    /// Infected leaves at the root's recovery.
    pub a_at_recovery: u32,
    /// Whether an infected leaf reinfected the root naturally (an
    /// artificial restart means the round failed).
    pub succeeded: bool,
    /// Round length (start of root infection to start of the next).
    pub duration: f64,
    /// Root infectious span.
    pub xi: f64,
    /// Root immune span (always complete: restarts wait for the
    /// de-immunization clock).
    pub zeta: f64,
}

/// Outcome of a sustained run.
#[derive(Clone, Debug)]
pub struct SustainedRun {
    pub rounds: Vec<SustainedRound>,
    /// Absolute time of the first extinction (bitwise equal to the plain
    /// run's survival time under the same seed), if one occurred within the
    /// round cap.
    pub first_extinction_time: Option<f64>,
    /// Successful-round count at the first extinction.
    pub first_extinction_psi: Option<u32>,
}

/// Run the sustained star process: the ordinary dynamics on one global
/// clock bundle, with the root artificially reinfected at every extinction
/// (immediately when susceptible, at the pending de-immunization moment
/// when immune).  Exactly `round_cap` rounds are recorded.
pub fn run_sustained(
    params: &ProcessParams,
    seed: &SeedSpec,
    round_cap: u32,
) -> Result<SustainedRun> {
    params.validate()?;
    if round_cap == 0 {
        return Err(Error::InvalidParameter("round cap must be positive"));
    }
    let config = GeneralConfig::new(
        Graph::star(params.n)?,
        params.lambda,
        params.alpha,
        params.variant,
    )?;
    let layout = config.clock_layout();
    let mut bundle = ClockBundle::new(seed, &layout)?;
    let nv = params.n as usize + 1;
    let mut states = alloc::vec![VertexState::Susceptible; nv];
    states[0] = VertexState::Infected;

    let sis = !params.variant.root_immune();
    let mut rounds = Vec::with_capacity(round_cap as usize);
    let mut first_extinction_time = None;
    let mut first_extinction_psi = None;
    let mut psi = 0u32;

    let mut round_start = 0.0f64;
    let mut recovery: Option<f64> = None; // absolute root-recovery time
    let mut immunity_end: Option<f64> = None; // absolute de-immunization time
    let mut a_at_recovery = 0u32;
    let mut infected_total = 1u32;

    while rounds.len() < round_cap as usize {
        let step = crate::process::step_general(&config, &mut states, &mut bundle)?;
        let Some(applied) = step.applied else {
            continue;
        };
        let t = step.time;
        match (applied.vertex, applied.from, applied.to) {
            (0, VertexState::Infected, to) => {
                recovery = Some(t);
                a_at_recovery = infected_total - 1;
                if to == VertexState::Susceptible {
                    // Without immunity the span collapses onto recovery.
                    debug_assert!(sis);
                    immunity_end = Some(t);
                }
                infected_total -= 1;
            }
            (0, VertexState::Recovered, VertexState::Susceptible) => {
                immunity_end = Some(t);
            }
            (0, VertexState::Susceptible, VertexState::Infected) => {
                // Natural reinfection: close a successful round.
                infected_total += 1;
                psi += 1;
                rounds.push(SustainedRound {
                    index: rounds.len() as u32 + 1,
                    a_at_recovery,
                    succeeded: true,
                    duration: t - round_start,
                    xi: recovery.ok_or(Error::Internal("round without recovery"))?
                        - round_start,
                    zeta: immunity_end.ok_or(Error::Internal("round without immunity end"))?
                        - recovery.unwrap(),
                });
                round_start = t;
                recovery = None;
                immunity_end = None;
            }
            (_, VertexState::Susceptible, VertexState::Infected) => infected_total += 1,
            (_, VertexState::Infected, _) => infected_total -= 1,
            _ => {}
        }

        if infected_total > 0 {
            continue;
        }
        // Extinction.  Record the first one, then restart.
        if first_extinction_time.is_none() {
            first_extinction_time = Some(t);
            first_extinction_psi = Some(psi);
        }
        let restart_at = if states[0] == VertexState::Susceptible {
            t
        } else {
            // Wait for the pending de-immunization: keep stepping until the
            // root wakes up (every firing in between leaves nothing to do
            // except leaf de-immunizations, which are fine to apply).
            loop {
                let step = crate::process::step_general(&config, &mut states, &mut bundle)?;
                let Some(applied) = step.applied else {
                    continue;
                };
                if applied.vertex == 0 {
                    debug_assert_eq!(applied.from, VertexState::Recovered);
                    immunity_end = Some(step.time);
                    break step.time;
                }
            }
        };
        states[0] = VertexState::Infected;
        infected_total = 1;
        rounds.push(SustainedRound {
            index: rounds.len() as u32 + 1,
            a_at_recovery,
            succeeded: false,
            duration: restart_at - round_start,
            xi: recovery.ok_or(Error::Internal("round without recovery"))? - round_start,
            zeta: immunity_end.ok_or(Error::Internal("round without immunity end"))?
                - recovery.unwrap(),
        });
        round_start = restart_at;
        recovery = None;
        immunity_end = None;
    }

    Ok(SustainedRun {
        rounds,
        first_extinction_time,
        first_extinction_psi,
    })
}

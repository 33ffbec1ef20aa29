//! Model parameters, state types, and the exact transition structure of the
//! star-graph epidemic.
//!
//! Vertices are susceptible (`S`), infected (`I`) or immune/recovered (`R`).
//! An infected vertex infects each susceptible neighbour at rate `lambda`,
//! recovers at rate 1, and immunity (where the variant grants it) wears off
//! at rate `alpha`.  On a star with `n` leaves and exchangeable leaf
//! dynamics, the full process lumps exactly to the Markov chain on
//! `(root state, #infected leaves, #immune leaves)` whose rates are produced
//! by [`star_transition_rates`]; this table is shared by the Gillespie
//! engine, the exact linear-algebra oracle, and the conditional experiments,
//! so all of them describe the same chain by construction.

mod general;
mod lumped;

pub use general::{
    lumped_view, run_survival_general, step_general, AppliedTransition, GeneralConfig, Graph,
    StepOutcome, GENERAL_ENGINE_MAX_VERTICES,
};
pub use lumped::{race_to_reinfection, run_survival_lumped};

use crate::rng::SeedSpec;
use crate::rounds::RoundRecord;
use crate::{Error, Result};
use alloc::vec::Vec;

/// Which vertices acquire immunity after recovering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Full process: every vertex becomes immune after recovery.
    X,
    /// Root-only immunity: leaves drop straight back to susceptible.
    Y,
    /// No immunity anywhere (classic SIS).
    Sis,
}

impl Variant {
    /// Does the root pass through the immune state?
    pub fn root_immune(self) -> bool {
        !matches!(self, Variant::Sis)
    }

    /// Do leaves pass through the immune state?
    pub fn leaves_immune(self) -> bool {
        matches!(self, Variant::X)
    }

    /// Stable lower-case name (used in file formats).
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::X => "x",
            Variant::Y => "y",
            Variant::Sis => "sis",
        }
    }
}

/// State of a single vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VertexState {
    Susceptible,
    Infected,
    Recovered,
}

/// Simulation engine selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EngineKind {
    /// Exact lumped Gillespie chain on `(root, i, r)`.
    Lumped,
    /// Per-vertex graphical construction driven by explicit Poisson clocks.
    General,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Lumped => "lumped",
            EngineKind::General => "general",
        }
    }
}

/// Default simulation horizon: runs reaching it are flagged censored.
pub const DEFAULT_HORIZON: f64 = 1e8;

/// Model parameters for a star with `n` leaves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcessParams {
    /// Number of leaves (the star has `n + 1` vertices).  `n = 0` is legal:
    /// the survival time is then a unit-rate exponential.
    pub n: u32,
    /// Infection rate across each edge.
    pub lambda: f64,
    /// De-immunization rate; must be positive for variants with immunity and
    /// is ignored by [`Variant::Sis`].
    pub alpha: f64,
    pub variant: Variant,
}

impl ProcessParams {
    pub fn new(n: u32, lambda: f64, alpha: f64, variant: Variant) -> Result<Self> {
        let p = ProcessParams {
            n,
            lambda,
            alpha,
            variant,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(
                "lambda must be positive and finite",
            ));
        }
        match self.variant {
            Variant::X | Variant::Y => {
                if !(self.alpha > 0.0) || !self.alpha.is_finite() {
                    return Err(Error::InvalidParameter(
                        "alpha must be positive and finite",
                    ));
                }
            }
            Variant::Sis => {
                if self.alpha.is_nan() || self.alpha < 0.0 {
                    return Err(Error::InvalidParameter(
                        "alpha must be non-negative (it is ignored for SIS)",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Lumped state of the star: root state plus leaf counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StarState {
    pub root: VertexState,
    /// Number of infected leaves (`i`).
    pub infected_leaves: u32,
    /// Number of immune leaves (`r`); identically 0 for Y and SIS.
    pub immune_leaves: u32,
}

impl StarState {
    /// Canonical initial condition: infected root, all leaves susceptible.
    pub fn initial() -> Self {
        StarState {
            root: VertexState::Infected,
            infected_leaves: 0,
            immune_leaves: 0,
        }
    }

    /// Counts must fit the leaf budget; Y/SIS admit no immune leaves.
    pub fn validate(&self, params: &ProcessParams) -> Result<()> {
        let total = self
            .infected_leaves
            .checked_add(self.immune_leaves)
            .ok_or(Error::InvalidInput("leaf counts overflow"))?;
        if total > params.n {
            return Err(Error::InvalidInput("leaf counts exceed n"));
        }
        if self.immune_leaves > 0 && !params.variant.leaves_immune() {
            return Err(Error::InvalidInput(
                "immune leaves are impossible for this variant",
            ));
        }
        if self.root == VertexState::Recovered && !params.variant.root_immune() {
            return Err(Error::InvalidInput(
                "an immune root is impossible for SIS",
            ));
        }
        Ok(())
    }

    /// The epidemic is over: nothing is infected.
    pub fn is_absorbing(&self) -> bool {
        self.root != VertexState::Infected && self.infected_leaves == 0
    }
}

/// One transition of the lumped chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StarEvent {
    /// Root `I -> R` (X, Y) or `I -> S` (SIS).
    RootRecover,
    /// Root `R -> S`.
    RootDeimmunize,
    /// Root `S -> I` by an infected leaf; starts a new round.
    RootReinfect,
    /// A susceptible leaf becomes infected (root must be infected).
    LeafInfect,
    /// An infected leaf recovers (to `R` for X, to `S` otherwise).
    LeafRecover,
    /// An immune leaf becomes susceptible again (X only).
    LeafDeimmunize,
}

/// Transition rates out of a lumped state: at most four are active at once.
#[derive(Clone, Copy, Debug)]
pub struct RateTable {
    len: u8,
    events: [StarEvent; 4],
    rates: [f64; 4],
}

impl RateTable {
    fn empty() -> Self {
        RateTable {
            len: 0,
            events: [StarEvent::RootRecover; 4],
            rates: [0.0; 4],
        }
    }

    #[inline]
    fn push(&mut self, event: StarEvent, rate: f64) {
        if rate > 0.0 {
            let i = usize::from(self.len);
            self.events[i] = event;
            self.rates[i] = rate;
            self.len += 1;
        }
    }

    /// Active `(event, rate)` pairs, in a fixed canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (StarEvent, f64)> + '_ {
        (0..usize::from(self.len)).map(move |i| (self.events[i], self.rates[i]))
    }

    pub fn len(&self) -> usize {
        usize::from(self.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Total outflow rate.
    pub fn total(&self) -> f64 {
        self.rates[..usize::from(self.len)].iter().sum()
    }
}

/// Exact transition rates of the lumped chain at `state`.
///
/// With `i` infected and `r` immune leaves out of `n`:
///
/// * root infected: root recovers at 1, a susceptible leaf is infected at
///   `lambda * (n - i - r)`, an infected leaf recovers at `i`, an immune leaf
///   wakes at `alpha * r`;
/// * root immune: root wakes at `alpha`, leaves as above minus infection;
/// * root susceptible: root is reinfected at `lambda * i`, leaves as above.
///
/// Leaf infection requires an infected root — this is where the star
/// topology enters — and `r` is frozen at 0 for variants without leaf
/// immunity.
pub fn star_transition_rates(params: &ProcessParams, state: &StarState) -> RateTable {
    let i = state.infected_leaves;
    let r = state.immune_leaves;
    let susceptible = params.n - i - r;
    let mut table = RateTable::empty();
    match state.root {
        VertexState::Infected => {
            table.push(StarEvent::RootRecover, 1.0);
            table.push(StarEvent::LeafInfect, params.lambda * f64::from(susceptible));
        }
        VertexState::Recovered => {
            table.push(StarEvent::RootDeimmunize, params.alpha);
        }
        VertexState::Susceptible => {
            table.push(StarEvent::RootReinfect, params.lambda * f64::from(i));
        }
    }
    table.push(StarEvent::LeafRecover, f64::from(i));
    if params.variant.leaves_immune() {
        table.push(StarEvent::LeafDeimmunize, params.alpha * f64::from(r));
    }
    table
}

/// Apply one lumped transition in place.
pub fn apply_star_event(params: &ProcessParams, state: &mut StarState, event: StarEvent) {
    match event {
        StarEvent::RootRecover => {
            debug_assert_eq!(state.root, VertexState::Infected);
            state.root = if params.variant.root_immune() {
                VertexState::Recovered
            } else {
                VertexState::Susceptible
            };
        }
        StarEvent::RootDeimmunize => {
            debug_assert_eq!(state.root, VertexState::Recovered);
            state.root = VertexState::Susceptible;
        }
        StarEvent::RootReinfect => {
            debug_assert_eq!(state.root, VertexState::Susceptible);
            debug_assert!(state.infected_leaves > 0);
            state.root = VertexState::Infected;
        }
        StarEvent::LeafInfect => {
            debug_assert_eq!(state.root, VertexState::Infected);
            debug_assert!(state.infected_leaves + state.immune_leaves < params.n);
            state.infected_leaves += 1;
        }
        StarEvent::LeafRecover => {
            debug_assert!(state.infected_leaves > 0);
            state.infected_leaves -= 1;
            if params.variant.leaves_immune() {
                state.immune_leaves += 1;
            }
        }
        StarEvent::LeafDeimmunize => {
            debug_assert!(state.immune_leaves > 0);
            state.immune_leaves -= 1;
        }
    }
}

/// Outcome of one survival run from the canonical initial condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurvivalSample {
    /// Extinction time of the infection (the survival time `tau`), or the
    /// horizon if `censored`.
    pub tau: f64,
    /// Number of successful rounds (root reinfections).
    pub psi: u32,
    /// Number of applied transitions.
    pub events: u64,
    /// Minimum over the run of the non-immune fraction of leaves
    /// `(n - r_t) / n`; defined as 1 when `n = 0` or no leaf is ever immune.
    pub min_non_immune_fraction: f64,
    /// True when the horizon was reached before extinction; censored samples
    /// carry `tau = horizon` and must be excluded from survival means.
    pub censored: bool,
}

/// What a survival run should record beyond the summary sample.
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Censoring horizon (must be positive).
    pub horizon: f64,
    /// Record per-round structure (see [`crate::rounds`]).
    pub capture_rounds: bool,
    /// Record the full applied-transition log (memory-heavy; for audits).
    pub capture_events: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            horizon: DEFAULT_HORIZON,
            capture_rounds: false,
            capture_events: false,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter("horizon must be positive"));
        }
        Ok(())
    }

    pub fn with_rounds() -> Self {
        RunOptions {
            capture_rounds: true,
            ..Self::default()
        }
    }
}

/// One applied transition of a star trajectory, as seen by the round
/// extractor: the lumped event, its absolute time, and the number of
/// infected leaves immediately after it applies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryEvent {
    pub time: f64,
    pub event: StarEvent,
    pub infected_leaves_after: u32,
}

/// A captured star trajectory: the applied transitions plus the data the
/// round extractor needs to complete the final round's immunity span.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StarTrajectory {
    pub events: Vec<TrajectoryEvent>,
    /// Absorption time (equals the last event time for a completed run).
    pub final_time: f64,
    /// When the run absorbed with an immune root: the (strictly later) time
    /// at which that immunity would have ended, so the final round still
    /// carries a complete `Exp(alpha)` immunity span.
    pub immunity_completion: Option<f64>,
}

/// Full output of a survival run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub sample: SurvivalSample,
    /// Round decomposition (empty unless requested; censored runs record no
    /// rounds since their final round is incomplete).
    pub rounds: Vec<RoundRecord>,
    /// Raw trajectory (only when `capture_events` was set and the run was
    /// not censored).
    pub trajectory: Option<StarTrajectory>,
}

/// Sample one survival run of the star process from the canonical initial
/// condition, using the selected engine.
///
/// Both engines sample exactly the same law; the lumped engine is the fast
/// default, the general engine realizes the full per-vertex graphical
/// construction and is capped at [`GENERAL_ENGINE_MAX_VERTICES`] vertices.
pub fn run_survival(
    params: &ProcessParams,
    seed: &SeedSpec,
    engine: EngineKind,
    options: &RunOptions,
) -> Result<RunOutput> {
    match engine {
        EngineKind::Lumped => run_survival_lumped(params, seed, options),
        EngineKind::General => run_survival_general(params, seed, options),
    }
}

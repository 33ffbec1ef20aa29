//! Per-vertex engine: the graphical construction made executable.
//!
//! Every vertex owns a recovery clock (rate 1) and, where the variant grants
//! immunity, a de-immunization clock (rate `alpha`); every edge owns two
//! directed infection clocks (rate `lambda`).  All clocks run from time 0,
//! independent of the state; a firing is *applied* only when the state
//! matches (recovery needs an infected vertex, infection an infected source
//! and susceptible target, de-immunization an immune vertex).  This realizes
//! the process on arbitrary graphs and doubles as an independent check of
//! the lumped engine on stars.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::{
    ProcessParams, RunOptions, RunOutput, StarEvent, StarState, StarTrajectory, SurvivalSample,
    TrajectoryEvent, Variant, VertexState,
};
use crate::rng::{ClockBundle, ClockClass, ClockId, SeedSpec};
use crate::rounds::RoundObserver;
use crate::{Error, Result};

/// Vertex budget of the per-vertex engine (the lumped engine has no such
/// limit on stars).
pub const GENERAL_ENGINE_MAX_VERTICES: u32 = 10_000;

/// A finite simple undirected graph on vertices `0..n_vertices`.
#[derive(Clone, Debug)]
pub struct Graph {
    n_vertices: u32,
    edges: Vec<(u32, u32)>,
}

impl Graph {
    /// Build a graph, rejecting self-loops, duplicate edges (in either
    /// orientation) and out-of-range endpoints.
    pub fn new(n_vertices: u32, edges: Vec<(u32, u32)>) -> Result<Self> {
        if n_vertices == 0 {
            return Err(Error::InvalidInput("graph needs at least one vertex"));
        }
        let mut seen = BTreeSet::new();
        for &(u, v) in &edges {
            if u >= n_vertices || v >= n_vertices {
                return Err(Error::InvalidInput("edge endpoint out of range"));
            }
            if u == v {
                return Err(Error::InvalidInput("self-loops are not allowed"));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidInput("duplicate edge"));
            }
        }
        Ok(Graph { n_vertices, edges })
    }

    /// The star with hub 0 and `n` leaves `1..=n`.
    pub fn star(n: u32) -> Result<Self> {
        let n_vertices = n
            .checked_add(1)
            .ok_or(Error::InvalidInput("too many leaves"))?;
        let edges = (1..=n).map(|leaf| (0, leaf)).collect();
        Graph::new(n_vertices, edges)
    }

    pub fn n_vertices(&self) -> u32 {
        self.n_vertices
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }
}

/// A per-vertex process definition: graph, rates, and immunity variant.
/// The variant's "root" is the distinguished vertex 0 (on stars, the hub).
#[derive(Clone, Debug)]
pub struct GeneralConfig {
    pub graph: Graph,
    pub lambda: f64,
    pub alpha: f64,
    pub variant: Variant,
}

impl GeneralConfig {
    pub fn new(graph: Graph, lambda: f64, alpha: f64, variant: Variant) -> Result<Self> {
        if graph.n_vertices() > GENERAL_ENGINE_MAX_VERTICES {
            return Err(Error::Capacity(
                "graph exceeds the per-vertex engine's vertex budget",
            ));
        }
        // Rate validation matches the lumped parameterization.
        ProcessParams::new(0, lambda, alpha, variant)?;
        Ok(GeneralConfig {
            graph,
            lambda,
            alpha,
            variant,
        })
    }

    /// Canonical clock layout: recovery clocks for all vertices (rate 1),
    /// then de-immunization clocks (rate `alpha`) for every vertex under
    /// full immunity, only vertex 0 under root-only immunity, and none
    /// without immunity; then two directed infection clocks per edge
    /// (rate `lambda`), edge `k = (u, v)` owning ids `2k` (`u -> v`) and
    /// `2k + 1` (`v -> u`).
    pub fn clock_layout(&self) -> Vec<(ClockId, f64)> {
        let nv = self.graph.n_vertices();
        let mut layout = Vec::with_capacity(2 * nv as usize + 2 * self.graph.edges().len());
        for v in 0..nv {
            layout.push((ClockId::new(ClockClass::Recovery, v), 1.0));
        }
        match self.variant {
            Variant::X => {
                for v in 0..nv {
                    layout.push((ClockId::new(ClockClass::Deimmunization, v), self.alpha));
                }
            }
            Variant::Y => {
                layout.push((ClockId::new(ClockClass::Deimmunization, 0), self.alpha));
            }
            Variant::Sis => {}
        }
        for (k, _) in self.graph.edges().iter().enumerate() {
            layout.push((ClockId::new(ClockClass::Infection, 2 * k as u32), self.lambda));
            layout.push((
                ClockId::new(ClockClass::Infection, 2 * k as u32 + 1),
                self.lambda,
            ));
        }
        layout
    }

    /// The state an infected vertex recovers into under this variant.
    fn recovery_target(&self, vertex: u32) -> VertexState {
        let immune = match self.variant {
            Variant::X => true,
            Variant::Y => vertex == 0,
            Variant::Sis => false,
        };
        if immune {
            VertexState::Recovered
        } else {
            VertexState::Susceptible
        }
    }
}

/// A state change actually applied by a clock firing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AppliedTransition {
    pub vertex: u32,
    pub from: VertexState,
    pub to: VertexState,
    /// For infections, the already-infected source endpoint.
    pub infection_source: Option<u32>,
}

/// One firing of the merged clock sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub time: f64,
    pub clock: ClockId,
    /// `None` when the firing found a non-matching state and was skipped.
    pub applied: Option<AppliedTransition>,
}

/// Advance the per-vertex process by one clock firing.
///
/// `states` is indexed by vertex; the bundle must have been built from
/// [`GeneralConfig::clock_layout`].  Skipped firings still advance their
/// clock (the graphical construction discards them).
pub fn step_general(
    config: &GeneralConfig,
    states: &mut [VertexState],
    bundle: &mut ClockBundle,
) -> Result<StepOutcome> {
    if states.len() != config.graph.n_vertices() as usize {
        return Err(Error::InvalidInput("state vector does not match graph"));
    }
    let (time, clock) = bundle
        .next_event()
        .ok_or(Error::Internal("no scheduled clocks"))?;
    let applied = match clock.class {
        ClockClass::Recovery => {
            let v = clock.index;
            if states[v as usize] == VertexState::Infected {
                let to = config.recovery_target(v);
                states[v as usize] = to;
                Some(AppliedTransition {
                    vertex: v,
                    from: VertexState::Infected,
                    to,
                    infection_source: None,
                })
            } else {
                None
            }
        }
        ClockClass::Deimmunization => {
            let v = clock.index;
            if states[v as usize] == VertexState::Recovered {
                states[v as usize] = VertexState::Susceptible;
                Some(AppliedTransition {
                    vertex: v,
                    from: VertexState::Recovered,
                    to: VertexState::Susceptible,
                    infection_source: None,
                })
            } else {
                None
            }
        }
        ClockClass::Infection => {
            let k = (clock.index / 2) as usize;
            let (u, v) = config.graph.edges()[k];
            let (source, target) = if clock.index % 2 == 0 { (u, v) } else { (v, u) };
            if states[source as usize] == VertexState::Infected
                && states[target as usize] == VertexState::Susceptible
            {
                states[target as usize] = VertexState::Infected;
                Some(AppliedTransition {
                    vertex: target,
                    from: VertexState::Susceptible,
                    to: VertexState::Infected,
                    infection_source: Some(source),
                })
            } else {
                None
            }
        }
    };
    Ok(StepOutcome {
        time,
        clock,
        applied,
    })
}

/// Translate an applied transition on a star into the lumped event alphabet.
fn star_event_of(t: &AppliedTransition) -> StarEvent {
    use VertexState::{Infected, Recovered, Susceptible};
    if t.vertex == 0 {
        match (t.from, t.to) {
            (Infected, Recovered) | (Infected, Susceptible) => StarEvent::RootRecover,
            (Recovered, Susceptible) => StarEvent::RootDeimmunize,
            (Susceptible, Infected) => StarEvent::RootReinfect,
            _ => unreachable!("illegal root transition"),
        }
    } else {
        match (t.from, t.to) {
            (Susceptible, Infected) => StarEvent::LeafInfect,
            (Infected, _) => StarEvent::LeafRecover,
            (Recovered, Susceptible) => StarEvent::LeafDeimmunize,
            _ => unreachable!("illegal leaf transition"),
        }
    }
}

/// Run one survival sample of the star process on the per-vertex engine.
///
/// Samples the same law as [`super::run_survival_lumped`]; `events` counts
/// applied transitions (skipped firings are not state changes), so summary
/// samples are directly comparable across engines.
pub fn run_survival_general(
    params: &ProcessParams,
    seed: &SeedSpec,
    options: &RunOptions,
) -> Result<RunOutput> {
    params.validate()?;
    options.validate()?;
    let config = GeneralConfig::new(
        Graph::star(params.n)?,
        params.lambda,
        params.alpha,
        params.variant,
    )?;
    let layout = config.clock_layout();
    let mut bundle = ClockBundle::new(seed, &layout)?;
    let nv = config.graph.n_vertices() as usize;
    let mut states = alloc::vec![VertexState::Susceptible; nv];
    states[0] = VertexState::Infected;

    let sis = params.variant == Variant::Sis;
    let mut observer = options.capture_rounds.then(RoundObserver::new);
    let mut trajectory = options.capture_events.then(StarTrajectory::default);

    let mut t = 0.0f64;
    let mut infected_total = 1u32;
    let mut infected_leaves = 0u32;
    let mut immune_leaves = 0u32;
    let mut max_immune = 0u32;
    let mut psi = 0u32;
    let mut events = 0u64;
    let mut censored = false;

    while infected_total > 0 {
        let step = step_general(&config, &mut states, &mut bundle)?;
        if step.time > options.horizon {
            t = options.horizon;
            censored = true;
            break;
        }
        let Some(applied) = step.applied else {
            continue;
        };
        t = step.time;
        events += 1;
        match (applied.from, applied.to) {
            (VertexState::Susceptible, VertexState::Infected) => {
                infected_total += 1;
                if applied.vertex != 0 {
                    infected_leaves += 1;
                } else {
                    psi = psi
                        .checked_add(1)
                        .ok_or(Error::Capacity("successful-round count overflow"))?;
                }
            }
            (VertexState::Infected, to) => {
                infected_total -= 1;
                if applied.vertex != 0 {
                    infected_leaves -= 1;
                    if to == VertexState::Recovered {
                        immune_leaves += 1;
                    }
                }
            }
            (VertexState::Recovered, VertexState::Susceptible) => {
                if applied.vertex != 0 {
                    immune_leaves -= 1;
                }
            }
            _ => unreachable!("illegal transition"),
        }
        max_immune = max_immune.max(immune_leaves);
        let event = star_event_of(&applied);
        if let Some(obs) = observer.as_mut() {
            obs.on_event(t, event, infected_leaves, sis)?;
        }
        if let Some(traj) = trajectory.as_mut() {
            traj.events.push(TrajectoryEvent {
                time: t,
                event,
                infected_leaves_after: infected_leaves,
            });
        }
    }

    // The pending de-immunization time of the root clock is exactly the
    // graphical construction's answer to "when would this immunity have
    // ended": it is strictly in the future of every popped event.
    let completion = if !censored
        && states[0] == VertexState::Recovered
        && (observer.is_some() || trajectory.is_some())
    {
        let c = bundle
            .next_time_of(ClockId::new(ClockClass::Deimmunization, 0))
            .ok_or(Error::Internal("immune root without a de-immunization clock"))?;
        Some(c)
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

    debug_assert!(censored || (infected_leaves == 0 && states[0] != VertexState::Infected));
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

/// Reconstruct the lumped view of a per-vertex state vector (handy in
/// audits; root is vertex 0).
pub fn lumped_view(states: &[VertexState]) -> StarState {
    let mut infected = 0u32;
    let mut immune = 0u32;
    for &s in &states[1..] {
        match s {
            VertexState::Infected => infected += 1,
            VertexState::Recovered => immune += 1,
            VertexState::Susceptible => {}
        }
    }
    StarState {
        root: states[0],
        infected_leaves: infected,
        immune_leaves: immune,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn seed(k: u64) -> SeedSpec {
        SeedSpec::with_path(1701, &[k]).unwrap()
    }

    #[test]
    fn graph_validation() {
        assert!(Graph::new(0, alloc::vec![]).is_err());
        assert!(Graph::new(3, alloc::vec![(0, 3)]).is_err());
        assert!(Graph::new(3, alloc::vec![(1, 1)]).is_err());
        assert!(Graph::new(3, alloc::vec![(0, 1), (1, 0)]).is_err());
        let g = Graph::new(3, alloc::vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(g.n_vertices(), 3);
        assert_eq!(g.edges().len(), 3);
        let star = Graph::star(4).unwrap();
        assert_eq!(star.n_vertices(), 5);
        assert_eq!(star.edges(), &[(0, 1), (0, 2), (0, 3), (0, 4)]);
    }

    #[test]
    fn vertex_budget_is_enforced() {
        let g = Graph::new(GENERAL_ENGINE_MAX_VERTICES + 1, alloc::vec![]).unwrap();
        match GeneralConfig::new(g, 1.0, 1.0, Variant::X) {
            Err(Error::Capacity(_)) => {}
            other => panic!("expected capacity error, got {other:?}"),
        }
        let p = ProcessParams::new(GENERAL_ENGINE_MAX_VERTICES, 1.0, 1.0, Variant::X).unwrap();
        match run_survival_general(&p, &seed(0), &RunOptions::default()) {
            Err(Error::Capacity(_)) => {}
            other => panic!("expected capacity error, got {:?}", other.map(|o| o.sample)),
        }
    }

    #[test]
    fn clock_layout_shapes() {
        let star = |v| Graph::star(v).unwrap();
        let x = GeneralConfig::new(star(3), 0.5, 1.0, Variant::X).unwrap();
        // 4 recovery + 4 de-immunization + 6 infection.
        assert_eq!(x.clock_layout().len(), 14);
        let y = GeneralConfig::new(star(3), 0.5, 1.0, Variant::Y).unwrap();
        assert_eq!(y.clock_layout().len(), 11);
        let sis = GeneralConfig::new(star(3), 0.5, 0.0, Variant::Sis).unwrap();
        assert_eq!(sis.clock_layout().len(), 10);
        // Canonical order: recoveries first, indexed by vertex.
        let layout = x.clock_layout();
        assert_eq!(layout[0].0, ClockId::new(ClockClass::Recovery, 0));
        assert_eq!(layout[4].0, ClockId::new(ClockClass::Deimmunization, 0));
        // Edge k = 1 is (0, 2): directed ids 2 and 3.
        assert_eq!(layout[8 + 2].0, ClockId::new(ClockClass::Infection, 2));
        assert_eq!(layout[8 + 2].1, 0.5);
    }

    #[test]
    fn zero_leaf_survival_is_unit_exponential() {
        let p = ProcessParams::new(0, 2.0, 0.5, Variant::X).unwrap();
        let mut taus: Vec<f64> = (0..20_000u64)
            .map(|k| {
                let out = run_survival_general(&p, &seed(k), &RunOptions::default()).unwrap();
                assert_eq!(out.sample.events, 1);
                assert_eq!(out.sample.psi, 0);
                out.sample.tau
            })
            .collect();
        let d = stats::ks_one_sample(&mut taus, |x| -f64::exp_m1(-x)).unwrap();
        assert!(d < stats::ks_critical(0.001, taus.len()), "D = {d}");
    }

    #[test]
    fn single_leaf_mean_matches_exact_value() {
        // E[tau] = 4/3 for n = 1, lambda = alpha = 1, full variant.
        let p = ProcessParams::new(1, 1.0, 1.0, Variant::X).unwrap();
        let taus: Vec<f64> = (0..30_000u64)
            .map(|k| {
                run_survival_general(&p, &seed(k), &RunOptions::default())
                    .unwrap()
                    .sample
                    .tau
            })
            .collect();
        let s = stats::summarize(&taus).unwrap();
        assert!(
            (s.mean - 4.0 / 3.0).abs() < 4.0 * s.se,
            "mean {} +- {}",
            s.mean,
            s.se
        );
    }

    #[test]
    fn step_audit_on_a_triangle() {
        // Shadow-track states through raw steps and check every applied
        // transition is legal and every skip really had a non-matching
        // state.
        let config = GeneralConfig::new(
            Graph::new(3, alloc::vec![(0, 1), (1, 2), (2, 0)]).unwrap(),
            0.8,
            0.6,
            Variant::X,
        )
        .unwrap();
        for k in 0..50u64 {
            let mut bundle = ClockBundle::new(&seed(k), &config.clock_layout()).unwrap();
            let mut states = alloc::vec![
                VertexState::Infected,
                VertexState::Susceptible,
                VertexState::Susceptible
            ];
            let mut shadow = states.clone();
            let mut last_time = 0.0;
            let mut infected = 1i32;
            while infected > 0 {
                let step = step_general(&config, &mut states, &mut bundle).unwrap();
                assert!(step.time > last_time);
                last_time = step.time;
                match step.applied {
                    Some(tr) => {
                        assert_eq!(shadow[tr.vertex as usize], tr.from);
                        match (tr.from, tr.to) {
                            (VertexState::Susceptible, VertexState::Infected) => {
                                let src = tr.infection_source.unwrap();
                                assert_eq!(shadow[src as usize], VertexState::Infected);
                                infected += 1;
                            }
                            (VertexState::Infected, VertexState::Recovered) => {
                                assert!(tr.infection_source.is_none());
                                infected -= 1;
                            }
                            (VertexState::Recovered, VertexState::Susceptible) => {
                                assert!(tr.infection_source.is_none());
                            }
                            other => panic!("illegal transition {other:?}"),
                        }
                        shadow[tr.vertex as usize] = tr.to;
                    }
                    None => {
                        // The skip must be justified by the shadow state.
                        match step.clock.class {
                            ClockClass::Recovery => assert_ne!(
                                shadow[step.clock.index as usize],
                                VertexState::Infected
                            ),
                            ClockClass::Deimmunization => assert_ne!(
                                shadow[step.clock.index as usize],
                                VertexState::Recovered
                            ),
                            ClockClass::Infection => {
                                let kk = (step.clock.index / 2) as usize;
                                let (u, v) = config.graph.edges()[kk];
                                let (s, t) = if step.clock.index % 2 == 0 {
                                    (u, v)
                                } else {
                                    (v, u)
                                };
                                assert!(
                                    shadow[s as usize] != VertexState::Infected
                                        || shadow[t as usize] != VertexState::Susceptible
                                );
                            }
                        }
                    }
                }
                assert_eq!(states, shadow);
            }
        }
    }

    #[test]
    fn round_capture_matches_lumped_contract() {
        let p = ProcessParams::new(10, 0.6, 1.0, Variant::X).unwrap();
        for k in 0..100u64 {
            let out = run_survival_general(&p, &seed(k), &RunOptions::with_rounds()).unwrap();
            let rounds = &out.rounds;
            assert_eq!(rounds.len(), out.sample.psi as usize + 1);
            assert!(rounds[..rounds.len() - 1].iter().all(|r| r.succeeded));
            let last = rounds.last().unwrap();
            assert!(!last.succeeded);
            if last.tau_i_s > out.sample.tau {
                assert_eq!(last.infected_at_immunity_end, 0);
            }
            for r in rounds {
                assert!(r.tau_i < r.tau_i_r && r.tau_i_r < r.tau_i_s);
            }
        }
    }

    #[test]
    fn trajectory_replay_matches_rounds() {
        let p = ProcessParams::new(8, 0.5, 0.9, Variant::X).unwrap();
        let opts = RunOptions {
            capture_rounds: true,
            capture_events: true,
            ..RunOptions::default()
        };
        for k in 0..60u64 {
            let out = run_survival_general(&p, &seed(k), &opts).unwrap();
            let traj = out.trajectory.as_ref().unwrap();
            assert_eq!(
                crate::rounds::extract_rounds(traj, p.variant).unwrap(),
                out.rounds
            );
            assert_eq!(traj.events.len() as u64, out.sample.events);
        }
    }

    #[test]
    fn sis_runs_have_no_immunity() {
        let p = ProcessParams::new(5, 0.8, 0.0, Variant::Sis).unwrap();
        let opts = RunOptions {
            capture_events: true,
            ..RunOptions::default()
        };
        for k in 0..50u64 {
            let out = run_survival_general(&p, &seed(k), &opts).unwrap();
            assert_eq!(out.sample.min_non_immune_fraction, 1.0);
            for ev in &out.trajectory.as_ref().unwrap().events {
                assert!(!matches!(
                    ev.event,
                    StarEvent::RootDeimmunize | StarEvent::LeafDeimmunize
                ));
            }
        }
    }

    #[test]
    fn determinism_per_seed() {
        let p = ProcessParams::new(12, 0.4, 1.2, Variant::X).unwrap();
        let a = run_survival_general(&p, &seed(5), &RunOptions::with_rounds()).unwrap();
        let b = run_survival_general(&p, &seed(5), &RunOptions::with_rounds()).unwrap();
        assert_eq!(a.sample.tau, b.sample.tau);
        assert_eq!(a.rounds, b.rounds);
        let c = run_survival_general(&p, &seed(6), &RunOptions::with_rounds()).unwrap();
        assert_ne!(a.sample.tau, c.sample.tau);
    }

    #[test]
    fn censoring_truncates_at_horizon() {
        let p = ProcessParams::new(200, 1.0, 1.0, Variant::X).unwrap();
        let opts = RunOptions {
            horizon: 0.25,
            capture_rounds: true,
            ..RunOptions::default()
        };
        let out = run_survival_general(&p, &seed(2), &opts).unwrap();
        assert!(out.sample.censored);
        assert_eq!(out.sample.tau, 0.25);
        assert!(out.rounds.is_empty());
    }

    #[test]
    fn lumped_view_counts_leaves() {
        let states = alloc::vec![
            VertexState::Recovered,
            VertexState::Infected,
            VertexState::Susceptible,
            VertexState::Recovered,
            VertexState::Infected,
        ];
        let view = lumped_view(&states);
        assert_eq!(view.root, VertexState::Recovered);
        assert_eq!(view.infected_leaves, 2);
        assert_eq!(view.immune_leaves, 1);
    }
}

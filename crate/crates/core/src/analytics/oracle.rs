//! Exact mean survival time and mean successful-round count by solving the
//! first-step equations of the lumped chain.
//!
//! The leaf-exchangeable chain on states `(root, i, r)` is finite, so for
//! every transient state `s` the expectations satisfy
//!
//! ```text
//! Lambda_s E_s[tau] - sum_t q_{s,t} E_t[tau] = 1
//! Lambda_s E_s[Psi] - sum_t q_{s,t} E_t[Psi] = (reinfection rate out of s)
//! ```
//!
//! where the sums run over transient targets and `Lambda_s` is the total
//! rate.  One LU factorization solves both systems; the returned values are
//! taken at the canonical initial state (infected root, all leaves
//! susceptible).

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::linalg::lu_factor;
use crate::process::{
    apply_star_event, star_transition_rates, ProcessParams, StarEvent, StarState, Variant,
    VertexState,
};
use crate::{Error, Result};

/// Largest transient-state count the dense solver will accept.  Keeps the
/// factorization in the tens of milliseconds-to-seconds range; the full
/// variant needs roughly `3 n^2 / 2` states, the others `O(n)`.
pub const ORACLE_MAX_STATES: usize = 2048;

/// Output of [`exact_mean_survival`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleSolution {
    /// Number of transient states in the solved system.
    pub num_states: usize,
    /// Mean time to extinction from the canonical initial state.
    pub expected_tau: f64,
    /// Mean number of root reinfections (successful rounds) before
    /// extinction.
    pub expected_psi: f64,
}

fn root_code(v: VertexState) -> u8 {
    match v {
        VertexState::Infected => 0,
        VertexState::Recovered => 1,
        VertexState::Susceptible => 2,
    }
}

fn state_key(s: &StarState) -> (u8, u32, u32) {
    (root_code(s.root), s.infected_leaves, s.immune_leaves)
}

fn transient_states(params: &ProcessParams) -> Result<Vec<StarState>> {
    let n = params.n;
    let roots: &[VertexState] = match params.variant {
        Variant::X | Variant::Y => &[
            VertexState::Infected,
            VertexState::Recovered,
            VertexState::Susceptible,
        ],
        Variant::Sis => &[VertexState::Infected, VertexState::Susceptible],
    };
    let mut states = Vec::new();
    for &root in roots {
        for i in 0..=n {
            let r_max = if params.variant.leaves_immune() { n - i } else { 0 };
            for r in 0..=r_max {
                let s = StarState {
                    root,
                    infected_leaves: i,
                    immune_leaves: r,
                };
                if s.is_absorbing() {
                    continue;
                }
                states.push(s);
                if states.len() > ORACLE_MAX_STATES {
                    return Err(Error::Capacity(
                        "lumped chain exceeds the dense-solver state budget",
                    ));
                }
            }
        }
    }
    Ok(states)
}

/// Exact expectations for every transient state of the lumped chain.
#[derive(Clone, Debug)]
pub struct OracleProfile {
    /// Transient states in enumeration order.
    pub states: Vec<StarState>,
    /// Mean time to extinction from each state.
    pub expected_tau: Vec<f64>,
    /// Mean number of future root reinfections from each state.
    pub expected_psi: Vec<f64>,
}

impl OracleProfile {
    /// Position of a state within the profile.
    pub fn position(&self, state: &StarState) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }
}

/// Solve the lumped chain exactly for the mean survival time and the mean
/// number of future successful rounds from every transient state.
pub fn exact_survival_profile(params: &ProcessParams) -> Result<OracleProfile> {
    params.validate()?;
    let states = transient_states(params)?;
    let ns = states.len();
    let mut index = BTreeMap::new();
    for (k, s) in states.iter().enumerate() {
        index.insert(state_key(s), k);
    }

    // Row s: M[s][s] = Lambda_s, M[s][t] -= q_{s,t} for transient t.
    let mut matrix = vec![0.0f64; ns * ns];
    let mut b_tau = vec![1.0f64; ns];
    let mut b_psi = vec![0.0f64; ns];
    for (s, state) in states.iter().enumerate() {
        let table = star_transition_rates(params, state);
        debug_assert!(!table.is_empty(), "transient state must have exits");
        matrix[s * ns + s] = table.total();
        for (event, rate) in table.iter() {
            let mut target = *state;
            apply_star_event(params, &mut target, event);
            if event == StarEvent::RootReinfect {
                b_psi[s] += rate;
            }
            if !target.is_absorbing() {
                let t = index[&state_key(&target)];
                matrix[s * ns + t] -= rate;
            }
        }
    }

    let lu = lu_factor(matrix, ns)?;
    lu.solve(&mut b_tau)?;
    lu.solve(&mut b_psi)?;

    Ok(OracleProfile {
        states,
        expected_tau: b_tau,
        expected_psi: b_psi,
    })
}

/// Solve the lumped chain exactly for the mean survival time and the mean
/// number of successful rounds, starting from the canonical initial state.
pub fn exact_mean_survival(params: &ProcessParams) -> Result<OracleSolution> {
    let profile = exact_survival_profile(params)?;
    let start = profile
        .position(&StarState::initial())
        .ok_or(Error::Internal("initial state missing from the profile"))?;
    Ok(OracleSolution {
        num_states: profile.states.len(),
        expected_tau: profile.expected_tau[start],
        expected_psi: profile.expected_psi[start],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u32, lambda: f64, alpha: f64, variant: Variant) -> ProcessParams {
        ProcessParams::new(n, lambda, alpha, variant).unwrap()
    }

    #[test]
    fn zero_leaves_is_unit_exponential() {
        for variant in [Variant::X, Variant::Y, Variant::Sis] {
            let sol = exact_mean_survival(&params(0, 0.7, 1.3, variant)).unwrap();
            assert_eq!(sol.num_states, 1);
            assert!((sol.expected_tau - 1.0).abs() < 1e-14);
            assert!(sol.expected_psi.abs() < 1e-14);
        }
    }

    #[test]
    fn hand_solved_full_variant() {
        // One leaf, lambda = alpha = 1, full immunity: five transient
        // states give E[tau] = 4/3 and E[Psi] = 1/12 by pencil and paper.
        let sol = exact_mean_survival(&params(1, 1.0, 1.0, Variant::X)).unwrap();
        assert_eq!(sol.num_states, 5);
        assert!((sol.expected_tau - 4.0 / 3.0).abs() < 1e-12, "{}", sol.expected_tau);
        assert!((sol.expected_psi - 1.0 / 12.0).abs() < 1e-12, "{}", sol.expected_psi);
    }

    #[test]
    fn hand_solved_root_only_variant() {
        // One leaf, lambda = alpha = 1, root-only immunity: four transient
        // states give E[tau] = 7/5 and E[Psi] = 1/10.
        let sol = exact_mean_survival(&params(1, 1.0, 1.0, Variant::Y)).unwrap();
        assert_eq!(sol.num_states, 4);
        assert!((sol.expected_tau - 1.4).abs() < 1e-12, "{}", sol.expected_tau);
        assert!((sol.expected_psi - 0.1).abs() < 1e-12, "{}", sol.expected_psi);
    }

    #[test]
    fn hand_solved_no_immunity_variant() {
        // One leaf, lambda = 1, no immunity: three transient states give
        // E[tau] = 3/2 and E[Psi] = 1/4.
        let sol = exact_mean_survival(&params(1, 1.0, 0.0, Variant::Sis)).unwrap();
        assert_eq!(sol.num_states, 3);
        assert!((sol.expected_tau - 1.5).abs() < 1e-12, "{}", sol.expected_tau);
        assert!((sol.expected_psi - 0.25).abs() < 1e-12, "{}", sol.expected_psi);
    }

    #[test]
    fn state_counts_match_combinatorics() {
        // Full variant: (n+1)(n+2)/2 infected-root states plus n(n+1) others.
        for n in [1u32, 4, 9] {
            let sol = exact_mean_survival(&params(n, 0.5, 1.0, Variant::X)).unwrap();
            let want = ((n + 1) * (n + 2) / 2 + n * (n + 1)) as usize;
            assert_eq!(sol.num_states, want, "n={n}");
            let sol = exact_mean_survival(&params(n, 0.5, 1.0, Variant::Y)).unwrap();
            assert_eq!(sol.num_states, (3 * n + 1) as usize, "n={n}");
            let sol = exact_mean_survival(&params(n, 0.5, 0.0, Variant::Sis)).unwrap();
            assert_eq!(sol.num_states, (2 * n + 1) as usize, "n={n}");
        }
    }

    #[test]
    fn jacobi_iteration_agrees_with_lu() {
        // Independent solver: fixed-point iteration of the first-step
        // equations, which converges because the chain is absorbing.
        let p = params(3, 0.7, 1.3, Variant::X);
        let states = transient_states(&p).unwrap();
        let ns = states.len();
        let mut index = BTreeMap::new();
        for (k, s) in states.iter().enumerate() {
            index.insert(state_key(s), k);
        }
        let mut tau = vec![0.0f64; ns];
        let mut psi = vec![0.0f64; ns];
        for _ in 0..200_000 {
            let mut next_tau = vec![0.0f64; ns];
            let mut next_psi = vec![0.0f64; ns];
            for (s, state) in states.iter().enumerate() {
                let table = star_transition_rates(&p, state);
                let total = table.total();
                let mut t_acc = 1.0;
                let mut p_acc = 0.0;
                for (event, rate) in table.iter() {
                    let mut target = *state;
                    apply_star_event(&p, &mut target, event);
                    if event == StarEvent::RootReinfect {
                        p_acc += rate;
                    }
                    if !target.is_absorbing() {
                        let t = index[&state_key(&target)];
                        t_acc += rate * tau[t];
                        p_acc += rate * psi[t];
                    }
                }
                next_tau[s] = t_acc / total;
                next_psi[s] = p_acc / total;
            }
            tau = next_tau;
            psi = next_psi;
        }
        let sol = exact_mean_survival(&p).unwrap();
        let start = index[&state_key(&StarState::initial())];
        assert!(
            (sol.expected_tau - tau[start]).abs() < 1e-9 * tau[start],
            "{} vs {}",
            sol.expected_tau,
            tau[start]
        );
        assert!(
            (sol.expected_psi - psi[start]).abs() < 1e-9,
            "{} vs {}",
            sol.expected_psi,
            psi[start]
        );
    }

    #[test]
    fn survival_grows_with_leaves() {
        let mut last_tau = 0.0;
        let mut last_psi = -1.0;
        for n in 1..=10u32 {
            let sol = exact_mean_survival(&params(n, 1.0, 1.0, Variant::X)).unwrap();
            assert!(sol.expected_tau > last_tau, "n={n}");
            assert!(sol.expected_psi > last_psi, "n={n}");
            last_tau = sol.expected_tau;
            last_psi = sol.expected_psi;
        }
    }

    #[test]
    fn immunity_ordering_of_successful_rounds() {
        // Leaf immunity can only reduce the number of successful rounds:
        // E[Psi_X] <= E[Psi_Y] at identical parameters (exact solve).
        for &(n, lambda, alpha) in &[(5u32, 0.8, 1.0), (8, 0.4, 0.6), (3, 2.0, 2.0)] {
            let x = exact_mean_survival(&params(n, lambda, alpha, Variant::X)).unwrap();
            let y = exact_mean_survival(&params(n, lambda, alpha, Variant::Y)).unwrap();
            assert!(
                x.expected_psi < y.expected_psi,
                "n={n} lambda={lambda} alpha={alpha}: {} vs {}",
                x.expected_psi,
                y.expected_psi
            );
        }
    }

    #[test]
    fn profile_exposes_consistent_per_state_values() {
        let p = params(4, 0.9, 1.1, Variant::X);
        let profile = exact_survival_profile(&p).unwrap();
        assert_eq!(profile.states.len(), profile.expected_tau.len());
        assert_eq!(profile.states.len(), profile.expected_psi.len());
        // No absorbing states appear, every expectation is positive time.
        for (s, &t) in profile.states.iter().zip(&profile.expected_tau) {
            assert!(!s.is_absorbing());
            assert!(t > 0.0);
        }
        // The canonical initial state reproduces the summary solve.
        let sol = exact_mean_survival(&p).unwrap();
        let start = profile.position(&StarState::initial()).unwrap();
        assert_eq!(profile.expected_tau[start].to_bits(), sol.expected_tau.to_bits());
        assert_eq!(profile.expected_psi[start].to_bits(), sol.expected_psi.to_bits());
        // More infected leaves at an infected root prolong survival.
        let lo = profile
            .position(&StarState { root: VertexState::Infected, infected_leaves: 1, immune_leaves: 0 })
            .unwrap();
        let hi = profile
            .position(&StarState { root: VertexState::Infected, infected_leaves: 4, immune_leaves: 0 })
            .unwrap();
        assert!(profile.expected_tau[hi] > profile.expected_tau[lo]);
    }

    #[test]
    fn capacity_guard_trips() {
        match exact_mean_survival(&params(2000, 1.0, 1.0, Variant::X)) {
            Err(Error::Capacity(_)) => {}
            other => panic!("expected capacity error, got {other:?}"),
        }
    }
}

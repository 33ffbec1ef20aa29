//! The lumped chain and the per-vertex clock construction must sample the
//! same survival law.

use starsim_core::analytics::exact_mean_survival;
use starsim_core::experiment::compare_engines;
use starsim_core::process::{
    run_survival, EngineKind, ProcessParams, RunOptions, Variant,
};
use starsim_core::rng::SeedSpec;
use starsim_core::stats;

#[test]
fn engines_agree_on_a_full_immunity_point() {
    let params = ProcessParams::new(100, 0.2, 1.0, Variant::X).unwrap();
    let cmp = compare_engines(&params, 6_000, 11, 0.001).unwrap();
    assert!(
        cmp.ok,
        "z_tau {} z_psi {} ks {} vs {}",
        cmp.z_tau, cmp.z_psi, cmp.ks_stat, cmp.ks_critical
    );
}

#[test]
fn engines_agree_without_immunity() {
    let params = ProcessParams::new(40, 0.6, 0.0, Variant::Sis).unwrap();
    let cmp = compare_engines(&params, 6_000, 12, 0.001).unwrap();
    assert!(
        cmp.ok,
        "z_tau {} z_psi {} ks {} vs {}",
        cmp.z_tau, cmp.z_psi, cmp.ks_stat, cmp.ks_critical
    );
}

#[test]
fn both_engines_match_the_exact_single_leaf_mean() {
    let params = ProcessParams::new(1, 1.0, 1.0, Variant::X).unwrap();
    let exact = exact_mean_survival(&params).unwrap().expected_tau;
    assert!((exact - 4.0 / 3.0).abs() < 1e-12);
    for (engine, master) in [(EngineKind::Lumped, 21u64), (EngineKind::General, 22)] {
        let taus: Vec<f64> = (0..20_000u64)
            .map(|k| {
                let seed = SeedSpec::with_path(master, &[k]).unwrap();
                run_survival(&params, &seed, engine, &RunOptions::default())
                    .unwrap()
                    .sample
                    .tau
            })
            .collect();
        let s = stats::summarize(&taus).unwrap();
        assert!(
            (s.mean - exact).abs() < 4.0 * s.se,
            "{engine:?}: mean {} vs {exact}",
            s.mean
        );
    }
}

#[test]
fn each_engine_is_deterministic_per_seed() {
    let params = ProcessParams::new(25, 0.35, 0.9, Variant::X).unwrap();
    let seed = SeedSpec::new(987);
    for engine in [EngineKind::Lumped, EngineKind::General] {
        let a = run_survival(&params, &seed, engine, &RunOptions::default()).unwrap();
        let b = run_survival(&params, &seed, engine, &RunOptions::default()).unwrap();
        assert_eq!(a.sample.tau.to_bits(), b.sample.tau.to_bits());
        assert_eq!(a.sample.psi, b.sample.psi);
        assert_eq!(a.sample.events, b.sample.events);
        assert_eq!(
            a.sample.min_non_immune_fraction.to_bits(),
            b.sample.min_non_immune_fraction.to_bits()
        );
    }
}

#[test]
fn root_only_immunity_agrees_across_engines() {
    let params = ProcessParams::new(50, 1.0, 0.5, Variant::Y).unwrap();
    let cmp = compare_engines(&params, 4_000, 13, 0.001).unwrap();
    assert!(
        cmp.ok,
        "z_tau {} z_psi {} ks {} vs {}",
        cmp.z_tau, cmp.z_psi, cmp.ks_stat, cmp.ks_critical
    );
}

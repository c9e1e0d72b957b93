//! Invariants checked on random inputs.

mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use ssopt_core::builtin::Builtin;
use ssopt_core::optimizer::{f0, stationary_density};
use ssopt_core::simulate::{simulate_policy, SimConfig};

use common::*;

fn dbm() -> &'static Solved {
    static S: OnceLock<Solved> = OnceLock::new();
    S.get_or_init(|| Solved::new(Builtin::DbmClassic))
}

fn gbm() -> &'static Solved {
    static S: OnceLock<Solved> = OnceLock::new();
    S.get_or_init(|| Solved::new(Builtin::GbmNonlinear))
}

proptest! {
    #[test]
    fn h_satisfies_its_four_properties(x in -1e6f64..1e6) {
        h_properties(x).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn h_near_the_splice(x in -1.5f64..1.5) {
        h_properties(x).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn gn_is_bounded_by_n(g in prop::num::f64::NORMAL, n in 1usize..1000) {
        gn_bounded(g, n).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn gn_approaches_g0(g in -1e3f64..1e3, n in 1usize..1000) {
        let gap = (ssopt_core::verify::gn_of(g, n) - g).abs();
        let bound = g.abs() * ssopt_core::verify::h_function(g) / n as f64;
        prop_assert!(gap <= bound * (1.0 + 1e-12), "gap {gap} > {bound}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn stationary_law_has_unit_mass(y in -3.0f64..1.0, w in 0.1f64..4.0) {
        let s = dbm();
        let pi = stationary_density(s.kf.clone(), y, y + w).unwrap();
        prop_assert!((pi.total_mass().unwrap() - 1.0).abs() <= 1e-6);
        let (dg, dz) = s.kf.cycle_stats(y, y + w).unwrap();
        prop_assert!(rel(pi.running_cost().unwrap(), dg / dz) <= 1e-6);
    }

    #[test]
    fn gbm_stationary_law_has_unit_mass(y in 0.05f64..2.0, r in 1.1f64..5.0) {
        let s = gbm();
        let pi = stationary_density(s.kf.clone(), y, y * r).unwrap();
        prop_assert!((pi.total_mass().unwrap() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn optimum_is_below_every_band(y in -4.0f64..1.0, w in 0.05f64..5.0) {
        let s = dbm();
        prop_assert!(f0(&s.kf, y, y + w).unwrap() >= s.sol.f0_star * (1.0 - 1e-12));
    }

    #[test]
    fn gn_bounded_along_the_state_space(x in -50.0f64..50.0, n in 1usize..20) {
        let g = dbm().g0();
        let v = ssopt_core::verify::gn(&g, n, x).unwrap();
        prop_assert!(v.abs() <= n as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn f0_is_gauge_invariant(base in -4.0f64..4.0, y in -2.0f64..0.5, w in 0.3f64..3.0) {
        gauge_invariant(&dbm().problem, base, y, y + w).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn gbm_f0_is_gauge_invariant(base in 0.1f64..8.0, y in 0.2f64..1.0, r in 1.2f64..4.0) {
        gauge_invariant(&gbm().problem, base, y, y * r).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn costs_scale_the_optimum(lambda in 0.05f64..20.0) {
        let s = dbm();
        cost_homogeneous(&s.problem, &s.sol, lambda).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn seed_fixes_the_simulation(seed in 0u64..1000, threads in 2usize..9) {
        let p = Builtin::GbmNonlinear.default_problem().unwrap();
        let cfg = SimConfig::new(1e-2, 50.0, 12, seed);
        let run = |t: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
            pool.install(|| simulate_policy(&p.model, &p.costs, 0.2, 1.3, &cfg).unwrap())
        };
        prop_assert_eq!(run(1), run(threads));
    }
}

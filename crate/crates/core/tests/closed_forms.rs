//! Key functions and cycle ratios against hand-derived closed forms, over
//! several parameter sets.

mod common;

use ssopt_core::builtin::Builtin;
use ssopt_core::costs::piecewise_k4_bound;
use ssopt_core::optimizer::f0;
use ssopt_core::simulate::{simulate_policy, SimConfig};

use common::*;

#[test]
fn dbm_classic_matches_closed_form() {
    for o in [&[][..], &[("mu_bar", 0.5), ("sigma", 1.5), ("c_b", 3.0), ("c_h", 0.5), ("x0", 0.5)]] {
        let p = params(Builtin::DbmClassic, o);
        let kf = keyfns(&Builtin::DbmClassic.problem(&p).unwrap());
        let e = closed_form_error(&kf, &dbm_closed(&p), &linspace(-5.0, 5.0, 50));
        assert!(e.iter().all(|&v| v <= 1e-8), "{o:?}: {e:?}");
    }
}

#[test]
fn rdbm_exponential_term_has_derived_coefficient() {
    for o in [&[][..], &[("mu_bar", 2.0), ("sigma", 0.5), ("k3", 0.5), ("k4", 3.0)], &[("sigma", 2.0), ("x0", 2.0)]] {
        let p = params(Builtin::RdbmConcave, o);
        let kf = keyfns(&Builtin::RdbmConcave.problem(&p).unwrap());
        let probes = linspace(0.1, 10.0, 50);
        let e = closed_form_error(&kf, &rdbm_closed(&p, rdbm_coefficient_derived(&p)), &probes);
        assert!(e.iter().all(|&v| v <= 1e-8), "{o:?}: {e:?}");
        // The quoted coefficient 2k4σ²/(2μ̄ + σ²)² is smaller by the factor σ²/(2μ̄ + σ²).
        let q = closed_form_error(&kf, &rdbm_closed(&p, rdbm_coefficient_reference(&p)), &probes);
        assert!(q[1] > 1e-3, "{o:?}: {q:?}");
    }
}

#[test]
fn gbm_power_term_has_derived_rate() {
    for o in [&[][..], &[("mu", 1.0), ("sigma", 0.6), ("beta", -0.5), ("k4", 2.0)], &[("sigma", 1.4), ("beta", -2.0)]] {
        let p = params(Builtin::GbmNonlinear, o);
        let kf = keyfns(&Builtin::GbmNonlinear.problem(&p).unwrap());
        let e = closed_form_error(&kf, &gbm_closed(&p, gbm_rho_derived(&p)), &logspace(0.05, 20.0, 50));
        assert!(e.iter().all(|&v| v <= 1e-8), "{o:?}: {e:?}");
    }
    // σ²β²/2 − μβ drops the −σ²β/2 from the second-derivative term.
    let p = params(Builtin::GbmNonlinear, &[]);
    assert_eq!(gbm_rho_derived(&p), 1.5);
    assert_eq!(gbm_rho_reference(&p), 1.0);
    let kf = keyfns(&Builtin::GbmNonlinear.default_problem().unwrap());
    assert!(rel(kf.g0(2.0).unwrap(), 7.0 / 3.0) < 1e-10);
}

#[test]
fn piecewise_ratio_at_one_and_e() {
    for p in piecewise_sets() {
        let kf = keyfns(&Builtin::GbmPiecewise.problem(&p).unwrap());
        let num = f0(&kf, 1.0, std::f64::consts::E).unwrap();
        assert!(rel(num, piecewise_f0_derived(&p)) <= 1e-9, "{p:?}: {num}");
        // The quoted expression, also used as the k4 bound, is exactly twice the ratio.
        assert!(rel(piecewise_f0_reference(&p), 2.0 * num) <= 1e-12);
        assert_eq!(piecewise_k4_bound(p["k1"], p["k2"], p["k3"], p["mu"], p["sigma"]), piecewise_f0_reference(&p));
    }
}

#[test]
fn piecewise_ratio_is_the_simulated_average_cost() {
    let p = Builtin::GbmPiecewise.default_problem().unwrap();
    let r = simulate_policy(&p.model, &p.costs, 1.0, std::f64::consts::E, &SimConfig::new(2e-3, 400.0, 32, 5)).unwrap();
    let derived = piecewise_f0_derived(&params(Builtin::GbmPiecewise, &[]));
    assert!(r.avg_cost.covers(derived, 4.0), "{:?} vs {derived}", r.avg_cost);
    assert!(rel(r.avg_cost.mean, derived) < 0.05);
}

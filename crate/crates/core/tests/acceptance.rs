//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Built with `harness = false` so the lines always show.

mod common;

use std::cell::OnceCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssopt_core::builtin::Builtin;
use ssopt_core::keyfns::AuxiliaryG0;
use ssopt_core::optimizer::{f0, grid_oracle, stationary_density, SolverStatus};
use ssopt_core::report::Verdict;
use ssopt_core::simulate::{
    compare_occupation, estimate_hitting_time, simulate_policy, transversality_diagnostic, transversality_target,
    SimConfig, SimulationResult,
};
use ssopt_core::verify::{check_qvi, VerifyConfig};

use common::*;

type Outcome = Result<String, String>;

/// Dynamics and cost models with an optimal band.
const MINIMIZERS: [Builtin; 4] =
    [Builtin::DbmClassic, Builtin::RdbmConcave, Builtin::GbmNonlinear, Builtin::GbmPiecewise];

/// Models run at full Monte Carlo scale against the optimum.
const SIMULATED: [Builtin; 2] = [Builtin::DbmClassic, Builtin::GbmNonlinear];

fn acceptance_sim() -> SimConfig {
    SimConfig::new(1e-3, 2000.0, 64, 0)
}

/// Solutions and long simulations, each computed once.
struct Runs {
    solved: [OnceCell<Solved>; 5],
    /// Runs at the optimum with the plain G0 trace (K = 0).
    plain: [OnceCell<SimulationResult>; 5],
}

impl Runs {
    fn new() -> Self {
        Runs { solved: Default::default(), plain: Default::default() }
    }

    fn idx(b: Builtin) -> usize {
        Builtin::ALL.iter().position(|&c| c == b).unwrap()
    }

    fn solved(&self, b: Builtin) -> &Solved {
        self.solved[Self::idx(b)].get_or_init(|| Solved::new(b))
    }

    fn plain(&self, b: Builtin) -> &SimulationResult {
        self.plain[Self::idx(b)].get_or_init(|| {
            let s = self.solved(b);
            transversality_diagnostic(&s.g0(), s.sol.y_star, s.sol.z_star, 0.0, &acceptance_sim()).expect("simulation")
        })
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn closed_forms(_: &Runs) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let cases: [(Builtin, Vec<f64>); 3] = [
        (Builtin::DbmClassic, linspace(-5.0, 5.0, 50)),
        (Builtin::RdbmConcave, linspace(0.1, 10.0, 50)),
        (Builtin::GbmNonlinear, logspace((-3.0f64).exp(), 3.0f64.exp(), 50)),
    ];
    for (b, probes) in cases {
        let p = params(b, &[]);
        let kf = keyfns(&b.default_problem().unwrap());
        let (quoted, derived) = match b {
            Builtin::DbmClassic => (dbm_closed(&p), dbm_closed(&p)),
            Builtin::RdbmConcave => {
                (rdbm_closed(&p, rdbm_coefficient_reference(&p)), rdbm_closed(&p, rdbm_coefficient_derived(&p)))
            }
            _ => (gbm_closed(&p, gbm_rho_reference(&p)), gbm_closed(&p, gbm_rho_derived(&p))),
        };
        let e = closed_form_error(&kf, &quoted, &probes);
        let d = closed_form_error(&kf, &derived, &probes);
        let worst = e.iter().cloned().fold(0.0, f64::max);
        let pass = worst <= 1e-6;
        ok &= pass;
        lines.push(format!(
            "{b}: max rel err (g0, g0', ζ, ζ') = ({:.1e}, {:.1e}, {:.1e}, {:.1e}){}; re-derived form {:.1e}",
            e[0],
            e[1],
            e[2],
            e[3],
            if pass { "" } else { " FAIL" },
            d.iter().cloned().fold(0.0, f64::max)
        ));
    }
    check(ok, lines.join("\n    "))
}

fn piecewise_value(_: &Runs) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for p in piecewise_sets() {
        let prob = Builtin::GbmPiecewise.problem(&p).map_err(|e| e.to_string())?;
        let num = f0(&keyfns(&prob), 1.0, std::f64::consts::E).map_err(|e| e.to_string())?;
        let quoted = piecewise_f0_reference(&p);
        let e = rel(num, quoted);
        ok &= e <= 1e-6;
        lines.push(format!(
            "mu {} sigma {} k1 {} k2 {} k3 {}: F0(1,e) = {num:.12} vs closed form {quoted:.12} (rel {e:.1e}, ratio {:.6}); re-derived {:.12}",
            p["mu"],
            p["sigma"],
            p["k1"],
            p["k2"],
            p["k3"],
            quoted / num,
            piecewise_f0_derived(&p)
        ));
    }
    check(ok, lines.join("\n    "))
}

fn verdicts(runs: &Runs) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for b in Builtin::ALL {
        let s = runs.solved(b);
        if b == Builtin::GbmLinear {
            let pass = s.sol.status == SolverStatus::NoMinimizerInfimumZero;
            ok &= pass;
            lines.push(format!("{b}: {:?}", s.sol.status));
            continue;
        }
        if !s.sol.is_minimizer() {
            ok = false;
            lines.push(format!("{b}: {:?}, expected Minimizer", s.sol.status));
            continue;
        }
        let g = grid_oracle(&s.kf, s.sol.search_box[0], s.sol.search_box[1], 400).map_err(|e| e.to_string())?;
        let e = rel(g.f0, s.sol.f0_star);
        ok &= e <= 1e-4;
        lines.push(format!(
            "{b}: Minimizer (y*, z*) = ({:.8}, {:.8}), F0* = {:.10}; 400×400 grid {:.10} (rel {e:.1e})",
            s.sol.y_star, s.sol.z_star, s.sol.f0_star, g.f0
        ));
    }
    check(ok, lines.join("\n    "))
}

fn qvi(runs: &Runs) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for b in MINIMIZERS {
        let s = runs.solved(b);
        let rep = check_qvi(&s.kf, &s.g0(), &s.sol, &VerifyConfig::default()).map_err(|e| e.to_string())?;
        ok &= rep.checks.iter().all(|c| c.verdict == Verdict::Pass);
        let parts: Vec<String> =
            rep.checks.iter().map(|c| format!("{} {:?} {:.1e}", c.name, c.verdict, c.residual)).collect();
        lines.push(format!("{b}: {}", parts.join(", ")));
    }
    check(ok, lines.join("\n    "))
}

fn simulation(runs: &Runs) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for b in SIMULATED {
        let s = runs.solved(b);
        let r = runs.plain(b);
        let (f, kappa) = (s.sol.f0_star, s.kappa());
        let z_cost = (r.avg_cost.mean - f) / r.avg_cost.stderr;
        let gap = rel(r.avg_cost.mean, f);
        let z_rate = (r.order_rate.mean - kappa) / r.order_rate.stderr;
        ok &= z_cost.abs() <= 3.0 && gap <= 0.02 && z_rate.abs() <= 3.0;
        lines.push(format!(
            "{b}: avg_cost {:.5} ± {:.5} vs F0* {f:.5} ({z_cost:+.2} se, {:+.2}%); order_rate {:.5} ± {:.5} vs κ {kappa:.5} ({z_rate:+.2} se)",
            r.avg_cost.mean,
            r.avg_cost.stderr,
            100.0 * (r.avg_cost.mean - f) / f,
            r.order_rate.mean,
            r.order_rate.stderr
        ));
    }
    check(ok, lines.join("\n    "))
}

fn renewal(runs: &Runs) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for b in [Builtin::DbmClassic, Builtin::RdbmConcave, Builtin::GbmNonlinear] {
        let s = runs.solved(b);
        for i in 0..5 {
            let (y, z) = match b {
                Builtin::DbmClassic => {
                    let y = rng.random_range(-2.0..1.0);
                    (y, y + rng.random_range(0.25..2.5))
                }
                Builtin::RdbmConcave => {
                    let y = rng.random_range(0.0..1.5);
                    (y, y + rng.random_range(0.25..2.5))
                }
                _ => {
                    let y = rng.random_range(0.3..1.5);
                    (y, y * rng.random_range(1.25..3.0))
                }
            };
            let cfg = SimConfig::new(1e-3, 100.0, 2000, 100 + i);
            let h = estimate_hitting_time(&s.problem.model, z, y, &cfg).map_err(|e| e.to_string())?;
            let target = s.kf.zeta(z).unwrap() - s.kf.zeta_ext(y).unwrap();
            let zs = (h.mean - target) / h.stderr;
            ok &= zs.abs() <= 3.0 && h.censored == 0;
            lines.push(format!(
                "{b} ({y:.4}, {z:.4}): {:.4} ± {:.4} vs ζ(z) − ζ(y) = {target:.4} ({zs:+.2} se, {} censored)",
                h.mean, h.stderr, h.censored
            ));
        }
    }
    check(ok, lines.join("\n    "))
}

fn occupation(runs: &Runs) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for b in MINIMIZERS {
        let s = runs.solved(b);
        let (y, z) = (s.sol.y_star, s.sol.z_star);
        let r = match b {
            Builtin::DbmClassic | Builtin::GbmNonlinear => runs.plain(b).clone(),
            _ => simulate_policy(&s.problem.model, &s.problem.costs, y, z, &acceptance_sim())
                .map_err(|e| e.to_string())?,
        };
        let pi = stationary_density(s.kf.clone(), y, z).map_err(|e| e.to_string())?;
        let cmp = compare_occupation(&r, &pi).map_err(|e| e.to_string())?;
        let total = pi.total_mass().map_err(|e| e.to_string())?;
        let (dg, dz) = s.kf.cycle_stats(y, z).unwrap();
        let cost = pi.running_cost().map_err(|e| e.to_string())?;
        let e_cost = rel(cost, dg / dz);
        ok &= cmp.l1 <= 0.05 && (total - 1.0).abs() <= 1e-6 && e_cost <= 1e-6;
        lines.push(format!(
            "{b}: L1 {:.4}; ∫π − 1 = {:.1e}; ∫c0 dπ {cost:.10} vs Bg0/Bζ {:.10} (rel {e_cost:.1e})",
            cmp.l1,
            total - 1.0,
            dg / dz
        ));
    }
    check(ok, lines.join("\n    "))
}

fn transversality(runs: &Runs) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for b in SIMULATED {
        let s = runs.solved(b);
        let g0: AuxiliaryG0 = s.g0();
        let (y, z) = (s.sol.y_star, s.sol.z_star);
        let plain = runs.plain(b).transversality_trace.last().cloned().ok_or("empty trace")?;
        let control = transversality_diagnostic(&g0, y, z, 1.0, &acceptance_sim()).map_err(|e| e.to_string())?;
        let last = control.transversality_trace.last().cloned().ok_or("empty trace")?;
        let target = transversality_target(&g0, y, z, 1.0).map_err(|e| e.to_string())?;
        let (z0, z1) = (plain.value / plain.stderr, (last.value - target) / last.stderr);
        ok &= z0.abs() <= 3.0 && z1.abs() <= 3.0;
        lines.push(format!(
            "{b}: K = 0 at t = {}: {:.5} ± {:.5} ({z0:+.2} se); K = 1: {:.5} ± {:.5} vs {target:.5} ({z1:+.2} se)",
            plain.t, plain.value, plain.stderr, last.value, last.stderr
        ));
    }
    check(ok, lines.join("\n    "))
}

fn runner(cases: u32) -> TestRunner {
    let cfg = Config { cases, failure_persistence: None, ..Config::default() };
    let rng = TestRng::deterministic_rng(cfg.rng_algorithm);
    TestRunner::new_with_rng(cfg, rng)
}

fn suite<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), String>,
) -> Result<String, String> {
    let mut r = runner(cases);
    match r.run(&strategy, |v| test(v).map_err(TestCaseError::fail)) {
        Ok(()) => Ok(format!("{name}: {cases} cases")),
        Err(TestError::Fail(why, v)) => Err(format!("{name}: {why} at {v:?}")),
        Err(TestError::Abort(why)) => Err(format!("{name}: aborted, {why}")),
    }
}

fn properties(runs: &Runs) -> Outcome {
    let dbm = runs.solved(Builtin::DbmClassic);
    let gbm = runs.solved(Builtin::GbmNonlinear);
    let g0 = dbm.g0();
    let grid = linspace(-20.0, 20.0, 401);
    let results = vec![
        suite("h properties", 10_000, -10.0f64..10.0, h_properties),
        suite("|G_n| ≤ n on G0 values", 10_000, (-1e12f64..1e12, 1usize..50), |(g, n)| gn_bounded(g, n)),
        [1, 2, 5, 10]
            .iter()
            .map(|&n| gn_bounded_on(&g0, n, &grid).map(|sup| format!("{sup:.4}")))
            .collect::<Result<Vec<_>, _>>()
            .map(|s| format!("|G_n| ≤ n on dbm-classic grid, sup for n = 1, 2, 5, 10: {}", s.join(", "))),
        suite("gauge invariance dbm-classic", 8, (-3.0f64..3.0, -2.0f64..0.5, 0.3f64..3.0), |(base, y, w)| {
            gauge_invariant(&dbm.problem, base, y, y + w)
        }),
        suite("gauge invariance gbm-nonlinear", 4, (0.2f64..5.0, 0.2f64..1.0, 1.2f64..4.0), |(base, y, r)| {
            gauge_invariant(&gbm.problem, base, y, y * r)
        }),
        suite("cost scaling dbm-classic", 4, 0.1f64..10.0, |l| cost_homogeneous(&dbm.problem, &dbm.sol, l)),
        suite("cost scaling gbm-nonlinear", 2, 0.1f64..10.0, |l| cost_homogeneous(&gbm.problem, &gbm.sol, l)),
        determinism(),
    ];
    let ok = results.iter().all(Result::is_ok);
    let lines: Vec<String> = results.into_iter().map(|r| r.unwrap_or_else(|e| format!("FAIL {e}"))).collect();
    check(ok, lines.join("\n    "))
}

/// Identical results from 1, 4 and 8 worker pools for a fixed seed.
fn determinism() -> Outcome {
    let cfg = SimConfig::new(1e-2, 200.0, 24, 11);
    let mut lines = Vec::new();
    for b in [Builtin::GbmNonlinear, Builtin::RdbmConcave] {
        let p = b.default_problem().unwrap();
        let (y, z) = if b == Builtin::RdbmConcave { (0.2, 2.5) } else { (0.2, 1.3) };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
            pool.install(|| simulate_policy(&p.model, &p.costs, y, z, &cfg)).map_err(|e| e.to_string())
        };
        let one = run(1)?;
        for t in [4, 8] {
            if run(t)? != one {
                return Err(format!("{b}: {t} workers differ from 1"));
            }
        }
        lines.push(b.name());
    }
    Ok(format!("simulation identical across 1/4/8 workers: {}", lines.join(", ")))
}

fn main() {
    let criteria: [(&str, fn(&Runs) -> Outcome); 9] = [
        ("closed-form key functions", closed_forms),
        ("F0(1, e) for gbm-piecewise", piecewise_value),
        ("existence verdicts and grid oracle", verdicts),
        ("QVI certificate", qvi),
        ("simulation consistency", simulation),
        ("renewal identity", renewal),
        ("occupation measure", occupation),
        ("transversality", transversality),
        ("property suites", properties),
    ];
    let runs = Runs::new();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(|| f(&runs))).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (tag, detail) = match out {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {tag} {name} ({:.1?})\n    {detail}", i + 1, t.elapsed());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

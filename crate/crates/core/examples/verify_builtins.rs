//! Solves and verifies every builtin problem, printing one line per check.

use std::sync::Arc;
use std::time::Instant;

use ssopt_core::builtin::Builtin;
use ssopt_core::keyfns::{build_g0, KeyFunctions, KeyfnsConfig};
use ssopt_core::optimizer::{minimize_f0, OptimizerConfig};
use ssopt_core::verify::{check_extra_condition, verify_solution, VerifyConfig};

fn main() {
    let cfg = VerifyConfig::default();
    for b in Builtin::ALL {
        let p = b.default_problem().expect("builtin parameters are valid");
        let t = Instant::now();
        let kf = Arc::new(KeyFunctions::new(&p.model, &p.costs, KeyfnsConfig::default()).expect("key functions"));
        let s = minimize_f0(&kf, &OptimizerConfig::default()).expect("solve");
        let rep = if s.is_minimizer() {
            let g0 = build_g0(kf.clone(), s.f0_star).expect("G0");
            verify_solution(&kf, &g0, &s, &cfg).expect("verify")
        } else {
            check_extra_condition(&kf, None, &cfg).expect("extra condition")
        };
        println!("{b}: {:?} ({:.2?})", s.status, t.elapsed());
        for c in &rep.checks {
            println!("    {:?} {} = {:e} [{}]", c.verdict, c.name, c.residual, c.note);
        }
    }
}

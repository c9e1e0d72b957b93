//! Solves every builtin problem and compares with the brute-force grid.

use std::time::Instant;

use ssopt_core::builtin::Builtin;
use ssopt_core::keyfns::{KeyFunctions, KeyfnsConfig};
use ssopt_core::optimizer::{grid_oracle, minimize_f0, OptimizerConfig};

fn main() {
    for b in Builtin::ALL {
        let p = b.default_problem().expect("builtin parameters are valid");
        let t = Instant::now();
        let kf = KeyFunctions::new(&p.model, &p.costs, KeyfnsConfig::default()).expect("key functions");
        let s = minimize_f0(&kf, &OptimizerConfig::default()).expect("solve");
        let solve = t.elapsed();
        println!(
            "{b}: {:?} y* = {:.10} z* = {:.10} F0* = {:.12} ({solve:.2?})",
            s.status, s.y_star, s.z_star, s.f0_star
        );
        if s.is_minimizer() {
            let (lo, hi) = (s.search_box[0], s.search_box[1]);
            let g = grid_oracle(&kf, lo, hi, 400).expect("oracle");
            println!(
                "    grid: y = {:.6} z = {:.6} F0 = {:.12} rel gap {:.2e}",
                g.y,
                g.z,
                g.f0,
                (s.f0_star - g.f0) / g.f0
            );
        }
        for line in &s.trace {
            println!("    {line}");
        }
    }
}

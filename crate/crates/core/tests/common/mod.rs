//! Analytic oracles and property checks shared by the integration targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use ssopt_core::builtin::{Builtin, Problem};
use ssopt_core::costs::CostStructure;
use ssopt_core::diffusion::DiffusionModel;
use ssopt_core::keyfns::{build_g0, AuxiliaryG0, KeyFunctions, KeyfnsConfig};
use ssopt_core::optimizer::{f0, minimize_f0, OptimizerConfig, PolicySolution};
use ssopt_core::verify::{gn, gn_of, h_function, h_prime, h_second};

pub fn rel(num: f64, exact: f64) -> f64 {
    (num - exact).abs() / exact.abs()
}

pub fn params(b: Builtin, overrides: &[(&str, f64)]) -> BTreeMap<String, f64> {
    let mut p = b.default_params();
    for &(k, v) in overrides {
        p.insert(k.to_string(), v);
    }
    p
}

pub fn keyfns(p: &Problem) -> Arc<KeyFunctions> {
    Arc::new(KeyFunctions::new(&p.model, &p.costs, KeyfnsConfig::default()).expect("key functions"))
}

/// A builtin solved with default settings.
pub struct Solved {
    pub problem: Problem,
    pub kf: Arc<KeyFunctions>,
    pub sol: PolicySolution,
}

impl Solved {
    pub fn new(b: Builtin) -> Self {
        let problem = b.default_problem().expect("builtin parameters are valid");
        let kf = keyfns(&problem);
        let sol = minimize_f0(&kf, &OptimizerConfig::default()).expect("solver runs");
        Solved { problem, kf, sol }
    }

    pub fn g0(&self) -> AuxiliaryG0 {
        build_g0(self.kf.clone(), self.sol.f0_star).expect("G0")
    }

    pub fn kappa(&self) -> f64 {
        1.0 / self.kf.cycle_stats(self.sol.y_star, self.sol.z_star).unwrap().1
    }
}

/// Closed-form key functions of one builtin: x ↦ (g0, g0', ζ, ζ') with g0
/// and ζ unanchored (callers subtract the value at x0).
pub type ClosedForm = Box<dyn Fn(f64) -> [f64; 4]>;

/// Drifted Brownian motion with back-order rate c_b and holding rate c_h.
pub fn dbm_closed(p: &BTreeMap<String, f64>) -> ClosedForm {
    let (m, s, cb, ch) = (p["mu_bar"], p["sigma"], p["c_b"], p["c_h"]);
    let s2 = s * s;
    Box::new(move |x| {
        let (g, gp) = if x < 0.0 {
            let e = (2.0 * m * x / s2).exp();
            (
                -cb / (2.0 * m) * x * x - s2 * cb / (2.0 * m * m) * x
                    + s2 * s2 * (cb + ch) / (4.0 * m.powi(3)) * (e - 1.0),
                -cb / m * x - s2 * cb / (2.0 * m * m) + s2 * (cb + ch) / (2.0 * m * m) * e,
            )
        } else {
            (ch / (2.0 * m) * x * x + s2 * ch / (2.0 * m * m) * x, ch / m * x + s2 * ch / (2.0 * m * m))
        };
        [g, gp, x / m, 1.0 / m]
    })
}

/// Coefficient of 1 − e^{−x} in g0 for the reflected model, as usually quoted.
pub fn rdbm_coefficient_reference(p: &BTreeMap<String, f64>) -> f64 {
    let (m, s, k4) = (p["mu_bar"], p["sigma"], p["k4"]);
    2.0 * k4 * s * s / (2.0 * m + s * s).powi(2)
}

/// The same coefficient re-derived from σ²g''/2 − μ̄g' = −k4e^{−x}.
pub fn rdbm_coefficient_derived(p: &BTreeMap<String, f64>) -> f64 {
    let (m, s, k4) = (p["mu_bar"], p["sigma"], p["k4"]);
    2.0 * k4 / (2.0 * m + s * s)
}

/// Reflected drifted BM with c0 = k3x + k4e^{−x}, given the coefficient of
/// 1 − e^{−x}.
pub fn rdbm_closed(p: &BTreeMap<String, f64>, coef: f64) -> ClosedForm {
    let (m, s, k3) = (p["mu_bar"], p["sigma"], p["k3"]);
    let s2 = s * s;
    Box::new(move |x| {
        let g = k3 * x * x / (2.0 * m) + k3 * s2 * x / (2.0 * m * m) + coef * (1.0 - (-x).exp());
        let gp = k3 * x / m + k3 * s2 / (2.0 * m * m) + coef * (-x).exp();
        [g, gp, x / m, 1.0 / m]
    })
}

/// ρ in the power term of g0 for GBM with c0 = k3x + k4x^β, as usually quoted.
pub fn gbm_rho_reference(p: &BTreeMap<String, f64>) -> f64 {
    let (mu, s, beta) = (p["mu"], p["sigma"], p["beta"]);
    s * s * beta * beta / 2.0 - mu * beta
}

/// ρ re-derived from A x^β = ρ x^β with A = −μx d/dx + (σ²x²/2) d²/dx².
pub fn gbm_rho_derived(p: &BTreeMap<String, f64>) -> f64 {
    let (mu, s, beta) = (p["mu"], p["sigma"], p["beta"]);
    s * s * beta * (beta - 1.0) / 2.0 - mu * beta
}

pub fn gbm_closed(p: &BTreeMap<String, f64>, rho: f64) -> ClosedForm {
    let (mu, s, k3, k4, beta) = (p["mu"], p["sigma"], p["k3"], p["k4"], p["beta"]);
    let c = 2.0 / (2.0 * mu + s * s);
    Box::new(move |x| {
        [k3 / mu * x - k4 / rho * x.powf(beta), k3 / mu - k4 * beta / rho * x.powf(beta - 1.0), c * x.ln(), c / x]
    })
}

/// `n` points evenly spread over [lo, hi].
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

/// Worst relative error of (g0, g0', ζ, ζ') over the probes, anchoring the
/// closed form at x0.
pub fn closed_form_error(kf: &KeyFunctions, closed: &ClosedForm, probes: &[f64]) -> [f64; 4] {
    let x0 = kf.model().x0;
    let base = closed(x0);
    let mut worst = [0.0f64; 4];
    for &x in probes {
        let kv = kf.eval(x).expect("probe inside the state space");
        let c = closed(x);
        let num = [kv.g0, kv.g0_prime(), kv.zeta, kv.zeta_prime()];
        let exact = [c[0] - base[0], c[1], c[2] - base[2], c[3]];
        for i in 0..4 {
            worst[i] = worst[i].max(rel(num[i], exact[i]));
        }
    }
    worst
}

/// F0(1, e) for the piecewise-linear GBM costs, in the quoted form. The same
/// expression bounds k4 from below.
pub fn piecewise_f0_reference(p: &BTreeMap<String, f64>) -> f64 {
    let (mu, s, k1, k2, k3) = (p["mu"], p["sigma"], p["k1"], p["k2"], p["k3"]);
    let e = std::f64::consts::E;
    (s * s + 2.0 * mu) * (k1 + k2 / 2.0 * (1.0 - (-0.5f64).exp()) + (k2 * mu + 2.0 * k3) / (2.0 * mu) * (e - 1.0))
        - 2.0 * k3
}

/// F0(1, e) from c1(1, e), g0(e) − g0(1) = (k3/μ)(e − 1) − 2k3/(2μ + σ²)
/// and ζ(e) − ζ(1) = 2/(2μ + σ²).
pub fn piecewise_f0_derived(p: &BTreeMap<String, f64>) -> f64 {
    let (mu, s, k1, k2, k3) = (p["mu"], p["sigma"], p["k1"], p["k2"], p["k3"]);
    let e = std::f64::consts::E;
    let d = 2.0 * mu + s * s;
    let c1 = k1 + k2 / 2.0 * (1.0 - (-0.5f64).exp()) + k2 / 2.0 * (e - 1.0);
    let dg = k3 / mu * (e - 1.0) - 2.0 * k3 / d;
    (c1 + dg) * d / 2.0
}

/// Parameter sets for the piecewise-linear GBM, each with k4 one above its
/// lower bound.
pub fn piecewise_sets() -> Vec<BTreeMap<String, f64>> {
    let raw: [&[(&str, f64)]; 3] = [
        &[],
        &[("mu", 0.8), ("sigma", 0.7), ("k1", 2.0), ("k2", 0.5), ("k3", 1.5)],
        &[("mu", 1.5), ("sigma", 1.2), ("k1", 0.5), ("k2", 2.0), ("k3", 0.25)],
    ];
    raw.iter()
        .map(|o| {
            let mut p = params(Builtin::GbmPiecewise, o);
            let bound = piecewise_f0_reference(&p);
            p.insert("k4".into(), bound + 1.0);
            p
        })
        .collect()
}

/// The four stated properties of h at x, up to rounding.
pub fn h_properties(x: f64) -> Result<(), String> {
    let (h, hp, hpp) = (h_function(x), h_prime(x), h_second(x));
    let tol = 4.0 * f64::EPSILON * (1.0 + x.abs() * (1.0 + hp.abs()));
    let lower = h - x * hp;
    if !(lower >= -tol && lower <= 0.375 + tol) {
        return Err(format!("h − xh' = {lower} at x = {x}"));
    }
    if !(h + x * hp >= -tol) {
        return Err(format!("h + xh' = {} at x = {x}", h + x * hp));
    }
    if !(h >= x.abs() - tol) {
        return Err(format!("h = {h} < |x| at x = {x}"));
    }
    if !(hpp >= 0.0) || (x.abs() >= 1.0 && hpp != 0.0) {
        return Err(format!("h'' = {hpp} at x = {x}"));
    }
    Ok(())
}

/// |G_n| ≤ n for a value of G0.
pub fn gn_bounded(g: f64, n: usize) -> Result<(), String> {
    let v = gn_of(g, n);
    if v.abs() <= n as f64 * (1.0 + 4.0 * f64::EPSILON) {
        Ok(())
    } else {
        Err(format!("|G_{n}| = {} for G0 = {g}", v.abs()))
    }
}

/// |G_n(x)| ≤ n along a state-space grid.
pub fn gn_bounded_on(g0: &AuxiliaryG0, n: usize, xs: &[f64]) -> Result<f64, String> {
    let mut sup = 0.0f64;
    for &x in xs {
        let v = gn(g0, n, x).map_err(|e| e.to_string())?;
        sup = sup.max(v.abs());
    }
    if sup <= n as f64 * (1.0 + 4.0 * f64::EPSILON) {
        Ok(sup)
    } else {
        Err(format!("sup |G_{n}| = {sup}"))
    }
}

/// F0(y, z) from g0 and ζ evaluated by literal double quadrature against
/// the model's scale and speed densities.
pub fn literal_f0(model: &DiffusionModel, costs: &CostStructure, y: f64, z: f64) -> Result<f64, String> {
    let kf = KeyFunctions::new(model, costs, KeyfnsConfig { literal: true, ..Default::default() })
        .map_err(|e| e.to_string())?;
    f0(&kf, y, z).map_err(|e| e.to_string())
}

/// Moving the scale-density base point leaves F0(y, z) unchanged.
pub fn gauge_invariant(p: &Problem, base: f64, y: f64, z: f64) -> Result<(), String> {
    let reference = f0(&keyfns(p), y, z).map_err(|e| e.to_string())?;
    let moved = p.model.clone().with_scale_base(base).map_err(|e| e.to_string())?;
    let v = literal_f0(&moved, &p.costs, y, z)?;
    if rel(v, reference) <= 1e-6 {
        Ok(())
    } else {
        Err(format!("F0({y}, {z}) = {v} with base {base}, {reference} with base x0"))
    }
}

/// Scaling both costs by λ scales F0* by λ and leaves (y*, z*) in place.
pub fn cost_homogeneous(p: &Problem, base: &PolicySolution, lambda: f64) -> Result<(), String> {
    let scaled = p.costs.scaled(lambda);
    let kf = Arc::new(KeyFunctions::new(&p.model, &scaled, KeyfnsConfig::default()).map_err(|e| e.to_string())?);
    let s = minimize_f0(&kf, &OptimizerConfig::default()).map_err(|e| e.to_string())?;
    let e_f = rel(s.f0_star, lambda * base.f0_star);
    let e_y = (s.y_star - base.y_star).abs() / (1.0 + base.y_star.abs());
    let e_z = (s.z_star - base.z_star).abs() / (1.0 + base.z_star.abs());
    if s.status == base.status && e_f <= 1e-6 && e_y <= 1e-4 && e_z <= 1e-4 {
        Ok(())
    } else {
        Err(format!(
            "λ = {lambda}: F0* {} vs {}, (y*, z*) = ({}, {}) vs ({}, {})",
            s.f0_star,
            lambda * base.f0_star,
            s.y_star,
            s.z_star,
            base.y_star,
            base.z_star
        ))
    }
}

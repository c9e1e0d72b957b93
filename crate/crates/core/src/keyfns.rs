//! The key functions g0 and ζ, their derivatives, the auxiliary function
//! G0 = g0 − F0*·ζ and expected cycle statistics.
//!
//! Both functions are evaluated through their derivative forms
//!
//! ```text
//! ζ'(x)  = 2 ∫_x^b e^{ψ(v) − ψ(x)} / σ²(v) dv
//! g0'(x) =   ∫_x^b e^{ψ(v) − ψ(x)} 2c0(v) / σ²(v) dv
//! ```
//!
//! tabulated on the log-scale profile and integrated once more from x0.
//! Points beyond the tabulated range fall back to direct quadrature.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::costs::CostStructure;
use crate::diffusion::{DiffusionModel, Side};
use crate::error::{Error, Result};
use crate::limits::{endpoint_limit, Limit};
use crate::profile::{
    dot, extrapolate_tail, sample_knots, Cumulative, Field, Nodes, Profile, ProfileConfig, Ray, Spectral, NODES,
};
use crate::quadrature::{integrate, integrate_nested, QuadratureConfig, QuadratureResult};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyfnsConfig {
    pub profile: ProfileConfig,
    /// Evaluate g0 and ζ by literal double quadrature with the model's scale
    /// and speed densities. Slow; meant for validation.
    pub literal: bool,
}

/// Key-function values at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyValues {
    pub x: f64,
    /// ψ(x) − ψ(x0).
    pub psi: f64,
    /// ∫_x^b e^{ψ(v) − ψ(x)} / σ²(v) dv, so ζ' = 2·r1.
    pub r1: f64,
    /// ∫_x^b e^{ψ(v) − ψ(x)} 2c0(v) / σ²(v) dv = g0'.
    pub rc: f64,
    pub zeta: f64,
    pub g0: f64,
    /// ∫_{x0}^x e^{−(ψ(u) − ψ(x0))} du.
    pub shat: f64,
    pub sigma2: f64,
    pub drift_ratio: f64,
    pub c0: f64,
}

impl KeyValues {
    pub fn zeta_prime(&self) -> f64 {
        2.0 * self.r1
    }

    pub fn g0_prime(&self) -> f64 {
        self.rc
    }

    /// ζ'' = −2/σ² − ψ'ζ'.
    pub fn zeta_second(&self) -> f64 {
        -2.0 / self.sigma2 - self.drift_ratio * self.zeta_prime()
    }

    /// g0'' = −2c0/σ² − ψ'g0'.
    pub fn g0_second(&self) -> f64 {
        -2.0 * self.c0 / self.sigma2 - self.drift_ratio * self.g0_prime()
    }
}

/// Tables for one ray.
struct SideTables {
    r1: Field,
    rc: Field,
    zeta: Cumulative,
    g0: Cumulative,
    shat: Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Which {
    Zeta,
    G0,
    Shat,
}

pub struct KeyFunctions {
    model: DiffusionModel,
    costs: CostStructure,
    cfg: KeyfnsConfig,
    profile: Profile,
    left: SideTables,
    right: SideTables,
    /// R1 and Rc at x0.
    r1_x0: f64,
    rc_x0: f64,
    limits: [OnceLock<Limit>; 6],
}

impl std::fmt::Debug for KeyFunctions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyFunctions").field("costs", &self.costs.name).field("profile", &self.profile).finish()
    }
}

fn which_index(side: Side, which: Which) -> usize {
    let s = if side == Side::Left { 0 } else { 3 };
    s + match which {
        Which::Zeta => 0,
        Which::G0 => 1,
        Which::Shat => 2,
    }
}

impl KeyFunctions {
    pub fn new(model: &DiffusionModel, costs: &CostStructure, cfg: KeyfnsConfig) -> Result<Self> {
        let c0 = |x: f64| costs.c0(x);
        let profile = Profile::build(model, &cfg.profile, &costs.breakpoints, Some(&c0))?;
        if profile.right.panels.is_empty() || profile.left.panels.is_empty() {
            return Err(Error::Numerical { what: "log-scale table around x0 is empty".into(), achieved: f64::NAN });
        }
        let w1 = |p: &crate::profile::Panel, i: usize| 1.0 / p.sig2[i];
        let wc = |p: &crate::profile::Panel, i: usize| 2.0 * costs.c0(p.x[i]) / p.sig2[i];

        let r1_right = profile.right.tail_field(1.0, w1);
        let rc_right = profile.right.tail_field(1.0, wc);
        let (r1_x0, rc_x0) = (r1_right.bound[0], rc_right.bound[0]);
        if !r1_x0.is_finite() || !rc_x0.is_finite() {
            return Err(Error::Numerical {
                what: "speed tail toward b is not finite; b must be non-attracting with c0 integrable".into(),
                achieved: if r1_x0.is_finite() { rc_x0 } else { r1_x0 },
            });
        }
        let r1_left = profile.left.head_field(1.0, w1);
        let rc_left = profile.left.head_field(1.0, wc);

        let right = Self::side_tables(&profile.right, r1_right, rc_right, 0.0, 0.0);
        let left = Self::side_tables(&profile.left, r1_left, rc_left, r1_x0, rc_x0);
        Ok(Self {
            model: model.clone(),
            costs: costs.clone(),
            cfg,
            profile,
            left,
            right,
            r1_x0,
            rc_x0,
            limits: Default::default(),
        })
    }

    /// Builds the cumulative tables of one ray. On the left ray R is the head
    /// field plus e^{−ψ}·R(x0).
    fn side_tables(ray: &Ray, r1: Field, rc: Field, r1_x0: f64, rc_x0: f64) -> SideTables {
        let full = |f: &Field, r0: f64| -> Vec<Nodes> {
            ray.panels
                .iter()
                .zip(&f.nodes)
                .map(|(p, v)| std::array::from_fn(|i| v[i] + (-p.psi[i]).exp() * r0))
                .collect()
        };
        let r1n = full(&r1, r1_x0);
        let rcn = full(&rc, rc_x0);
        let zeta = Cumulative::new(ray, r1n.iter().map(|v| v.map(|r| 2.0 * r)).collect());
        let g0 = Cumulative::new(ray, rcn);
        let shat = Cumulative::new(ray, ray.panels.iter().map(|p| p.psi.map(|s| (-s).exp())).collect());
        SideTables { r1, rc, zeta, g0, shat }
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn costs(&self) -> &CostStructure {
        &self.costs
    }

    pub fn config(&self) -> &KeyfnsConfig {
        &self.cfg
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    fn tables(&self, side: Side) -> &SideTables {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Key-function values at an interior point.
    pub fn eval(&self, x: f64) -> Result<KeyValues> {
        if !self.model.contains(x) {
            return Err(Error::Domain(format!("x = {x} outside ({}, {})", self.model.a, self.model.b)));
        }
        let sigma = self.model.sigma.eval(x);
        let mut kv = match self.profile.locate(x) {
            Some((side, tau, j)) => self.eval_table(side, tau, j),
            None => self.eval_beyond(x)?,
        };
        kv.x = x;
        kv.sigma2 = sigma * sigma;
        kv.drift_ratio = self.model.drift_ratio(x);
        kv.c0 = self.costs.c0(x);
        if self.cfg.literal {
            kv.zeta = self.zeta_literal(x)?;
            kv.g0 = self.g0_literal(x)?;
        }
        Ok(kv)
    }

    fn eval_table(&self, side: Side, tau: f64, j: usize) -> KeyValues {
        let ray = self.profile.ray(side);
        let t = self.tables(side);
        let p = &ray.panels[j];
        let row = Spectral::get().partial_row(p.s_of(tau));
        let psi = p.psi_lo + p.half() * dot(&row, &p.dpsi);
        let orient = ray.dir;
        let (mut r1, mut rc) = (t.r1.at(ray, j, psi, &row), t.rc.at(ray, j, psi, &row));
        if side == Side::Left {
            let e = (-psi).exp();
            r1 += e * self.r1_x0;
            rc += e * self.rc_x0;
        }
        KeyValues {
            x: f64::NAN,
            psi,
            r1,
            rc,
            zeta: orient * t.zeta.at(ray, j, &row),
            g0: orient * t.g0.at(ray, j, &row),
            shat: orient * t.shat.at(ray, j, &row),
            sigma2: f64::NAN,
            drift_ratio: f64::NAN,
            c0: f64::NAN,
        }
    }

    /// Values at the outer end of a ray.
    fn end_values(&self, side: Side) -> (f64, KeyValues) {
        let ray = self.profile.ray(side);
        let t = self.tables(side);
        let n = ray.panels.len();
        let psi = ray.psi_end();
        let (r1, rc) = match side {
            Side::Right => (t.r1.bound[n], t.rc.bound[n]),
            Side::Left => {
                let e = (-psi).exp();
                (t.r1.bound[n] + e * self.r1_x0, t.rc.bound[n] + e * self.rc_x0)
            }
        };
        let x_end = self.profile.map.x(ray.dir * ray.end());
        let kv = KeyValues {
            x: x_end,
            psi,
            r1,
            rc,
            zeta: ray.dir * t.zeta.bound[n],
            g0: ray.dir * t.g0.bound[n],
            shat: ray.dir * t.shat.bound[n],
            sigma2: f64::NAN,
            drift_ratio: f64::NAN,
            c0: f64::NAN,
        };
        (x_end, kv)
    }

    /// R_w(x) = ∫_x^b e^{ψ(v) − ψ(x)} w(v) dv by direct quadrature, for x
    /// beyond the right end of the table.
    fn direct_tail(&self, x: f64, w: &dyn Fn(f64) -> f64) -> Result<f64> {
        let m = &self.model;
        let f = |v: f64| -> f64 {
            match integrate(|u| m.drift_ratio(u), x, v, &fine_cfg(&m.quad)) {
                Ok(d) => d.value.exp() * w(v),
                Err(_) => f64::NAN,
            }
        };
        let r = m.integrate_exp(f, x, m.b, &m.quad)?;
        converged(r, "tail integral beyond the table")
    }

    /// Slow path for points closer to an endpoint than the table reaches.
    fn eval_beyond(&self, x: f64) -> Result<KeyValues> {
        let side = if x > self.model.x0 { Side::Right } else { Side::Left };
        let (x_end, end) = self.end_values(side);
        let m = &self.model;
        let w1 = |v: f64| {
            let s = m.sigma.eval(v);
            1.0 / (s * s)
        };
        let wc = |v: f64| {
            let s = m.sigma.eval(v);
            2.0 * self.costs.c0(v) / (s * s)
        };
        let dpsi = |from: f64, to: f64| -> Result<f64> {
            let r = integrate(|u| m.drift_ratio(u), from, to, &fine_cfg(&m.quad))?;
            converged(r, "log scale beyond the table")
        };
        let rs = |u: f64| -> Result<(f64, f64)> {
            match side {
                Side::Right => Ok((self.direct_tail(u, &w1)?, self.direct_tail(u, &wc)?)),
                Side::Left => {
                    // ∫_u^{x_end} e^{ψ(v) − ψ(u)} w dv + e^{ψ_end − ψ(u)} R(x_end).
                    let d_end = dpsi(u, x_end)?;
                    let head = |w: &dyn Fn(f64) -> f64| -> Result<f64> {
                        let f = |v: f64| match dpsi(u, v) {
                            Ok(d) => d.exp() * w(v),
                            Err(_) => f64::NAN,
                        };
                        let r = m.integrate_exp(f, u, x_end, &m.quad)?;
                        converged(r, "head integral beyond the table")
                    };
                    Ok((head(&w1)? + d_end.exp() * end.r1, head(&wc)? + d_end.exp() * end.rc))
                }
            }
        };
        let (r1, rc) = rs(x)?;
        let psi = end.psi + dpsi(x_end, x)?;
        let cfg = m.quad;
        let deriv_integral = |k: usize| -> Result<f64> {
            let r = integrate(
                |u| match rs(u) {
                    Ok((a, b)) => [2.0 * a, b][k],
                    Err(_) => f64::NAN,
                },
                x_end,
                x,
                &cfg,
            )?;
            converged(r, "key function beyond the table")
        };
        let shat_extra = {
            let f = |u: f64| match dpsi(x_end, u) {
                Ok(d) => (-(end.psi + d)).exp(),
                Err(_) => f64::NAN,
            };
            let r = integrate(f, x_end, x, &cfg)?;
            converged(r, "scale integral beyond the table")?
        };
        Ok(KeyValues {
            x,
            psi,
            r1,
            rc,
            zeta: end.zeta + deriv_integral(0)?,
            g0: end.g0 + deriv_integral(1)?,
            shat: end.shat + shat_extra,
            sigma2: f64::NAN,
            drift_ratio: f64::NAN,
            c0: f64::NAN,
        })
    }

    pub fn zeta(&self, x: f64) -> Result<f64> {
        Ok(self.eval(x)?.zeta)
    }

    pub fn g0(&self, x: f64) -> Result<f64> {
        Ok(self.eval(x)?.g0)
    }

    pub fn zeta_prime(&self, x: f64) -> Result<f64> {
        Ok(self.eval(x)?.zeta_prime())
    }

    pub fn g0_prime(&self, x: f64) -> Result<f64> {
        Ok(self.eval(x)?.g0_prime())
    }

    /// Ŝ(x) = ∫_{x0}^x e^{−(ψ(u) − ψ(x0))} du.
    pub fn shat(&self, x: f64) -> Result<f64> {
        Ok(self.eval(x)?.shat)
    }

    fn limit(&self, side: Side, which: Which) -> Limit {
        *self.limits[which_index(side, which)].get_or_init(|| self.compute_limit(side, which))
    }

    fn compute_limit(&self, side: Side, which: Which) -> Limit {
        let ray = self.profile.ray(side);
        let t = self.tables(side);
        let c = match which {
            Which::Zeta => &t.zeta,
            Which::G0 => &t.g0,
            Which::Shat => &t.shat,
        };
        let l = cumulative_limit(&self.profile, ray, c, self.model.quad.divergence_cap);
        if side == Side::Left {
            l.negate()
        } else {
            l
        }
    }

    /// ζ at an endpoint (may be infinite).
    pub fn zeta_limit(&self, side: Side) -> Limit {
        self.limit(side, Which::Zeta)
    }

    pub fn g0_limit(&self, side: Side) -> Limit {
        self.limit(side, Which::G0)
    }

    pub fn shat_limit(&self, side: Side) -> Limit {
        self.limit(side, Which::Shat)
    }

    fn endpoint_side(&self, x: f64) -> Option<Side> {
        if x == self.model.a {
            Some(Side::Left)
        } else if x == self.model.b {
            Some(Side::Right)
        } else {
            None
        }
    }

    /// ζ on the closed interval, endpoints by limit.
    pub fn zeta_ext(&self, x: f64) -> Result<f64> {
        match self.endpoint_side(x) {
            Some(side) => limit_value(self.zeta_limit(side), "zeta", side),
            None => self.zeta(x),
        }
    }

    /// g0 on the closed interval, endpoints by limit.
    pub fn g0_ext(&self, x: f64) -> Result<f64> {
        match self.endpoint_side(x) {
            Some(side) => limit_value(self.g0_limit(side), "g0", side),
            None => self.g0(x),
        }
    }

    pub fn shat_ext(&self, x: f64) -> Result<f64> {
        match self.endpoint_side(x) {
            Some(side) => limit_value(self.shat_limit(side), "scale function", side),
            None => self.shat(x),
        }
    }

    /// Expected holding cost and expected duration of the passage from z
    /// down to y: (g0(z) − g0(y), ζ(z) − ζ(y)).
    pub fn cycle_stats(&self, y: f64, z: f64) -> Result<(f64, f64)> {
        if y == z {
            return Ok((0.0, 0.0));
        }
        if !(y < z) || y < self.model.a || z > self.model.b {
            return Err(Error::Domain(format!("need a <= y < z <= b, got ({y}, {z})")));
        }
        Ok((self.g0_ext(z)? - self.g0_ext(y)?, self.zeta_ext(z)? - self.zeta_ext(y)?))
    }

    /// The x with ζ(x) = u.
    pub fn zeta_inverse(&self, u: f64) -> Result<f64> {
        if u == 0.0 {
            return Ok(self.model.x0);
        }
        let side = if u > 0.0 { Side::Right } else { Side::Left };
        let ray = self.profile.ray(side);
        let t = self.tables(side);
        let target = u.abs();
        let n = ray.panels.len();
        if target > t.zeta.bound[n] {
            return self.zeta_inverse_beyond(side, u);
        }
        let j = t.zeta.bound.partition_point(|&b| b < target).saturating_sub(1).min(n - 1);
        let p = &ray.panels[j];
        let sp = Spectral::get();
        let (mut lo, mut hi) = (p.lo, p.hi);
        let value = |tau: f64| t.zeta.at(ray, j, &sp.partial_row(p.s_of(tau))) - target;
        let slope = |tau: f64| {
            let vr = sp.value_row(p.s_of(tau));
            let v: Nodes = std::array::from_fn(|i| t.zeta.integrand(j, i));
            dot(&vr, &v)
        };
        let mut tau =
            p.lo + (target - t.zeta.bound[j]) / (t.zeta.bound[j + 1] - t.zeta.bound[j]).max(1e-300) * (p.hi - p.lo);
        for _ in 0..100 {
            let f = value(tau);
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = tau;
            } else {
                lo = tau;
            }
            let d = slope(tau);
            let mut next = tau - f / d;
            if !(next > lo && next < hi) || !d.is_finite() || d <= 0.0 {
                next = 0.5 * (lo + hi);
            }
            if (next - tau).abs() <= 1e-15 * (1.0 + tau.abs()) || hi - lo <= 1e-15 * (1.0 + tau.abs()) {
                tau = next;
                break;
            }
            tau = next;
        }
        Ok(self.profile.map.x(ray.dir * tau))
    }

    fn zeta_inverse_beyond(&self, side: Side, u: f64) -> Result<f64> {
        let lim = self.zeta_limit(side);
        if lim.is_finite() && ((side == Side::Right && u >= lim.value()) || (side == Side::Left && u <= lim.value())) {
            return Ok(if side == Side::Left { self.model.a } else { self.model.b });
        }
        let (x_end, _) = self.end_values(side);
        let e = if side == Side::Left { self.model.a } else { self.model.b };
        // Bracket outward, then bisect.
        let mut inner = x_end;
        let mut outer = x_end;
        let step = |x: f64, k: i32| -> f64 {
            if e.is_finite() {
                e + (x_end - e) * 0.5f64.powi(k)
            } else {
                x + (x - self.model.x0).abs() * if side == Side::Left { -1.0 } else { 1.0 }
            }
        };
        let beyond_target = |z: f64| if side == Side::Right { z >= u } else { z <= u };
        let mut k = 1;
        loop {
            let cand = step(outer, k);
            if !self.model.contains(cand) || k > 200 {
                return Err(Error::Numerical { what: format!("inverse of zeta at {u}"), achieved: f64::NAN });
            }
            if beyond_target(self.zeta(cand)?) {
                outer = cand;
                break;
            }
            inner = cand;
            outer = cand;
            k += 1;
        }
        let (mut lo, mut hi) = if inner < outer { (inner, outer) } else { (outer, inner) };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.zeta(mid)? < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// ζ(x) by literal double quadrature with the model's s and m.
    pub fn zeta_literal(&self, x: f64) -> Result<f64> {
        self.literal(x, &|_| 2.0)
    }

    /// g0(x) by literal double quadrature with the model's s and m.
    pub fn g0_literal(&self, x: f64) -> Result<f64> {
        let c = &self.costs;
        self.literal(x, &|v| 2.0 * c.c0(v))
    }

    fn literal(&self, x: f64, kernel: &(dyn Fn(f64) -> f64 + Sync)) -> Result<f64> {
        let m = &self.model;
        if x == m.x0 {
            return Ok(0.0);
        }
        let inner = |u: f64, cfg: &QuadratureConfig| -> Result<QuadratureResult> {
            m.integrate_exp(|v| m.speed_density(v).map(|d| kernel(v) * d).unwrap_or(f64::NAN), u, m.b, cfg)
        };
        let outer = |u: f64| m.scale_density(u).unwrap_or(f64::NAN);
        let r = integrate_nested(outer, inner, m.x0, x, &m.quad)?;
        converged(r, "literal key function")
    }
}

/// Limit of a cumulative table along its ray.
fn cumulative_limit(profile: &Profile, ray: &Ray, c: &Cumulative, cap: f64) -> Limit {
    let n = ray.panels.len();
    if n == 0 {
        return Limit::Unknown(f64::NAN);
    }
    let knots = sample_knots(&profile.map, profile.map.natural_extent());
    let samples: Vec<f64> = ray.knot_indices(&knots).iter().map(|&k| c.bound[k]).collect();
    let beyond = extrapolate_tail(&ray.panels[n - 1], c.integrand(n - 1, NODES - 2), c.integrand(n - 1, NODES - 1));
    endpoint_limit(&samples, c.bound[n], beyond, cap)
}

fn limit_value(l: Limit, what: &str, side: Side) -> Result<f64> {
    match l {
        Limit::Unknown(v) => {
            Err(Error::Numerical { what: format!("{what} at the {side} endpoint has no clear limit"), achieved: v })
        }
        l => Ok(l.value()),
    }
}

fn fine_cfg(cfg: &QuadratureConfig) -> QuadratureConfig {
    QuadratureConfig { abs_tol: cfg.abs_tol.min(1e-14), rel_tol: cfg.rel_tol.min(1e-13), ..*cfg }
}

fn converged(r: QuadratureResult, what: &str) -> Result<f64> {
    if r.converged {
        Ok(r.value)
    } else {
        Err(Error::Numerical { what: what.to_string(), achieved: r.error_estimate })
    }
}

/// G0 = g0 − F0*·ζ, anchored at x0.
#[derive(Debug)]
pub struct AuxiliaryG0 {
    keyfns: Arc<KeyFunctions>,
    pub f0_star: f64,
    limits: [OnceLock<Limit>; 2],
}

/// Builds G0 for a given optimal value.
pub fn build_g0(keyfns: Arc<KeyFunctions>, f0_star: f64) -> Result<AuxiliaryG0> {
    if !(f0_star >= 0.0) || !f0_star.is_finite() {
        return Err(Error::Param(format!("F0* must be finite and non-negative, got {f0_star}")));
    }
    Ok(AuxiliaryG0 { keyfns, f0_star, limits: Default::default() })
}

impl AuxiliaryG0 {
    pub fn keyfns(&self) -> &Arc<KeyFunctions> {
        &self.keyfns
    }

    pub fn g(&self, x: f64) -> Result<f64> {
        let kv = self.keyfns.eval(x)?;
        Ok(kv.g0 - self.f0_star * kv.zeta)
    }

    pub fn g_prime(&self, x: f64) -> Result<f64> {
        let kv = self.keyfns.eval(x)?;
        Ok(kv.g0_prime() - self.f0_star * kv.zeta_prime())
    }

    /// (G0, G0', G0'') at x.
    pub fn derivatives(&self, x: f64) -> Result<(f64, f64, f64)> {
        let kv = self.keyfns.eval(x)?;
        let f = self.f0_star;
        Ok((kv.g0 - f * kv.zeta, kv.g0_prime() - f * kv.zeta_prime(), kv.g0_second() - f * kv.zeta_second()))
    }

    /// G0 at an endpoint (may be infinite).
    pub fn limit(&self, side: Side) -> Limit {
        let idx = if side == Side::Left { 0 } else { 1 };
        *self.limits[idx].get_or_init(|| {
            let kf = &self.keyfns;
            let ray = kf.profile.ray(side);
            let t = kf.tables(side);
            let n = ray.panels.len();
            let v: Vec<Nodes> = (0..n)
                .map(|j| {
                    std::array::from_fn(|i| {
                        (t.g0.integrand(j, i) - self.f0_star * t.zeta.integrand(j, i)) / ray.panels[j].jac[i]
                    })
                })
                .collect();
            let c = Cumulative::new(ray, v);
            let l = cumulative_limit(&kf.profile, ray, &c, kf.model.quad.divergence_cap);
            if side == Side::Left {
                l.negate()
            } else {
                l
            }
        })
    }

    /// G0 on the closed interval, endpoints by limit.
    pub fn g_ext(&self, x: f64) -> Result<f64> {
        match self.keyfns.endpoint_side(x) {
            Some(side) => limit_value(self.limit(side), "G0", side),
            None => self.g(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::BuiltinCost;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-12)
    }

    fn dbm() -> KeyFunctions {
        let m = DiffusionModel::drifted_bm(1.0, 1.0, 0.0).unwrap();
        let c = BuiltinCost::DbmClassic { c_b: 1.0, c_h: 1.0, k1: 1.0, k2: 1.0 }.build().unwrap();
        KeyFunctions::new(&m, &c, KeyfnsConfig::default()).unwrap()
    }

    #[test]
    fn drifted_bm_closed_forms() {
        let kf = dbm();
        assert_eq!(kf.zeta(0.0).unwrap(), 0.0);
        assert_eq!(kf.g0(0.0).unwrap(), 0.0);
        for &x in &[0.3, 1.0, 2.5, 7.0, 40.0] {
            let kv = kf.eval(x).unwrap();
            assert!(rel(kv.zeta, x) < 1e-10, "zeta({x}) = {}", kv.zeta);
            assert!(rel(kv.zeta_prime(), 1.0) < 1e-10);
            assert!(rel(kv.g0, 0.5 * x * x + 0.5 * x) < 1e-10, "g0({x}) = {}", kv.g0);
            assert!(rel(kv.g0_prime(), x + 0.5) < 1e-10);
        }
        // Left branch: c_b = c_h = 1 gives −x²/2 − x/2 + (e^{2x} − 1)/2.
        for &x in &[-0.3f64, -1.0, -4.0, -30.0] {
            let g = -0.5 * x * x - 0.5 * x + 0.5 * ((2.0 * x).exp() - 1.0);
            assert!(rel(kf.g0(x).unwrap(), g) < 1e-10, "g0({x})");
            assert!(rel(kf.zeta(x).unwrap(), x) < 1e-10);
        }
    }

    #[test]
    fn beyond_the_table() {
        let kf = dbm();
        // The table stops at |x| = 300 for this model.
        for &x in &[350.0, -350.0] {
            let kv = kf.eval(x).unwrap();
            assert!(rel(kv.zeta, x) < 1e-7, "{x}: {}", kv.zeta);
            assert!(rel(kv.zeta_prime(), 1.0) < 1e-7);
        }
    }

    #[test]
    fn endpoint_limits_and_inverse() {
        let kf = dbm();
        assert_eq!(kf.zeta_limit(Side::Right), Limit::PlusInfinity);
        assert_eq!(kf.zeta_limit(Side::Left), Limit::MinusInfinity);
        for &u in &[-5.0, -0.1, 0.4, 3.0, 120.0] {
            assert!((kf.zeta_inverse(u).unwrap() - u).abs() < 1e-9 * (1.0 + u.abs()));
        }
        let (cost, time) = kf.cycle_stats(0.0, 2.0).unwrap();
        assert!(rel(time, 2.0) < 1e-12);
        assert!(rel(cost, 3.0) < 1e-12);
        assert_eq!(kf.cycle_stats(1.0, 1.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn geometric_zeta_and_scale() {
        let m = DiffusionModel::geometric_bm(0.5, 1.0, 1.0).unwrap();
        let c = BuiltinCost::GbmLinear { k1: 1.0, k2: 1.0, k3: 1.0 }.build().unwrap();
        let kf = KeyFunctions::new(&m, &c, KeyfnsConfig::default()).unwrap();
        let e = std::f64::consts::E;
        assert!(rel(kf.zeta(e).unwrap(), 1.0) < 1e-10);
        // s(x) = x, so Ŝ(x) = (x² − 1)/2.
        assert!(rel(kf.shat(3.0).unwrap(), 4.0) < 1e-10);
        assert!(rel(kf.shat(0.2).unwrap(), -0.48) < 1e-10);
        assert!(rel(kf.shat_limit(Side::Left).value(), -0.5) < 1e-9);
        assert_eq!(kf.zeta_limit(Side::Left), Limit::MinusInfinity);
        // g0 = (k3/μ)(x − 1).
        for &x in &[0.01f64, 0.5, 2.0, 10.0] {
            let g = 2.0 * (x - 1.0);
            assert!((kf.g0(x).unwrap() - g).abs() < 1e-10 * (1.0 + g.abs()), "{x}: {} vs {g}", kf.g0(x).unwrap());
        }
        assert!(rel(kf.zeta_inverse(1.0).unwrap(), e) < 1e-12);
        assert!(rel(kf.zeta_inverse(-3.0).unwrap(), (-3.0f64).exp()) < 1e-12);
    }

    #[test]
    fn a_operator_by_finite_differences() {
        let kf = dbm();
        for &x in &[-2.0, -0.5, 0.5, 1.5, 3.0] {
            let h = 1e-3;
            let (zm, z0, zp) = (kf.zeta(x - h).unwrap(), kf.zeta(x).unwrap(), kf.zeta(x + h).unwrap());
            let a_zeta = 0.5 * (zp - 2.0 * z0 + zm) / (h * h) - (zp - zm) / (2.0 * h);
            assert!((a_zeta + 1.0).abs() < 1e-4, "{x}: {a_zeta}");
            let (gm, g0, gp) = (kf.g0(x - h).unwrap(), kf.g0(x).unwrap(), kf.g0(x + h).unwrap());
            let a_g0 = 0.5 * (gp - 2.0 * g0 + gm) / (h * h) - (gp - gm) / (2.0 * h);
            assert!((a_g0 + x.abs()).abs() < 1e-4 * (1.0 + x.abs()), "{x}: {a_g0}");
        }
    }

    #[test]
    fn auxiliary_g0() {
        let kf = Arc::new(dbm());
        let g = build_g0(kf.clone(), 1.0).unwrap();
        assert_eq!(g.g(0.0).unwrap(), 0.0);
        assert!(g.g(1.0).unwrap().abs() < 1e-12);
        assert_eq!(g.limit(Side::Right), Limit::PlusInfinity);
        let zero = build_g0(kf.clone(), 0.0).unwrap();
        assert_eq!(zero.g(2.0).unwrap(), kf.g0(2.0).unwrap());
        assert!(build_g0(kf, -1.0).is_err());
    }

    #[test]
    fn literal_path_agrees() {
        let m = DiffusionModel::geometric_bm(0.5, 1.0, 1.0).unwrap();
        let c = BuiltinCost::GbmLinear { k1: 1.0, k2: 1.0, k3: 1.0 }.build().unwrap();
        let kf = KeyFunctions::new(&m, &c, KeyfnsConfig::default()).unwrap();
        for &x in &[0.5, 2.0] {
            assert!(rel(kf.zeta_literal(x).unwrap(), kf.zeta(x).unwrap()) < 1e-6);
            assert!(rel(kf.g0_literal(x).unwrap(), kf.g0(x).unwrap()) < 1e-6);
        }
    }
}

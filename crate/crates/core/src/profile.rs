//! Tabulated log-scale profile.
//!
//! ψ(x) = ∫_{x0}^x 2μ/σ² is tabulated on two rays of 16-point Gauss–Legendre
//! panels, one running from x0 toward each endpoint in the outward map
//! coordinate τ = ±t. Panels are sized so that ψ moves by a bounded amount
//! across each one, which keeps e^{±ψ} within a fixed dynamic range per panel
//! and lets every integral of the form ∫ e^{±(ψ(u) − ψ(x))} w(u) du be built by
//! well-scaled panel recursions instead of nested adaptive quadrature.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::diffusion::{CoordMap, DiffusionModel, Side};
use crate::error::{Error, Result};
use crate::quadrature::gl16;

pub const NODES: usize = 16;
pub type Nodes = [f64; NODES];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    /// Largest change of ψ accepted across one panel.
    pub psi_step: f64,
    /// Agreement required between a panel and its two halves.
    pub panel_tol: f64,
    /// Rays stop once |ψ| reaches this value.
    pub psi_max: f64,
    pub max_panels: usize,
    pub initial_width: f64,
    /// Largest |t| tabulated; defaults to the map's natural extent.
    pub extent: Option<f64>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { psi_step: 4.0, panel_tol: 1e-12, psi_max: 600.0, max_panels: 20_000, initial_width: 0.5, extent: None }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.psi_step > 0.0
            && self.panel_tol > 0.0
            && self.psi_max > 0.0
            && self.psi_max < 700.0
            && self.max_panels >= 1
            && self.initial_width > 0.0
            && self.extent.is_none_or(|e| e > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Param(format!("invalid profile configuration {self:?}")))
        }
    }
}

/// Legendre machinery on the reference interval [−1, 1].
pub struct Spectral {
    pub s: Nodes,
    pub w: Nodes,
    /// a[k][j] = (2k+1)/2 · w_j · P_k(s_j): node values → Legendre coefficients.
    a: [Nodes; NODES],
    /// cum[i][j] = ∫_{−1}^{s_i} ℓ_j, with ℓ_j the Lagrange basis on the nodes.
    pub cum: [Nodes; NODES],
}

fn legendre_upto(s: f64) -> [f64; NODES + 1] {
    let mut p = [0.0; NODES + 1];
    p[0] = 1.0;
    p[1] = s;
    for k in 1..NODES {
        p[k + 1] = ((2 * k + 1) as f64 * s * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
    }
    p
}

fn legendre_integrals(s: f64) -> Nodes {
    let p = legendre_upto(s);
    let mut i = [0.0; NODES];
    i[0] = s + 1.0;
    for k in 1..NODES {
        i[k] = (p[k + 1] - p[k - 1]) / (2 * k + 1) as f64;
    }
    i
}

impl Spectral {
    pub fn get() -> &'static Spectral {
        static S: OnceLock<Spectral> = OnceLock::new();
        S.get_or_init(|| {
            let (s, w) = *gl16();
            let mut a = [[0.0; NODES]; NODES];
            for j in 0..NODES {
                let p = legendre_upto(s[j]);
                for k in 0..NODES {
                    a[k][j] = (2 * k + 1) as f64 * 0.5 * w[j] * p[k];
                }
            }
            let mut sp = Spectral { s, w, a, cum: [[0.0; NODES]; NODES] };
            for i in 0..NODES {
                sp.cum[i] = sp.partial_row(s[i]);
            }
            sp
        })
    }

    /// Row r with Σ_j r_j v_j = ∫_{−1}^{s} of the interpolant of v.
    pub fn partial_row(&self, s: f64) -> Nodes {
        let ik = legendre_integrals(s);
        let mut r = [0.0; NODES];
        for (k, ik) in ik.iter().enumerate() {
            for j in 0..NODES {
                r[j] += self.a[k][j] * ik;
            }
        }
        r
    }

    /// Row r with Σ_j r_j v_j = interpolant of v at s.
    pub fn value_row(&self, s: f64) -> Nodes {
        let p = legendre_upto(s);
        let mut r = [0.0; NODES];
        for k in 0..NODES {
            for j in 0..NODES {
                r[j] += self.a[k][j] * p[k];
            }
        }
        r
    }
}

#[inline]
pub fn dot(a: &Nodes, b: &Nodes) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One panel [lo, hi] in the outward coordinate τ.
#[derive(Debug, Clone)]
pub struct Panel {
    pub lo: f64,
    pub hi: f64,
    pub psi_lo: f64,
    pub psi_hi: f64,
    pub tau: Nodes,
    pub x: Nodes,
    /// |dx/dτ| at the nodes.
    pub jac: Nodes,
    pub psi: Nodes,
    /// dψ/dτ at the nodes.
    pub dpsi: Nodes,
    pub sig2: Nodes,
}

impl Panel {
    #[inline]
    pub fn half(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    /// Reference coordinate of τ within the panel.
    #[inline]
    pub fn s_of(&self, tau: f64) -> f64 {
        ((2.0 * tau - self.lo - self.hi) / (self.hi - self.lo)).clamp(-1.0, 1.0)
    }

    /// Integral of the node values `v` over the panel.
    #[inline]
    pub fn integral(&self, v: &Nodes) -> f64 {
        self.half() * dot(&Spectral::get().w, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stop {
    /// Reached the configured coordinate extent.
    Extent,
    /// |ψ| reached its cap.
    PsiLimit,
    /// Nodes would round onto the endpoint.
    Endpoint,
    PanelLimit,
}

/// Panels from x0 outward toward one endpoint.
#[derive(Debug, Clone)]
pub struct Ray {
    pub side: Side,
    /// t = dir·τ.
    pub dir: f64,
    pub panels: Vec<Panel>,
    pub stop: Stop,
    /// Panels accepted at minimum width without meeting the tolerance.
    pub unresolved: usize,
}

impl Ray {
    pub fn end(&self) -> f64 {
        self.panels.last().map_or(0.0, |p| p.hi)
    }

    pub fn psi_end(&self) -> f64 {
        self.panels.last().map_or(0.0, |p| p.psi_hi)
    }

    /// Boundary indices (into `bound`-style arrays) of the knots that were
    /// reached.
    pub fn knot_indices(&self, knots: &[f64]) -> Vec<usize> {
        knots
            .iter()
            .filter_map(|&k| {
                let j = self.panels.partition_point(|p| p.hi < k * (1.0 - 1e-13));
                (j < self.panels.len() && (self.panels[j].hi - k).abs() <= 1e-12 * k).then_some(j + 1)
            })
            .collect()
    }

    /// Panel index holding τ, or None beyond the last panel.
    pub fn locate(&self, tau: f64) -> Option<usize> {
        if !(0.0..=self.end()).contains(&tau) || self.panels.is_empty() {
            return None;
        }
        let j = self.panels.partition_point(|p| p.hi < tau);
        Some(j.min(self.panels.len() - 1))
    }

    /// ψ at τ, given the panel index.
    pub fn psi_in(&self, j: usize, tau: f64) -> f64 {
        let p = &self.panels[j];
        let row = Spectral::get().partial_row(p.s_of(tau));
        p.psi_lo + p.half() * dot(&row, &p.dpsi)
    }

    /// Panel boundary values of ∫_0^τ f, where `f(j, panel, i)` is the
    /// integrand in τ at node i of panel j.
    pub fn cumulative<F: Fn(usize, &Panel, usize) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.panels.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for (j, p) in self.panels.iter().enumerate() {
            let v: Nodes = std::array::from_fn(|i| f(j, p, i));
            acc += p.integral(&v);
            out.push(acc);
        }
        out
    }

    /// Tail field ∫_τ^end e^{sign(ψ(u) − ψ(τ))} w(u) |dx| (plus an estimate
    /// of the part beyond the last panel).
    pub fn tail_field<W: Fn(&Panel, usize) -> f64>(&self, sign: f64, w: W) -> Field {
        self.field(sign, w, Orient::Tail)
    }

    /// Head field ∫_0^τ e^{sign(ψ(u) − ψ(τ))} w(u) |dx|.
    pub fn head_field<W: Fn(&Panel, usize) -> f64>(&self, sign: f64, w: W) -> Field {
        self.field(sign, w, Orient::Head)
    }

    fn field<W: Fn(&Panel, usize) -> f64>(&self, sign: f64, w: W, orient: Orient) -> Field {
        let sp = Spectral::get();
        let n = self.panels.len();
        let g: Vec<Nodes> = self
            .panels
            .iter()
            .map(|p| std::array::from_fn(|i| (sign * (p.psi[i] - p.psi_lo)).exp() * w(p, i) * p.jac[i]))
            .collect();
        let totals: Vec<f64> = self.panels.iter().zip(&g).map(|(p, g)| p.integral(g)).collect();
        let mut bound = vec![0.0; n + 1];
        let mut nodes = vec![[0.0; NODES]; n];
        match orient {
            Orient::Tail => {
                bound[n] = match self.panels.last() {
                    Some(p) => beyond_end(p, sign, &w),
                    None => 0.0,
                };
                for j in (0..n).rev() {
                    let p = &self.panels[j];
                    let carry = (sign * (p.psi_hi - p.psi_lo)).exp() * bound[j + 1];
                    bound[j] = totals[j] + carry;
                    for i in 0..NODES {
                        let rest = totals[j] - p.half() * dot(&sp.cum[i], &g[j]);
                        nodes[j][i] = (sign * (p.psi_lo - p.psi[i])).exp() * (rest + carry);
                    }
                }
            }
            Orient::Head => {
                for j in 0..n {
                    let p = &self.panels[j];
                    for i in 0..NODES {
                        let part = p.half() * dot(&sp.cum[i], &g[j]);
                        nodes[j][i] = (sign * (p.psi_lo - p.psi[i])).exp() * (bound[j] + part);
                    }
                    bound[j + 1] = (sign * (p.psi_lo - p.psi_hi)).exp() * (bound[j] + totals[j]);
                }
            }
        }
        Field { sign, orient, g, totals, bound, nodes }
    }
}

/// ∫ beyond the last panel of e^{sign(ψ − ψ_hi)} w |dx|, from a log-linear fit
/// of the integrand at the last two nodes; +∞ when it is not decaying.
fn beyond_end<W: Fn(&Panel, usize) -> f64>(p: &Panel, sign: f64, w: &W) -> f64 {
    let g = |i: usize| (sign * (p.psi[i] - p.psi_hi)).exp() * w(p, i) * p.jac[i];
    extrapolate_tail(p, g(NODES - 2), g(NODES - 1))
}

/// ∫ beyond the panel's upper end of an integrand (in τ) whose values at the
/// last two nodes are g1, g2, assuming log-linear decay.
pub fn extrapolate_tail(p: &Panel, g1: f64, g2: f64) -> f64 {
    if g2 == 0.0 {
        return 0.0;
    }
    if g1 < 0.0 && g2 < 0.0 {
        return -extrapolate_tail(p, -g1, -g2);
    }
    if !(g1 > 0.0 && g2 > 0.0) {
        return f64::NAN;
    }
    let lambda = -(g2 / g1).ln() / (p.tau[NODES - 1] - p.tau[NODES - 2]);
    if lambda <= 0.0 {
        return f64::INFINITY;
    }
    g2 * (-lambda * (p.hi - p.tau[NODES - 1])).exp() / lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orient {
    Tail,
    Head,
}

/// Values of a tail or head integral at panel boundaries and nodes.
#[derive(Debug, Clone)]
pub struct Field {
    pub sign: f64,
    pub orient: Orient,
    /// Integrand at the nodes, scaled by e^{−sign ψ_lo}.
    g: Vec<Nodes>,
    totals: Vec<f64>,
    pub bound: Vec<f64>,
    pub nodes: Vec<Nodes>,
}

impl Field {
    /// Value at τ inside panel j, with ψ(τ) supplied and `row` the partial
    /// integration row at τ.
    pub fn at(&self, ray: &Ray, j: usize, psi: f64, row: &Nodes) -> f64 {
        let p = &ray.panels[j];
        let part = p.half() * dot(row, &self.g[j]);
        let scale = (self.sign * (p.psi_lo - psi)).exp();
        match self.orient {
            Orient::Tail => {
                let carry = (self.sign * (p.psi_hi - p.psi_lo)).exp() * self.bound[j + 1];
                scale * (self.totals[j] - part + carry)
            }
            Orient::Head => scale * (self.bound[j] + part),
        }
    }
}

/// Cumulative integral ∫_0^τ v |dx| of a node-valued quantity.
#[derive(Debug, Clone)]
pub struct Cumulative {
    v: Vec<Nodes>,
    pub bound: Vec<f64>,
    pub nodes: Vec<Nodes>,
}

impl Cumulative {
    /// `v[j][i]` is the integrand in x at node i of panel j.
    pub fn new(ray: &Ray, v: Vec<Nodes>) -> Self {
        let sp = Spectral::get();
        let n = ray.panels.len();
        let v: Vec<Nodes> = ray.panels.iter().zip(v).map(|(p, v)| std::array::from_fn(|i| v[i] * p.jac[i])).collect();
        let mut bound = vec![0.0; n + 1];
        let mut nodes = vec![[0.0; NODES]; n];
        for j in 0..n {
            let p = &ray.panels[j];
            for i in 0..NODES {
                nodes[j][i] = bound[j] + p.half() * dot(&sp.cum[i], &v[j]);
            }
            bound[j + 1] = bound[j] + p.integral(&v[j]);
        }
        Self { v, bound, nodes }
    }

    pub fn at(&self, ray: &Ray, j: usize, row: &Nodes) -> f64 {
        self.bound[j] + ray.panels[j].half() * dot(row, &self.v[j])
    }

    /// Integrand in τ at node i of panel j (v·|dx/dτ|).
    pub fn integrand(&self, j: usize, i: usize) -> f64 {
        self.v[j][i]
    }
}

/// The two rays plus the coordinate map.
#[derive(Clone)]
pub struct Profile {
    pub map: CoordMap,
    pub left: Ray,
    pub right: Ray,
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Profile")
            .field("map", &self.map)
            .field("left_panels", &self.left.panels.len())
            .field("left_end", &self.left.end())
            .field("left_stop", &self.left.stop)
            .field("right_panels", &self.right.panels.len())
            .field("right_end", &self.right.end())
            .field("right_stop", &self.right.stop)
            .finish()
    }
}

/// Sample knots in τ at which cumulative quantities are read for limit
/// detection: powers of two on the linear map, even integers otherwise.
pub fn sample_knots(map: &CoordMap, extent: f64) -> Vec<f64> {
    match map {
        CoordMap::Linear { .. } => (0..64).map(|k| 2f64.powi(k)).take_while(|t| *t <= extent).collect(),
        _ => (1..).map(|k| 2.0 * k as f64).take_while(|t| *t <= extent).collect(),
    }
}

impl Profile {
    /// Builds both rays. `breakpoints` are x-locations that must fall on
    /// panel boundaries; `check` is an extra weight whose e^ψ-weighted panel
    /// integral must also be resolved.
    pub fn build(
        model: &DiffusionModel,
        cfg: &ProfileConfig,
        breakpoints: &[f64],
        check: Option<&(dyn Fn(f64) -> f64 + Sync)>,
    ) -> Result<Self> {
        cfg.validate()?;
        let map = model.coords();
        let extent = cfg.extent.unwrap_or(map.natural_extent());
        let samples = sample_knots(&map, extent);
        let mut knots_l = samples.clone();
        let mut knots_r = samples;
        for &x in breakpoints {
            if !model.contains(x) {
                continue;
            }
            let t = map.t(x);
            if t > 0.0 {
                knots_r.push(t);
            } else if t < 0.0 {
                knots_l.push(-t);
            }
        }
        for k in [&mut knots_l, &mut knots_r] {
            k.sort_by(f64::total_cmp);
            k.dedup();
        }
        let left = build_ray(model, &map, Side::Left, &knots_l, extent, cfg, check)?;
        let right = build_ray(model, &map, Side::Right, &knots_r, extent, cfg, check)?;
        Ok(Self { map, left, right })
    }

    pub fn ray(&self, side: Side) -> &Ray {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Ray, outward coordinate and panel index of x, or None when x lies
    /// beyond the tabulated range.
    pub fn locate(&self, x: f64) -> Option<(Side, f64, usize)> {
        let t = self.map.t(x);
        if !t.is_finite() {
            return None;
        }
        let side = if t >= 0.0 { Side::Right } else { Side::Left };
        let tau = t.abs();
        self.ray(side).locate(tau).map(|j| (side, tau, j))
    }

    /// ψ(x) − ψ(x0), or None outside the table.
    pub fn psi(&self, x: f64) -> Option<f64> {
        let (side, tau, j) = self.locate(x)?;
        Some(self.ray(side).psi_in(j, tau))
    }

    pub fn unresolved(&self) -> usize {
        self.left.unresolved + self.right.unresolved
    }
}

fn sample_panel(
    model: &DiffusionModel,
    map: &CoordMap,
    dir: f64,
    lo: f64,
    hi: f64,
    psi_lo: f64,
) -> Result<Option<Panel>> {
    let sp = Spectral::get();
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut p = Panel {
        lo,
        hi,
        psi_lo,
        psi_hi: psi_lo,
        tau: [0.0; NODES],
        x: [0.0; NODES],
        jac: [0.0; NODES],
        psi: [0.0; NODES],
        dpsi: [0.0; NODES],
        sig2: [0.0; NODES],
    };
    for i in 0..NODES {
        let tau = mid + half * sp.s[i];
        let t = dir * tau;
        let x = map.x(t);
        let jac = map.dx(t);
        if !model.contains(x) || !(jac > 0.0) || !jac.is_finite() {
            return Ok(None);
        }
        let s = model.sigma.eval(x);
        let r = model.drift_ratio(x);
        if !r.is_finite() || !s.is_finite() || s == 0.0 {
            return Err(Error::Evaluation { location: x });
        }
        p.tau[i] = tau;
        p.x[i] = x;
        p.jac[i] = jac;
        p.sig2[i] = s * s;
        p.dpsi[i] = dir * r * jac;
    }
    for i in 0..NODES {
        p.psi[i] = psi_lo + half * dot(&sp.cum[i], &p.dpsi);
    }
    p.psi_hi = psi_lo + half * dot(&sp.w, &p.dpsi);
    Ok(Some(p))
}

/// Integrals used to compare a panel with its halves.
fn panel_moments(p: &Panel, check: Option<&(dyn Fn(f64) -> f64 + Sync)>, base: f64) -> [f64; 4] {
    let plus: Nodes = std::array::from_fn(|i| (p.psi[i] - base).exp() * p.jac[i] / p.sig2[i]);
    let minus: Nodes = std::array::from_fn(|i| (base - p.psi[i]).exp() * p.jac[i]);
    let extra = match check {
        Some(c) => {
            let v: Nodes = std::array::from_fn(|i| c(p.x[i]) * plus[i]);
            p.integral(&v)
        }
        None => 0.0,
    };
    [p.psi_hi - p.psi_lo, p.integral(&plus), p.integral(&minus), extra]
}

fn build_ray(
    model: &DiffusionModel,
    map: &CoordMap,
    side: Side,
    knots: &[f64],
    extent: f64,
    cfg: &ProfileConfig,
    check: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<Ray> {
    let dir = if side == Side::Left { -1.0 } else { 1.0 };
    let mut panels: Vec<Panel> = Vec::new();
    let mut unresolved = 0;
    let mut lo = 0.0f64;
    let mut psi_lo = 0.0f64;
    let mut width = cfg.initial_width;
    let stop = loop {
        if panels.len() >= cfg.max_panels {
            break Stop::PanelLimit;
        }
        if lo >= extent {
            break Stop::Extent;
        }
        let limit = knots.iter().copied().find(|&k| k > lo * (1.0 + 1e-14) + 1e-300).unwrap_or(extent).min(extent);
        let min_width = 1e-10 * (1.0 + lo);
        let mut w = width.min(limit - lo);
        let mut first_try = true;
        let accepted = loop {
            let hi = if w >= limit - lo { limit } else { lo + w };
            let whole = sample_panel(model, map, dir, lo, hi, psi_lo)?;
            let Some(whole) = whole else {
                if w <= min_width {
                    break None;
                }
                w *= 0.5;
                first_try = false;
                continue;
            };
            let mid = 0.5 * (lo + hi);
            let left = sample_panel(model, map, dir, lo, mid, psi_lo)?;
            let right = match &left {
                Some(l) => sample_panel(model, map, dir, mid, hi, l.psi_hi)?,
                None => None,
            };
            let (Some(l), Some(r)) = (left, right) else {
                if w <= min_width {
                    break None;
                }
                w *= 0.5;
                first_try = false;
                continue;
            };
            let mw = panel_moments(&whole, check, psi_lo);
            let ml = panel_moments(&l, check, psi_lo);
            let mr = panel_moments(&r, check, psi_lo);
            let tol = cfg.panel_tol;
            let dpsi = mw[0];
            let ok_step = dpsi.abs() <= cfg.psi_step;
            let ok_psi = (dpsi - ml[0] - mr[0]).abs() <= tol * (1.0 + dpsi.abs());
            let ok_moments = (1..4).all(|k| {
                let halves = ml[k] + mr[k];
                (mw[k] - halves).abs() <= tol * (mw[k].abs().max(halves.abs()) + 1e-300)
            });
            if ok_step && ok_psi && ok_moments {
                break Some(whole);
            }
            if w <= min_width {
                unresolved += 1;
                break Some(whole);
            }
            w *= 0.5;
            first_try = false;
        };
        let Some(p) = accepted else {
            break Stop::Endpoint;
        };
        let used = p.hi - p.lo;
        if first_try && used >= width * (1.0 - 1e-12) {
            width *= 2.0;
        } else if !first_try {
            width = used;
        }
        lo = p.hi;
        psi_lo = p.psi_hi;
        let psi_hi = p.psi_hi;
        panels.push(p);
        if psi_hi.abs() >= cfg.psi_max {
            break Stop::PsiLimit;
        }
    };
    Ok(Ray { side, dir, panels, stop, unresolved })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_rows_integrate_polynomials() {
        let sp = Spectral::get();
        let v: Nodes = std::array::from_fn(|i| sp.s[i].powi(7) + 3.0 * sp.s[i].powi(2));
        for &s in &[-1.0f64, -0.3, 0.2, 1.0] {
            let exact = (s.powi(8) - 1.0) / 8.0 + (s.powi(3) + 1.0);
            assert!((dot(&sp.partial_row(s), &v) - exact).abs() < 1e-13);
            let val = s.powi(7) + 3.0 * s * s;
            assert!((dot(&sp.value_row(s), &v) - val).abs() < 1e-13);
        }
    }

    #[test]
    fn drifted_bm_profile_is_linear_in_x() {
        let m = DiffusionModel::drifted_bm(1.0, 1.0, 0.0).unwrap();
        let p = Profile::build(&m, &ProfileConfig::default(), &[], None).unwrap();
        assert_eq!(p.left.stop, Stop::PsiLimit);
        assert_eq!(p.right.stop, Stop::PsiLimit);
        for &x in &[-3.0, -0.25, 0.0, 0.7, 40.0] {
            assert!((p.psi(x).unwrap() + 2.0 * x).abs() < 1e-11 * (1.0 + x.abs()));
        }
        // ∫_x^∞ e^{ψ(u) − ψ(x)} du = 1/2 everywhere.
        let f = p.right.tail_field(1.0, |_, _| 1.0);
        for row in &f.nodes[..20] {
            for v in row {
                assert!((v - 0.5).abs() < 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn geometric_profile_heads_and_tails() {
        let m = DiffusionModel::geometric_bm(0.5, 1.0, 1.0).unwrap();
        let p = Profile::build(&m, &ProfileConfig::default(), &[2.0], None).unwrap();
        // ψ = −ln x.
        assert!((p.psi(4.0).unwrap() + 4f64.ln()).abs() < 1e-12);
        assert!((p.psi(0.01).unwrap() + 0.01f64.ln()).abs() < 1e-11);
        // s(x)M[x,∞) = x·∫_x^∞ u^{-3} du = 1/(2x).
        let f = p.right.tail_field(1.0, |p, i| 1.0 / p.sig2[i]);
        let r = &p.right;
        for (j, panel) in r.panels.iter().enumerate().take(30) {
            for i in 0..NODES {
                let x = panel.x[i];
                assert!((f.nodes[j][i] - 0.5 / x).abs() < 1e-10 / x, "{x}");
            }
        }
        // Head on the left ray: ∫_x^1 e^{ψ(u) − ψ(x)}/σ²(u) du = x(1/(2x²) − 1/2).
        let h = p.left.head_field(1.0, |p, i| 1.0 / p.sig2[i]);
        let j = 3;
        let panel = &p.left.panels[j];
        let tau = 0.5 * (panel.lo + panel.hi) + 0.1 * panel.half();
        let row = Spectral::get().partial_row(panel.s_of(tau));
        let psi = p.left.psi_in(j, tau);
        let x = p.map.x(-tau);
        let expect = x * (0.5 / (x * x) - 0.5);
        assert!((h.at(&p.left, j, psi, &row) - expect).abs() < 1e-10 * expect.abs().max(1.0));
    }
}

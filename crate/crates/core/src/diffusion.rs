//! The uncontrolled diffusion `dX = μ(X)dt + σ(X)dW` on `(a, b)`: scale and
//! speed densities, the corresponding measures and Feller boundary
//! classification.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::limits::{endpoint_limit, Limit};
use crate::profile::{extrapolate_tail, sample_knots, Cumulative, Panel, Profile, ProfileConfig, Ray, Spectral, NODES};
use crate::quadrature::{
    integrate, integrate_graded, integrate_to_endpoint_scaled, QuadratureConfig, QuadratureResult,
};
use crate::report::{Check, ConditionReport, Verdict};

pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A coefficient function with a human-readable label.
#[derive(Clone)]
pub struct Coefficient {
    f: Fn1,
    label: String,
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coefficient({})", self.label)
    }
}

impl Coefficient {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), label: label.into() }
    }

    pub fn constant(v: f64) -> Self {
        Self::new(format!("{v}"), move |_| v)
    }

    pub fn from_expr(src: &str) -> Result<Self> {
        let e = Expr::parse(src, &[Var::X])?;
        Ok(Self::new(src, move |x| e.eval_x(x)))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryBehavior {
    #[default]
    None,
    Reflecting,
    Sticky,
}

/// Coefficient families with a closed transition law, used by the simulator
/// to pick an exact scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelFamily {
    /// μ(x) = drift, σ(x) = sigma.
    ConstantDrift {
        drift: f64,
        sigma: f64,
    },
    /// μ(x) = rate·x, σ(x) = sigma·x.
    Geometric {
        rate: f64,
        sigma: f64,
    },
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Smooth bijection between a computational line `t ∈ ℝ` and the state
/// interval, with `x0` at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordMap {
    /// x = x0 + t.
    Linear { x0: f64 },
    /// x = a + d·e^t on (a, ∞).
    Lower { a: f64, d: f64 },
    /// x = b − d·e^{−t} on (−∞, b).
    Upper { b: f64, d: f64 },
    /// Logistic map onto a finite (a, b).
    Logit { a: f64, b: f64, t0: f64 },
}

impl CoordMap {
    pub fn for_interval(a: f64, b: f64, x0: f64) -> Self {
        match (a.is_finite(), b.is_finite()) {
            (false, false) => CoordMap::Linear { x0 },
            (true, false) => CoordMap::Lower { a, d: x0 - a },
            (false, true) => CoordMap::Upper { b, d: b - x0 },
            (true, true) => CoordMap::Logit { a, b, t0: ((x0 - a) / (b - x0)).ln() },
        }
    }

    #[inline]
    pub fn x(&self, t: f64) -> f64 {
        match *self {
            CoordMap::Linear { x0 } => x0 + t,
            CoordMap::Lower { a, d } => a + d * t.exp(),
            CoordMap::Upper { b, d } => b - d * (-t).exp(),
            CoordMap::Logit { a, b, t0 } => a + (b - a) / (1.0 + (-(t + t0)).exp()),
        }
    }

    #[inline]
    pub fn dx(&self, t: f64) -> f64 {
        match *self {
            CoordMap::Linear { .. } => 1.0,
            CoordMap::Lower { d, .. } => d * t.exp(),
            CoordMap::Upper { d, .. } => d * (-t).exp(),
            CoordMap::Logit { a, b, t0 } => {
                let e = (-(t + t0).abs()).exp();
                (b - a) * e / ((1.0 + e) * (1.0 + e))
            }
        }
    }

    pub fn t(&self, x: f64) -> f64 {
        match *self {
            CoordMap::Linear { x0 } => x - x0,
            CoordMap::Lower { a, d } => ((x - a) / d).ln(),
            CoordMap::Upper { b, d } => -((b - x) / d).ln(),
            CoordMap::Logit { a, b, t0 } => ((x - a) / (b - x)).ln() - t0,
        }
    }

    /// Half-width of the `t` range used for tables and probes.
    pub fn natural_extent(&self) -> f64 {
        match self {
            CoordMap::Linear { .. } => 1.0e4,
            _ => 60.0,
        }
    }
}

/// The market process: coefficients, interval, base point and declared
/// behavior at a regular left endpoint.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    pub mu: Coefficient,
    pub sigma: Coefficient,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub left_behavior: BoundaryBehavior,
    pub family: ModelFamily,
    /// Base point of the scale density; defaults to `x0`.
    pub scale_base: f64,
    pub quad: QuadratureConfig,
    /// Lazily built log-scale table; depends on μ, σ, the interval and x0,
    /// which should not be changed after the model is first used.
    profile: OnceLock<Arc<Profile>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    Regular,
    Exit,
    Entrance,
    Natural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub side: Side,
    pub endpoint: f64,
    pub attracting: bool,
    /// Scale mass between the endpoint and x0.
    pub scale_integral: f64,
    pub attainable: bool,
    /// ∫ M dS towards the endpoint (finite iff attainable).
    pub sigma_integral: f64,
    /// ∫ S dM towards the endpoint (finite iff the endpoint can be entered).
    pub entrance_integral: f64,
    pub kind: BoundaryKind,
    pub behavior: BoundaryBehavior,
    /// Speed mass between x0 and the endpoint.
    pub speed_integral: f64,
    pub speed_mass_finite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    pub includes_left: bool,
    pub includes_right: bool,
}

impl StateSpace {
    pub fn from_reports(left: &BoundaryReport, right: &BoundaryReport) -> Self {
        Self { includes_left: left.attainable, includes_right: right.kind == BoundaryKind::Entrance }
    }
}

fn fine(cfg: &QuadratureConfig) -> QuadratureConfig {
    QuadratureConfig { abs_tol: cfg.abs_tol.min(1e-14), rel_tol: cfg.rel_tol.min(1e-13), ..*cfg }
}

impl DiffusionModel {
    /// Builds a model from arbitrary coefficients and validates it on a probe grid.
    pub fn new(mu: Coefficient, sigma: Coefficient, a: f64, b: f64, x0: f64) -> Result<Self> {
        let m = Self {
            mu,
            sigma,
            a,
            b,
            x0,
            left_behavior: BoundaryBehavior::None,
            family: ModelFamily::General,
            scale_base: x0,
            quad: QuadratureConfig::default(),
            profile: OnceLock::new(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Drifted Brownian motion `dX = −μ̄ dt + σ dW` on the real line.
    pub fn drifted_bm(demand_rate: f64, sigma: f64, x0: f64) -> Result<Self> {
        let mut m = Self::new(
            Coefficient::new(format!("-{demand_rate}"), move |_| -demand_rate),
            Coefficient::constant(sigma),
            f64::NEG_INFINITY,
            f64::INFINITY,
            x0,
        )?;
        m.family = ModelFamily::ConstantDrift { drift: -demand_rate, sigma };
        Ok(m)
    }

    /// Drifted Brownian motion on `[0, ∞)` reflected at 0.
    pub fn reflected_drifted_bm(demand_rate: f64, sigma: f64, x0: f64) -> Result<Self> {
        let mut m = Self::new(
            Coefficient::new(format!("-{demand_rate}"), move |_| -demand_rate),
            Coefficient::constant(sigma),
            0.0,
            f64::INFINITY,
            x0,
        )?;
        m.family = ModelFamily::ConstantDrift { drift: -demand_rate, sigma };
        m.left_behavior = BoundaryBehavior::Reflecting;
        Ok(m)
    }

    /// Geometric Brownian motion `dX = −μX dt + σX dW` on `(0, ∞)`.
    pub fn geometric_bm(mu: f64, sigma: f64, x0: f64) -> Result<Self> {
        let mut m = Self::new(
            Coefficient::new(format!("-{mu}*x"), move |x| -mu * x),
            Coefficient::new(format!("{sigma}*x"), move |x| sigma * x),
            0.0,
            f64::INFINITY,
            x0,
        )?;
        m.family = ModelFamily::Geometric { rate: -mu, sigma };
        Ok(m)
    }

    pub fn with_left_behavior(mut self, behavior: BoundaryBehavior) -> Self {
        self.left_behavior = behavior;
        self
    }

    pub fn with_quadrature(mut self, cfg: QuadratureConfig) -> Self {
        self.quad = cfg;
        self
    }

    /// Moves the base point of the scale density. Scale quantities change by
    /// a constant factor; every optimisation quantity is unaffected.
    pub fn with_scale_base(mut self, base: f64) -> Result<Self> {
        if !self.contains(base) {
            return Err(Error::Domain(format!("scale base {base} outside ({}, {})", self.a, self.b)));
        }
        self.scale_base = base;
        Ok(self)
    }

    pub fn coords(&self) -> CoordMap {
        CoordMap::for_interval(self.a, self.b, self.x0)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }

    fn validate(&self) -> Result<()> {
        if !(self.a < self.x0 && self.x0 < self.b) || self.x0.is_nan() {
            return Err(Error::InvalidModel(format!("x0 = {} must lie in ({}, {})", self.x0, self.a, self.b)));
        }
        let map = self.coords();
        for i in -40..=40 {
            let x = map.x(i as f64 * 0.5);
            if !self.contains(x) {
                continue;
            }
            let (mu, sigma) = (self.mu.eval(x), self.sigma.eval(x));
            if !mu.is_finite() || !sigma.is_finite() {
                return Err(Error::InvalidModel(format!("coefficients not finite at x = {x}")));
            }
            if sigma <= 0.0 {
                return Err(Error::InvalidModel(format!("sigma must be positive, got {sigma} at x = {x}")));
            }
        }
        Ok(())
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("x = {x} outside ({}, {})", self.a, self.b)))
        }
    }

    #[inline]
    pub fn drift_ratio(&self, x: f64) -> f64 {
        let s = self.sigma.eval(x);
        2.0 * self.mu.eval(x) / (s * s)
    }

    /// Length over which e^{±ψ} changes appreciably near `x`; used to size
    /// the first segment of integrals of exponentially varying integrands.
    pub fn local_width(&self, x: f64) -> f64 {
        let r = self.drift_ratio(x).abs();
        let cap = x.abs().max(1.0);
        let w = if r > 0.0 { 0.5 / r } else { cap };
        w.clamp(1e-9 * (1.0 + x.abs()), cap)
    }

    /// Integral of an exponentially varying integrand from interior `from`
    /// to `to`, which may be interior or an endpoint.
    pub fn integrate_exp<F: Fn(f64) -> f64>(
        &self,
        f: F,
        from: f64,
        to: f64,
        cfg: &QuadratureConfig,
    ) -> Result<QuadratureResult> {
        if to == self.a || to == self.b {
            integrate_to_endpoint_scaled(f, from, to, self.local_width(from), cfg)
        } else {
            let w = self.local_width(from).min(self.local_width(to));
            integrate_graded(f, from, to, w, cfg)
        }
    }

    /// The tabulated log-scale profile, built on first use.
    pub fn profile(&self) -> Result<Arc<Profile>> {
        if let Some(p) = self.profile.get() {
            return Ok(p.clone());
        }
        let p = Arc::new(Profile::build(self, &ProfileConfig::default(), &[], None)?);
        Ok(self.profile.get_or_init(|| p).clone())
    }

    /// ψ(to) − ψ(from) with ψ' = 2μ/σ².
    pub fn psi_diff(&self, from: f64, to: f64) -> Result<f64> {
        if from == to {
            return Ok(0.0);
        }
        let prof = self.profile()?;
        if let (Some(p0), Some(p1)) = (prof.psi(from), prof.psi(to)) {
            return Ok(p1 - p0);
        }
        self.psi_diff_direct(from, to)
    }

    fn psi_diff_direct(&self, from: f64, to: f64) -> Result<f64> {
        let r = integrate(|v| self.drift_ratio(v), from, to, &fine(&self.quad))?;
        if !r.converged {
            return Err(Error::Numerical { what: format!("log scale on [{from}, {to}]"), achieved: r.error_estimate });
        }
        Ok(r.value)
    }

    pub fn scale_density(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok((-self.psi_diff(self.scale_base, x)?).exp())
    }

    pub fn speed_density(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let s = self.sigma.eval(x);
        Ok(self.psi_diff(self.scale_base, x)?.exp() / (s * s))
    }

    /// S[y, z]; endpoints allowed, divergence returned as +∞.
    pub fn scale_measure(&self, y: f64, z: f64) -> Result<f64> {
        self.measure(y, z, false)
    }

    /// M[y, z]; endpoints allowed, divergence returned as +∞.
    pub fn speed_measure(&self, y: f64, z: f64) -> Result<f64> {
        self.measure(y, z, true)
    }

    /// Sample knots reached by a ray, as boundary indices.
    fn ray_samples(&self, prof: &Profile, ray: &Ray) -> Vec<usize> {
        ray.knot_indices(&sample_knots(&prof.map, prof.map.natural_extent()))
    }

    /// Limit of ∫_0^τ g dτ as τ runs to the end of the ray, where `g(j, p, i)`
    /// is the integrand in τ. Read along the sample knots; the part beyond the
    /// last panel is extrapolated from the last two nodes.
    fn ray_limit<G: Fn(usize, &Panel, usize) -> f64>(&self, prof: &Profile, ray: &Ray, g: G) -> Limit {
        let cum = ray.cumulative(&g);
        let n = ray.panels.len();
        if n == 0 {
            return Limit::Unknown(f64::NAN);
        }
        let last = &ray.panels[n - 1];
        let beyond = extrapolate_tail(last, g(n - 1, last, NODES - 2), g(n - 1, last, NODES - 1));
        let samples: Vec<f64> = self.ray_samples(prof, ray).iter().map(|&k| cum[k]).collect();
        endpoint_limit(&samples, cum[n], beyond, self.quad.divergence_cap)
    }

    /// ∫ from x0 to the endpoint on `side` of e^{sign ψ}·w, with ψ based at x0.
    fn endpoint_mass<W: Fn(&Panel, usize) -> f64>(&self, prof: &Profile, side: Side, sign: f64, w: W) -> Limit {
        let ray = prof.ray(side);
        self.ray_limit(prof, ray, |_, p, i| (sign * p.psi[i]).exp() * w(p, i) * p.jac[i])
    }

    fn measure(&self, y: f64, z: f64, speed: bool) -> Result<f64> {
        if !(self.a <= y && y <= z && z <= self.b) {
            return Err(Error::Domain(format!("need a <= y <= z <= b, got y = {y}, z = {z}")));
        }
        if y == z {
            return Ok(0.0);
        }
        let prof = self.profile()?;
        let sign = if speed { 1.0 } else { -1.0 };
        let weight = |p: &Panel, i: usize| if speed { 1.0 / p.sig2[i] } else { 1.0 };
        // Signed integral from x0 to x, relative to the base x0.
        let from_x0 = |x: f64| -> Result<Option<f64>> {
            if x == self.x0 {
                return Ok(Some(0.0));
            }
            if x == self.a || x == self.b {
                let side = if x == self.a { Side::Left } else { Side::Right };
                let orient = if side == Side::Left { -1.0 } else { 1.0 };
                return match self.endpoint_mass(&prof, side, sign, weight) {
                    Limit::Finite(v) => Ok(Some(orient * v)),
                    Limit::PlusInfinity | Limit::MinusInfinity => Ok(Some(orient * f64::INFINITY)),
                    Limit::Unknown(v) => Err(Error::Numerical {
                        what: format!("{} measure up to the {side} endpoint", if speed { "speed" } else { "scale" }),
                        achieved: v,
                    }),
                };
            }
            let Some((side, tau, j)) = prof.locate(x) else {
                return Ok(None);
            };
            let ray = prof.ray(side);
            let v: Vec<_> =
                ray.panels.iter().map(|p| std::array::from_fn(|i| (sign * p.psi[i]).exp() * weight(p, i))).collect();
            let c = Cumulative::new(ray, v);
            let row = Spectral::get().partial_row(ray.panels[j].s_of(tau));
            let orient = if side == Side::Left { -1.0 } else { 1.0 };
            Ok(Some(orient * c.at(ray, j, &row)))
        };
        let (Some(fy), Some(fz)) = (from_x0(y)?, from_x0(z)?) else {
            return self.measure_direct(y, z, speed);
        };
        let base = self.psi_diff(self.x0, self.scale_base)?;
        Ok((fz - fy) * (-sign * base).exp())
    }

    /// Measure by direct quadrature; used beyond the tabulated range.
    fn measure_direct(&self, y: f64, z: f64, speed: bool) -> Result<f64> {
        let anchor = if self.contains(y) {
            y
        } else if self.contains(z) {
            z
        } else {
            self.x0
        };
        let psi_anchor = self.psi_diff(self.scale_base, anchor)?;
        let sign = if speed { 1.0 } else { -1.0 };
        let density = |v: f64| -> f64 {
            let d = match self.psi_diff_direct(anchor, v) {
                Ok(d) => d,
                Err(_) => return f64::NAN,
            };
            let e = (sign * d).exp();
            if speed {
                let s = self.sigma.eval(v);
                e / (s * s)
            } else {
                e
            }
        };
        let left = self.piece(&density, anchor, y)?;
        let right = self.piece(&density, anchor, z)?;
        let total = right.value - left.value;
        Ok(total * (sign * psi_anchor).exp())
    }

    /// Signed integral from the anchor to `to`, which may be an endpoint.
    fn piece<F: Fn(f64) -> f64>(&self, f: &F, anchor: f64, to: f64) -> Result<QuadratureResult> {
        let r = self.integrate_exp(f, anchor, to, &self.quad)?;
        if !r.converged {
            return Err(Error::Numerical {
                what: format!("measure integral from {anchor} to {to}"),
                achieved: r.error_estimate,
            });
        }
        Ok(r)
    }

    /// Feller classification of one endpoint.
    ///
    /// S and M masses between x0 and the endpoint decide most cases at once:
    /// S infinite forces Σ = ∞, M infinite forces N = ∞, and both finite make
    /// the endpoint regular. The remaining integral Σ = ∫ m(v) S[v, e] dv or
    /// N = ∫ s(v) M[v, e] dv is read from the profile tail fields.
    pub fn classify_boundary(&self, side: Side) -> Result<BoundaryReport> {
        let endpoint = match side {
            Side::Left => self.a,
            Side::Right => self.b,
        };
        let prof = self.profile()?;
        let ray = prof.ray(side);
        let uncertain = |what: &str, v: f64| Error::ClassificationUncertain {
            side: side.to_string(),
            detail: format!("{what}: no clear limit, last partial value {v}"),
        };
        let decide = |what: &str, l: Limit| -> Result<f64> {
            match l {
                Limit::Finite(v) => Ok(v),
                Limit::PlusInfinity | Limit::MinusInfinity => Ok(f64::INFINITY),
                Limit::Unknown(v) => Err(uncertain(what, v)),
            }
        };
        let base = self.psi_diff(self.x0, self.scale_base)?;
        let scale = decide("scale mass", self.endpoint_mass(&prof, side, -1.0, |_, _| 1.0))?;
        let speed = decide("speed mass", self.endpoint_mass(&prof, side, 1.0, |p, i| 1.0 / p.sig2[i]))?;
        let attracting = scale.is_finite();

        let sigma_integral = if !attracting {
            f64::INFINITY
        } else {
            let t = ray.tail_field(-1.0, |_, _| 1.0);
            decide(
                "attainability integral",
                self.ray_limit(&prof, ray, |j, p, i| t.nodes[j][i] / p.sig2[i] * p.jac[i]),
            )?
        };
        let entrance_integral = if !speed.is_finite() {
            f64::INFINITY
        } else {
            let t = ray.tail_field(1.0, |p, i| 1.0 / p.sig2[i]);
            decide("entrance integral", self.ray_limit(&prof, ray, |j, p, i| t.nodes[j][i] * p.jac[i]))?
        };
        let attainable = sigma_integral.is_finite();
        let enterable = entrance_integral.is_finite();
        let kind = match (attainable, enterable) {
            (true, true) => BoundaryKind::Regular,
            (true, false) => BoundaryKind::Exit,
            (false, true) => BoundaryKind::Entrance,
            (false, false) => BoundaryKind::Natural,
        };
        let behavior = if side == Side::Left && kind == BoundaryKind::Regular {
            self.left_behavior
        } else {
            BoundaryBehavior::None
        };
        Ok(BoundaryReport {
            side,
            endpoint,
            attracting,
            scale_integral: scale * base.exp(),
            attainable,
            sigma_integral,
            entrance_integral,
            kind,
            behavior,
            speed_integral: speed * (-base).exp(),
            speed_mass_finite: speed.is_finite(),
        })
    }

    pub fn state_space(&self) -> Result<StateSpace> {
        let l = self.classify_boundary(Side::Left)?;
        let r = self.classify_boundary(Side::Right)?;
        Ok(StateSpace::from_reports(&l, &r))
    }

    /// s(x)·M[x, b), computed without forming either factor.
    pub fn scaled_speed_tail(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let prof = self.profile()?;
        let w = |p: &Panel, i: usize| 1.0 / p.sig2[i];
        let right = prof.right.tail_field(1.0, w);
        let Some((side, tau, j)) = prof.locate(x) else {
            return self.scaled_speed_tail_direct(x);
        };
        let ray = prof.ray(side);
        let psi = ray.psi_in(j, tau);
        let row = Spectral::get().partial_row(ray.panels[j].s_of(tau));
        Ok(match side {
            Side::Right => right.at(ray, j, psi, &row),
            Side::Left => {
                let head = ray.head_field(1.0, w);
                head.at(ray, j, psi, &row) + (-psi).exp() * right.bound[0]
            }
        })
    }

    fn scaled_speed_tail_direct(&self, x: f64) -> Result<f64> {
        let r = self.integrate_exp(
            |v| match self.psi_diff_direct(x, v) {
                Ok(d) => {
                    let s = self.sigma.eval(v);
                    d.exp() / (s * s)
                }
                Err(_) => f64::NAN,
            },
            x,
            self.b,
            &self.quad,
        )?;
        Ok(r.value)
    }

    /// Evaluates the standing conditions on the diffusion.
    pub fn check_model_conditions(&self) -> Result<ConditionReport> {
        let left = self.classify_boundary(Side::Left)?;
        let right = self.classify_boundary(Side::Right)?;
        let mut rep = ConditionReport::default();
        let v = |ok: bool| if ok { Verdict::Pass } else { Verdict::Fail };
        rep.push(
            Check::new("a_attracting", "left endpoint attracting", v(left.attracting), left.scale_integral)
                .at(&[self.a]),
        );
        rep.push(
            Check::new("b_non_attracting", "right endpoint non-attracting", v(!right.attracting), right.scale_integral)
                .at(&[self.b]),
        );
        if right.kind == BoundaryKind::Natural {
            // M[y, b) on probe points between a and x0.
            let map = self.coords();
            let mut worst = 0.0f64;
            let mut ok = true;
            let mut loc = self.x0;
            for k in 0..6 {
                let y = map.x(-(k as f64) * 2.0);
                if !self.contains(y) {
                    continue;
                }
                let m = self.speed_measure(y, self.b)?;
                if !m.is_finite() {
                    ok = false;
                    loc = y;
                }
                if m > worst {
                    worst = m;
                    loc = y;
                }
            }
            rep.push(
                Check::new("speed_mass_to_b_finite", "M[y,b) finite at natural b", v(ok), worst)
                    .at(&[loc])
                    .grid("y = X(-2k), k = 0..5"),
            );
        }
        if left.kind == BoundaryKind::Regular || self.left_behavior != BoundaryBehavior::None {
            let ok = (left.kind == BoundaryKind::Regular) == (self.left_behavior != BoundaryBehavior::None);
            rep.push(
                Check::new("left_behavior_declared", "regular left endpoint needs declared behavior", v(ok), 0.0)
                    .note(format!("kind {:?}, declared {:?}", left.kind, self.left_behavior)),
            );
        }
        if self.left_behavior == BoundaryBehavior::Reflecting && left.kind == BoundaryKind::Regular {
            let seq = approach_sequence(self, Side::Left, 30);
            let vals: Vec<f64> = seq.iter().map(|&x| self.scaled_speed_tail(x)).collect::<Result<_>>()?;
            let lim = crate::limits::extrapolate_limit(&vals, self.quad.divergence_cap);
            let verdict = match lim {
                crate::limits::Limit::Finite(_) => Verdict::Pass,
                crate::limits::Limit::PlusInfinity | crate::limits::Limit::MinusInfinity => Verdict::Fail,
                crate::limits::Limit::Unknown(_) => Verdict::Uncertain,
            };
            rep.push(
                Check::new("reflecting_a_speed_tail", "s(a)M[a,b) finite at reflecting a", verdict, lim.value())
                    .at(&[self.a])
                    .grid("geometric approach to a, ratio 1/2"),
            );
        }
        Ok(rep)
    }
}

/// Geometric approach sequence toward an endpoint: ratio 1/2, starting one
/// unit inside (one decade for a finite endpoint paired with an infinite one).
pub fn approach_sequence(model: &DiffusionModel, side: Side, terms: usize) -> Vec<f64> {
    let (e, other) = match side {
        Side::Left => (model.a, model.b),
        Side::Right => (model.b, model.a),
    };
    let inward = if side == Side::Left { 1.0 } else { -1.0 };
    if e.is_finite() {
        let start = if other.is_finite() { (other - e).abs() * 0.5 } else { 0.1f64.max(e.abs() * 0.1) };
        let start = if other.is_finite() { start } else { start.min((model.x0 - e).abs()) };
        (0..terms).map(|k| e + inward * start * 0.5f64.powi(k as i32)).collect()
    } else {
        let start = model.x0 - inward;
        (0..terms).map(|k| start - inward * (2.0f64.powi(k as i32) - 1.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn densities_match_closed_forms() {
        let dbm = DiffusionModel::drifted_bm(1.0, 1.0, 0.0).unwrap();
        assert!(close(dbm.scale_density(1.0).unwrap(), 2f64.exp(), 1e-12));
        assert_eq!(dbm.scale_density(0.0).unwrap(), 1.0);
        assert!(close(dbm.speed_density(1.0).unwrap(), (-2f64).exp(), 1e-12));
        assert_eq!(dbm.speed_density(0.0).unwrap(), 1.0);
        let gbm = DiffusionModel::geometric_bm(0.5, 1.0, 1.0).unwrap();
        assert!(close(gbm.scale_density(4.0).unwrap(), 4.0, 1e-12));
        assert!(close(gbm.speed_density(2.0).unwrap(), 0.125, 1e-12));
    }

    #[test]
    fn measures_match_closed_forms() {
        let dbm = DiffusionModel::drifted_bm(1.0, 1.0, 0.0).unwrap();
        assert!(close(dbm.scale_measure(0.0, 1.0).unwrap(), (2f64.exp() - 1.0) / 2.0, 1e-9));
        assert!(close(dbm.scale_measure(f64::NEG_INFINITY, 0.0).unwrap(), 0.5, 1e-8));
        assert!(close(dbm.speed_measure(0.0, f64::INFINITY).unwrap(), 0.5, 1e-8));
        assert_eq!(dbm.speed_measure(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(dbm.scale_measure(0.0, f64::INFINITY).unwrap(), f64::INFINITY);
        let gbm = DiffusionModel::geometric_bm(0.5, 1.0, 1.0).unwrap();
        assert!(close(gbm.speed_measure(1.0, f64::INFINITY).unwrap(), 0.5, 1e-8));
        // Additivity.
        let whole = dbm.scale_measure(-1.0, 2.0).unwrap();
        let parts = dbm.scale_measure(-1.0, 0.5).unwrap() + dbm.scale_measure(0.5, 2.0).unwrap();
        assert!(close(whole, parts, 1e-10));
    }

    #[test]
    fn classifies_reference_models() {
        let dbm = DiffusionModel::drifted_bm(1.0, 1.0, 0.0).unwrap();
        let l = dbm.classify_boundary(Side::Left).unwrap();
        let r = dbm.classify_boundary(Side::Right).unwrap();
        assert!(l.attracting && !r.attracting);
        assert_eq!((l.kind, r.kind), (BoundaryKind::Natural, BoundaryKind::Natural));

        let rdbm = DiffusionModel::reflected_drifted_bm(1.0, 1.0, 1.0).unwrap();
        let l = rdbm.classify_boundary(Side::Left).unwrap();
        assert_eq!(l.kind, BoundaryKind::Regular);
        assert_eq!(l.behavior, BoundaryBehavior::Reflecting);

        let gbm = DiffusionModel::geometric_bm(0.5, 1.0, 1.0).unwrap();
        let l = gbm.classify_boundary(Side::Left).unwrap();
        let r = gbm.classify_boundary(Side::Right).unwrap();
        assert!(l.attracting && !r.attracting);
        assert_eq!((l.kind, r.kind), (BoundaryKind::Natural, BoundaryKind::Natural));
        let ss = gbm.state_space().unwrap();
        assert!(!ss.includes_left && !ss.includes_right);
    }

    #[test]
    fn model_conditions() {
        let dbm = DiffusionModel::drifted_bm(1.0, 1.0, 0.0).unwrap();
        let rep = dbm.check_model_conditions().unwrap();
        assert!(rep.passed(), "{rep:?}");
        let rdbm = DiffusionModel::reflected_drifted_bm(1.0, 1.0, 1.0).unwrap();
        let rep = rdbm.check_model_conditions().unwrap();
        assert!(rep.passed(), "{rep:?}");
        let c = rep.get("reflecting_a_speed_tail").unwrap();
        assert!(close(c.residual, 0.5, 1e-6), "{}", c.residual);
        let upward = DiffusionModel::drifted_bm(-1.0, 1.0, 0.0).unwrap();
        let rep = upward.check_model_conditions().unwrap();
        assert_eq!(rep.get("a_attracting").unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn rejects_degenerate_sigma() {
        let r = DiffusionModel::new(
            Coefficient::constant(-1.0),
            Coefficient::constant(0.0),
            f64::NEG_INFINITY,
            f64::INFINITY,
            0.0,
        );
        assert!(matches!(r, Err(Error::InvalidModel(_))));
        let r = DiffusionModel::drifted_bm(1.0, 1.0, f64::INFINITY);
        assert!(r.is_err());
    }

    #[test]
    fn coordinate_maps_round_trip() {
        for map in [
            CoordMap::for_interval(f64::NEG_INFINITY, f64::INFINITY, 0.3),
            CoordMap::for_interval(0.0, f64::INFINITY, 2.0),
            CoordMap::for_interval(f64::NEG_INFINITY, 5.0, 1.0),
            CoordMap::for_interval(-1.0, 3.0, 0.0),
        ] {
            assert!(map.t(map.x(0.0)).abs() < 1e-14);
            for &t in &[-3.0, -0.5, 0.7, 4.0] {
                assert!((map.t(map.x(t)) - t).abs() < 1e-10);
                let h = 1e-6;
                let fd = (map.x(t + h) - map.x(t - h)) / (2.0 * h);
                assert!((fd - map.dx(t)).abs() <= 1e-6 * map.dx(t).abs().max(1.0));
            }
        }
    }
}

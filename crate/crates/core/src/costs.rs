//! Holding/back-order cost `c0` and ordering cost `c1`, the built-in cost
//! families, and checks of the standing cost conditions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::diffusion::{approach_sequence, DiffusionModel, Fn1, Side};
use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::limits::{extrapolate_limit, Limit};
use crate::report::{Check, ConditionReport, Verdict};

pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CostStructure {
    pub name: String,
    c0: Fn1,
    c1: Fn2,
    dc1_dy: Option<Fn2>,
    dc1_dz: Option<Fn2>,
    /// Lower bound of the ordering cost.
    pub k1: f64,
    /// Declared limits of c0 at the endpoints; sampled when absent.
    pub c0_at_a: Option<f64>,
    pub c0_at_b: Option<f64>,
    /// Points where c0 is not smooth; the key-function tables split there.
    pub breakpoints: Vec<f64>,
    /// Width of the boundary neighbourhoods used by the boundary samplers.
    pub boundary_radius: f64,
}

impl fmt::Debug for CostStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostStructure")
            .field("name", &self.name)
            .field("k1", &self.k1)
            .field("c0_at_a", &self.c0_at_a)
            .field("c0_at_b", &self.c0_at_b)
            .finish()
    }
}

impl CostStructure {
    pub fn new(
        name: impl Into<String>,
        c0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        c1: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        k1: f64,
    ) -> Result<Self> {
        if !(k1 > 0.0) {
            return Err(Error::Param(format!("k1 must be positive, got {k1}")));
        }
        Ok(Self {
            name: name.into(),
            c0: Arc::new(c0),
            c1: Arc::new(c1),
            dc1_dy: None,
            dc1_dz: None,
            k1,
            c0_at_a: None,
            c0_at_b: None,
            breakpoints: Vec::new(),
            boundary_radius: 1.0,
        })
    }

    /// Costs given as expressions: `c0` in `x`, `c1` in `y` and `z`.
    pub fn from_exprs(c0: &str, c1: &str, k1: f64) -> Result<Self> {
        let e0 = Expr::parse(c0, &[Var::X])?;
        let e1 = Expr::parse(c1, &[Var::Y, Var::Z])?;
        Self::new(format!("c0 = {c0}; c1 = {c1}"), move |x| e0.eval_x(x), move |y, z| e1.eval_yz(y, z), k1)
    }

    pub fn with_partials(
        mut self,
        dy: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dz: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.dc1_dy = Some(Arc::new(dy));
        self.dc1_dz = Some(Arc::new(dz));
        self
    }

    pub fn with_boundary_values(mut self, at_a: Option<f64>, at_b: Option<f64>) -> Self {
        self.c0_at_a = at_a;
        self.c0_at_b = at_b;
        self
    }

    pub fn with_breakpoints(mut self, pts: Vec<f64>) -> Self {
        self.breakpoints = pts;
        self
    }

    #[inline]
    pub fn c0(&self, x: f64) -> f64 {
        (self.c0)(x)
    }

    #[inline]
    pub fn c1(&self, y: f64, z: f64) -> f64 {
        (self.c1)(y, z)
    }

    pub fn has_closed_partials(&self) -> bool {
        self.dc1_dy.is_some() && self.dc1_dz.is_some()
    }

    /// ∂c1/∂y, closed form when available, else a central difference.
    pub fn dc1_dy(&self, y: f64, z: f64) -> f64 {
        match &self.dc1_dy {
            Some(f) => f(y, z),
            None => {
                let h = 1e-5 * (1.0 + y.abs());
                (self.c1(y + h, z) - self.c1(y - h, z)) / (2.0 * h)
            }
        }
    }

    /// ∂c1/∂z, closed form when available, else a central difference.
    pub fn dc1_dz(&self, y: f64, z: f64) -> f64 {
        match &self.dc1_dz {
            Some(f) => f(y, z),
            None => {
                let h = 1e-5 * (1.0 + z.abs());
                (self.c1(y, z + h) - self.c1(y, z - h)) / (2.0 * h)
            }
        }
    }

    /// Both costs multiplied by `lambda > 0`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let (c0, c1) = (self.c0.clone(), self.c1.clone());
        let mut out = self.clone();
        out.name = format!("{} x {lambda}", self.name);
        out.c0 = Arc::new(move |x| lambda * c0(x));
        out.c1 = Arc::new(move |y, z| lambda * c1(y, z));
        out.dc1_dy = self.dc1_dy.clone().map(|f| -> Fn2 { Arc::new(move |y, z| lambda * f(y, z)) });
        out.dc1_dz = self.dc1_dz.clone().map(|f| -> Fn2 { Arc::new(move |y, z| lambda * f(y, z)) });
        out.k1 = lambda * self.k1;
        out.c0_at_a = self.c0_at_a.map(|v| lambda * v);
        out.c0_at_b = self.c0_at_b.map(|v| lambda * v);
        out
    }

    /// c0 at an endpoint: the declared value, or a sampled limit.
    pub fn c0_limit(&self, model: &DiffusionModel, side: Side) -> f64 {
        let declared = match side {
            Side::Left => self.c0_at_a,
            Side::Right => self.c0_at_b,
        };
        if let Some(v) = declared {
            return v;
        }
        self.sampled_c0_limit(model, side).value()
    }

    pub fn sampled_c0_limit(&self, model: &DiffusionModel, side: Side) -> Limit {
        let seq = approach_sequence(model, side, 40);
        let vals: Vec<f64> = seq.iter().map(|&x| self.c0(x)).collect();
        extrapolate_limit(&vals, model.quad.divergence_cap)
    }
}

/// Parameters of a built-in cost family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinCost {
    /// c0 = c_b·(−x) for x < 0, c_h·x for x ≥ 0; c1 = k1 + k2(z − y).
    DbmClassic { c_b: f64, c_h: f64, k1: f64, k2: f64 },
    /// c0 = k3·x + k4·e^{−x}; c1 = k1 + k2·√(z − y).
    RdbmConcave { k1: f64, k2: f64, k3: f64, k4: f64 },
    /// c0 = k3·x; c1 = k1 + k2(z − y).
    GbmLinear { k1: f64, k2: f64, k3: f64 },
    /// c0 = k3·x + k4·x^β with β < 0; c1 = k1 + k2·√(z − y).
    GbmNonlinear { k1: f64, k2: f64, k3: f64, k4: f64, beta: f64 },
    /// c0 = k4(1 − x) on (0, 1], k3(x − 1) above 1;
    /// c1 = k1 + (k2/2)(y^{−1/2} − z^{−1/2}) + (k2/2)(z − y).
    /// `mu`, `sigma` are the GBM parameters entering the lower bound on k4.
    GbmPiecewise { k1: f64, k2: f64, k3: f64, k4: f64, mu: f64, sigma: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be nonnegative, got {v}")))
    }
}

/// Lower bound on k4 for the piecewise-linear GBM costs.
pub fn piecewise_k4_bound(k1: f64, k2: f64, k3: f64, mu: f64, sigma: f64) -> f64 {
    let e = std::f64::consts::E;
    (sigma * sigma + 2.0 * mu)
        * (k1 + 0.5 * k2 * (1.0 - (-0.5f64).exp()) + (k2 * mu + 2.0 * k3) / (2.0 * mu) * (e - 1.0))
        - 2.0 * k3
}

impl BuiltinCost {
    pub fn name(&self) -> &'static str {
        match self {
            BuiltinCost::DbmClassic { .. } => "dbm_classic",
            BuiltinCost::RdbmConcave { .. } => "rdbm_concave",
            BuiltinCost::GbmLinear { .. } => "gbm_linear",
            BuiltinCost::GbmNonlinear { .. } => "gbm_nonlinear",
            BuiltinCost::GbmPiecewise { .. } => "gbm_piecewise_modular",
        }
    }

    pub fn build(&self) -> Result<CostStructure> {
        let inf = Some(f64::INFINITY);
        match *self {
            BuiltinCost::DbmClassic { c_b, c_h, k1, k2 } => {
                positive("c_b", c_b)?;
                positive("c_h", c_h)?;
                positive("k1", k1)?;
                nonnegative("k2", k2)?;
                Ok(CostStructure::new(
                    self.name(),
                    move |x| if x < 0.0 { -c_b * x } else { c_h * x },
                    move |y, z| k1 + k2 * (z - y),
                    k1,
                )?
                .with_partials(move |_, _| -k2, move |_, _| k2)
                .with_boundary_values(inf, inf)
                .with_breakpoints(vec![0.0]))
            }
            BuiltinCost::RdbmConcave { k1, k2, k3, k4 } => {
                positive("k1", k1)?;
                nonnegative("k2", k2)?;
                positive("k3", k3)?;
                nonnegative("k4", k4)?;
                Ok(CostStructure::new(
                    self.name(),
                    move |x| k3 * x + k4 * (-x).exp(),
                    move |y, z| k1 + k2 * (z - y).max(0.0).sqrt(),
                    k1,
                )?
                .with_partials(move |y, z| -0.5 * k2 / (z - y).sqrt(), move |y, z| 0.5 * k2 / (z - y).sqrt())
                .with_boundary_values(Some(k4), inf))
            }
            BuiltinCost::GbmLinear { k1, k2, k3 } => {
                positive("k1", k1)?;
                nonnegative("k2", k2)?;
                positive("k3", k3)?;
                Ok(CostStructure::new(self.name(), move |x| k3 * x, move |y, z| k1 + k2 * (z - y), k1)?
                    .with_partials(move |_, _| -k2, move |_, _| k2)
                    .with_boundary_values(Some(0.0), inf))
            }
            BuiltinCost::GbmNonlinear { k1, k2, k3, k4, beta } => {
                positive("k1", k1)?;
                nonnegative("k2", k2)?;
                positive("k3", k3)?;
                positive("k4", k4)?;
                if !(beta < 0.0) {
                    return Err(Error::Param(format!("beta must be negative, got {beta}")));
                }
                Ok(CostStructure::new(
                    self.name(),
                    move |x| k3 * x + k4 * x.powf(beta),
                    move |y, z| k1 + k2 * (z - y).max(0.0).sqrt(),
                    k1,
                )?
                .with_partials(move |y, z| -0.5 * k2 / (z - y).sqrt(), move |y, z| 0.5 * k2 / (z - y).sqrt())
                .with_boundary_values(inf, inf))
            }
            BuiltinCost::GbmPiecewise { k1, k2, k3, k4, mu, sigma } => {
                positive("k1", k1)?;
                positive("k2", k2)?;
                positive("k3", k3)?;
                positive("mu", mu)?;
                positive("sigma", sigma)?;
                let bound = piecewise_k4_bound(k1, k2, k3, mu, sigma);
                if !(k4 > bound) {
                    return Err(Error::Param(format!("k4 must exceed {bound} for these parameters, got {k4}")));
                }
                Ok(CostStructure::new(
                    self.name(),
                    move |x| if x <= 1.0 { k4 * (1.0 - x) } else { k3 * (x - 1.0) },
                    move |y, z| k1 + 0.5 * k2 * (y.powf(-0.5) - z.powf(-0.5)) + 0.5 * k2 * (z - y),
                    k1,
                )?
                .with_partials(
                    move |y, _| -0.25 * k2 * y.powf(-1.5) - 0.5 * k2,
                    move |_, z| 0.25 * k2 * z.powf(-1.5) + 0.5 * k2,
                )
                .with_boundary_values(Some(k4), inf)
                .with_breakpoints(vec![1.0]))
            }
        }
    }
}

/// Builds a named cost family from a parameter map. Missing parameters are an
/// error, as are unknown ones.
pub fn builtin_cost(name: &str, params: &BTreeMap<String, f64>) -> Result<CostStructure> {
    let known: &[&str] = match name {
        "dbm_classic" => &["c_b", "c_h", "k1", "k2"],
        "rdbm_concave" => &["k1", "k2", "k3", "k4"],
        "gbm_linear" => &["k1", "k2", "k3"],
        "gbm_nonlinear" => &["k1", "k2", "k3", "k4", "beta"],
        "gbm_piecewise_modular" => &["k1", "k2", "k3", "k4", "mu", "sigma"],
        _ => return Err(Error::Param(format!("unknown cost family '{name}'"))),
    };
    for k in params.keys() {
        if !known.contains(&k.as_str()) {
            return Err(Error::Param(format!("unknown parameter '{k}' for cost family '{name}'")));
        }
    }
    let p = |k: &str| -> Result<f64> {
        params.get(k).copied().ok_or_else(|| Error::Param(format!("missing parameter '{k}' for cost family '{name}'")))
    };
    let spec = match name {
        "dbm_classic" => BuiltinCost::DbmClassic { c_b: p("c_b")?, c_h: p("c_h")?, k1: p("k1")?, k2: p("k2")? },
        "rdbm_concave" => BuiltinCost::RdbmConcave { k1: p("k1")?, k2: p("k2")?, k3: p("k3")?, k4: p("k4")? },
        "gbm_linear" => BuiltinCost::GbmLinear { k1: p("k1")?, k2: p("k2")?, k3: p("k3")? },
        "gbm_nonlinear" => {
            BuiltinCost::GbmNonlinear { k1: p("k1")?, k2: p("k2")?, k3: p("k3")?, k4: p("k4")?, beta: p("beta")? }
        }
        _ => BuiltinCost::GbmPiecewise {
            k1: p("k1")?,
            k2: p("k2")?,
            k3: p("k3")?,
            k4: p("k4")?,
            mu: p("mu")?,
            sigma: p("sigma")?,
        },
    };
    spec.build()
}

/// Evaluates the standing cost conditions against a model.
pub fn check_cost_conditions(model: &DiffusionModel, costs: &CostStructure) -> Result<ConditionReport> {
    let mut rep = ConditionReport::default();
    let map = model.coords();
    let probes: Vec<f64> = (-24..=24).map(|i| map.x(i as f64 * 0.25)).filter(|x| model.contains(*x)).collect();

    let (mut worst, mut at) = (f64::INFINITY, f64::NAN);
    for &x in &probes {
        let v = costs.c0(x);
        if !(v >= worst) {
            worst = v;
            at = x;
        }
    }
    let v = if worst >= 0.0 { Verdict::Pass } else { Verdict::Fail };
    rep.push(Check::new("c0_nonnegative", "c0 >= 0", v, worst).at(&[at]).grid("t in [-6, 6], step 0.25"));

    // ∫_y^b c0 dM, scaled by s(y) so nothing overflows.
    let tail = |y: f64| -> Result<f64> {
        let r = model.integrate_exp(
            |v| match model.psi_diff(y, v) {
                Ok(d) => {
                    let s = model.sigma.eval(v);
                    2.0 * costs.c0(v) * d.exp() / (s * s)
                }
                Err(_) => f64::NAN,
            },
            y,
            model.b,
            &model.quad,
        )?;
        Ok(if r.converged { r.value } else { f64::NAN })
    };
    let mut worst = 0.0f64;
    let mut verdict = Verdict::Pass;
    let mut loc = model.x0;
    for k in -2..=2 {
        let y = map.x(k as f64);
        if !model.contains(y) {
            continue;
        }
        let t = tail(y)?;
        if t.is_nan() {
            verdict = Verdict::Uncertain;
            loc = y;
        } else if !t.is_finite() {
            verdict = Verdict::Fail;
            loc = y;
            worst = t;
            break;
        } else if t > worst {
            worst = t;
            loc = y;
        }
    }
    rep.push(
        Check::new("c0_speed_integrable", "integral of c0 dM over [y,b) finite", verdict, worst)
            .at(&[loc])
            .grid("y = X(t), t in {-2..2}")
            .note("residual is s(y) * 2 * integral of c0 dM"),
    );

    for side in [Side::Left, Side::Right] {
        let endpoint = if side == Side::Left { model.a } else { model.b };
        let sampled = costs.sampled_c0_limit(model, side);
        let declared = if side == Side::Left { costs.c0_at_a } else { costs.c0_at_b };
        let name = if side == Side::Left { "c0_limit_at_a" } else { "c0_limit_at_b" };
        let (verdict, note) = if !endpoint.is_finite() {
            let ok = sampled == Limit::PlusInfinity && declared.is_none_or(|d| d == f64::INFINITY);
            (if ok { Verdict::Pass } else { Verdict::Fail }, "infinite endpoint requires c0 -> infinity".to_string())
        } else {
            match (sampled, declared) {
                (Limit::Unknown(_), _) => (Verdict::Uncertain, "no clear limit".to_string()),
                (l, Some(d)) => {
                    let lv = l.value();
                    let ok = if d.is_infinite() || lv.is_infinite() {
                        d == lv
                    } else {
                        (lv - d).abs() <= 1e-6 * (1.0 + d.abs())
                    };
                    (if ok { Verdict::Pass } else { Verdict::Fail }, format!("declared {d}"))
                }
                (_, None) => (Verdict::Pass, "limit sampled".to_string()),
            }
        };
        rep.push(
            Check::new(name, "c0 continuous up to the boundary", verdict, sampled.value())
                .at(&[endpoint])
                .grid("geometric approach, ratio 1/2, 40 terms")
                .note(note),
        );
    }

    if model.left_behavior == crate::diffusion::BoundaryBehavior::Reflecting {
        let seq = approach_sequence(model, Side::Left, 30);
        let mut vals = Vec::with_capacity(seq.len());
        for &x in &seq {
            vals.push(tail(x)?);
        }
        let lim = extrapolate_limit(&vals, model.quad.divergence_cap);
        let verdict = match lim {
            Limit::Finite(_) => Verdict::Pass,
            Limit::Unknown(_) => Verdict::Uncertain,
            _ => Verdict::Fail,
        };
        rep.push(
            Check::new("reflecting_a_cost_tail", "s(a) * integral of c0 dM over [a,b) finite", verdict, lim.value())
                .at(&[model.a])
                .grid("geometric approach, ratio 1/2, 30 terms"),
        );
    }

    // Fixed-cost floor on a grid of ordered pairs.
    let (mut worst, mut wy, mut wz) = (f64::INFINITY, f64::NAN, f64::NAN);
    let pts: Vec<f64> = (-16..=16).map(|i| map.x(i as f64 * 0.5)).filter(|x| model.contains(*x)).collect();
    for (i, &y) in pts.iter().enumerate() {
        for &z in &pts[i + 1..] {
            let v = costs.c1(y, z) - costs.k1;
            if !(v >= worst) {
                worst = v;
                wy = y;
                wz = z;
            }
        }
    }
    let v = if worst >= -1e-12 * costs.k1 { Verdict::Pass } else { Verdict::Fail };
    rep.push(
        Check::new("c1_floor", "c1 >= k1 > 0", v, worst).at(&[wy, wz]).grid("pairs y < z on t in [-8, 8], step 0.5"),
    );
    Ok(rep)
}

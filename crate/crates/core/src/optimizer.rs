//! The cycle-cost ratio F0(y, z) = (c1(y, z) + g0(z) − g0(y)) / (ζ(z) − ζ(y)),
//! its minimisation over band policies, detection of the cases where no
//! minimiser exists, and the stationary law of the controlled process.
//!
//! The search runs in the coordinates (u, v) = (ζ(y), ζ(z)): ζ is the expected
//! time to drift down to a level, which turns unbounded state intervals into
//! moderate boxes and makes the ratio close to linear-fractional.

use std::collections::BTreeMap;
use std::sync::Arc;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{check_cost_conditions, CostStructure};
use crate::diffusion::{approach_sequence, BoundaryKind, DiffusionModel, Side};
use crate::error::{Error, Result};
use crate::keyfns::{KeyFunctions, KeyfnsConfig};
use crate::limits::Limit;
use crate::quadrature::{integrate, QuadratureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Cells per axis of the coarse (u, v) grid.
    pub grid: usize,
    /// Initial half-width of the search box in ζ units.
    pub initial_box: f64,
    /// Box expansions before giving up.
    pub max_restarts: usize,
    /// Successive box exits with decreasing F0 that declare boundary drift.
    pub drift_restarts: usize,
    pub max_iter: u64,
    /// Projected-gradient tolerance, relative to 1 + F0*.
    pub stationarity_tol: f64,
    /// Relative gap under which grid cells count as tied.
    pub tie_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid: 64,
            initial_box: 4.0,
            max_restarts: 8,
            drift_restarts: 3,
            max_iter: 4000,
            stationarity_tol: 1e-6,
            tie_tol: 1e-9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 4 {
            return Err(Error::Param(format!("optimizer grid must be at least 4, got {}", self.grid)));
        }
        if !(self.initial_box > 0.0 && self.initial_box.is_finite()) {
            return Err(Error::Param(format!("initial_box must be positive, got {}", self.initial_box)));
        }
        if self.drift_restarts == 0 || self.max_iter == 0 {
            return Err(Error::Param("drift_restarts and max_iter must be positive".into()));
        }
        if !(self.stationarity_tol > 0.0) || !(self.tie_tol >= 0.0) {
            return Err(Error::Param("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Minimizer,
    NoMinimizerInfimumZero,
    BoundaryDrift,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NonexistenceVerdict {
    TriggersNonexistence,
    DoesNotTrigger,
    Inconclusive,
}

/// One of the four boundary criteria for non-existence of a minimiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDiagnosis {
    /// "a" to "d".
    pub case: String,
    /// Whether the precondition (natural endpoint, and c0 = 0 there for
    /// cases c and d) holds; if not the case does not trigger.
    pub applicable: bool,
    pub verdict: NonexistenceVerdict,
    /// Extrapolated limit of the ratio along the approach sequence.
    #[serde(with = "crate::serde_real")]
    pub estimate: f64,
    pub detail: String,
    /// (y, z, ratio) along the sequence.
    pub sequence: Vec<[crate::serde_real::Real; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonexistenceDiagnosis {
    pub cases: Vec<CaseDiagnosis>,
}

impl NonexistenceDiagnosis {
    pub fn triggers(&self) -> bool {
        self.cases.iter().any(|c| c.verdict == NonexistenceVerdict::TriggersNonexistence)
    }

    pub fn case(&self, name: &str) -> Option<&CaseDiagnosis> {
        self.cases.iter().find(|c| c.case == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySolution {
    #[serde(with = "crate::serde_real")]
    pub y_star: f64,
    #[serde(with = "crate::serde_real")]
    pub z_star: f64,
    #[serde(rename = "F0_star", with = "crate::serde_real")]
    pub f0_star: f64,
    pub status: SolverStatus,
    /// Named evidence: iteration counts, gradient norms, limit estimates.
    #[serde(with = "crate::serde_real::map")]
    pub diagnostics: BTreeMap<String, f64>,
    /// Final search box [u_lo, v_hi] in ζ units.
    #[serde(with = "crate::serde_real::vec")]
    pub search_box: Vec<f64>,
    /// Other grid cells within the tie tolerance, as (y, z, F0).
    pub near_ties: Vec<[crate::serde_real::Real; 3]>,
    pub nonexistence: Option<NonexistenceDiagnosis>,
    /// Human-readable trace of the search.
    pub trace: Vec<String>,
}

impl PolicySolution {
    pub fn is_minimizer(&self) -> bool {
        self.status == SolverStatus::Minimizer
    }
}

/// F0 from cycle quantities; the one place the ratio is formed.
#[inline]
fn ratio(c1: f64, dg: f64, dz: f64) -> f64 {
    (c1 + dg) / dz
}

/// F0(y, z); +∞ on the diagonal. Endpoints are allowed and use limits.
pub fn f0(kf: &KeyFunctions, y: f64, z: f64) -> Result<f64> {
    if y == z {
        return Ok(f64::INFINITY);
    }
    let (dg, dz) = kf.cycle_stats(y, z)?;
    Ok(ratio(kf.costs().c1(y, z), dg, dz))
}

/// F0 and its gradient (∂/∂y, ∂/∂z) at an interior pair.
pub fn f0_gradient(kf: &KeyFunctions, y: f64, z: f64) -> Result<(f64, [f64; 2])> {
    let (ky, kz) = (kf.eval(y)?, kf.eval(z)?);
    let c = kf.costs();
    let dz = kz.zeta - ky.zeta;
    let f = ratio(c.c1(y, z), kz.g0 - ky.g0, dz);
    let gy = (c.dc1_dy(y, z) - ky.g0_prime() + f * ky.zeta_prime()) / dz;
    let gz = (c.dc1_dz(y, z) + kz.g0_prime() - f * kz.zeta_prime()) / dz;
    Ok((f, [gy, gz]))
}

/// Minimises F0 for a model and costs after checking the standing conditions.
pub fn minimize_f0_for(model: &DiffusionModel, costs: &CostStructure, cfg: &OptimizerConfig) -> Result<PolicySolution> {
    let m = model.check_model_conditions()?;
    if !m.passed() {
        return Err(Error::Precondition(format!("model conditions fail: {}", failed_names(&m))));
    }
    let c = check_cost_conditions(model, costs)?;
    if !c.passed() {
        return Err(Error::Precondition(format!("cost conditions fail: {}", failed_names(&c))));
    }
    let kf = KeyFunctions::new(model, costs, KeyfnsConfig::default())?;
    minimize_f0(&kf, cfg)
}

fn failed_names(r: &crate::report::Report) -> String {
    r.checks
        .iter()
        .filter(|c| c.verdict != crate::report::Verdict::Pass)
        .map(|c| c.name.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Edges of the ζ-coordinate domain.
#[derive(Debug, Clone, Copy)]
struct Domain {
    /// ζ(a) and ζ(b), possibly infinite.
    lo_lim: f64,
    hi_lim: f64,
    /// Whether y = a (z = b) is an admissible policy level.
    left_adm: bool,
    right_adm: bool,
    a: f64,
    b: f64,
}

impl Domain {
    fn new(kf: &KeyFunctions) -> Result<Self> {
        let m = kf.model();
        let ss = m.state_space()?;
        let lim = |l: Limit, inf: f64| match l {
            Limit::Finite(v) => v,
            _ => inf,
        };
        let lo_lim = lim(kf.zeta_limit(Side::Left), f64::NEG_INFINITY);
        let hi_lim = lim(kf.zeta_limit(Side::Right), f64::INFINITY);
        Ok(Self {
            lo_lim,
            hi_lim,
            left_adm: ss.includes_left && lo_lim.is_finite() && kf.g0_limit(Side::Left).is_finite(),
            right_adm: ss.includes_right && hi_lim.is_finite() && kf.g0_limit(Side::Right).is_finite(),
            a: m.a,
            b: m.b,
        })
    }

    /// The level with ζ = u, snapping to admissible endpoints.
    fn point(&self, kf: &KeyFunctions, u: f64) -> f64 {
        if u <= self.lo_lim {
            return if self.left_adm && u == self.lo_lim { self.a } else { f64::NAN };
        }
        if u >= self.hi_lim {
            return if self.right_adm && u == self.hi_lim { self.b } else { f64::NAN };
        }
        kf.zeta_inverse(u).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy)]
struct SearchBox {
    lo: f64,
    hi: f64,
}

/// Cached key values at one grid level.
#[derive(Debug, Clone, Copy)]
struct Node {
    x: f64,
    g0: f64,
    zeta: f64,
}

fn grid_nodes(kf: &KeyFunctions, dom: &Domain, lo: f64, hi: f64, n: usize) -> Vec<Node> {
    (0..=n)
        .into_par_iter()
        .map(|i| {
            let u = if i == n { hi } else { lo + (hi - lo) * i as f64 / n as f64 };
            let x = dom.point(kf, u);
            let (g0, zeta) = if x.is_nan() {
                (f64::NAN, f64::NAN)
            } else {
                (kf.g0_ext(x).unwrap_or(f64::NAN), kf.zeta_ext(x).unwrap_or(f64::NAN))
            };
            Node { x, g0, zeta }
        })
        .collect()
}

/// Policy levels whose ζ values split [lo, hi] into n equal steps (n + 1
/// levels). Admissible endpoints appear when the range reaches their ζ;
/// levels that cannot be resolved are dropped.
pub fn policy_levels(kf: &KeyFunctions, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    let dom = Domain::new(kf)?;
    let (lo, hi) = (lo.max(dom.lo_lim), hi.min(dom.hi_lim));
    Ok(grid_nodes(kf, &dom, lo, hi, n).into_iter().map(|n| n.x).filter(|x| !x.is_nan()).collect())
}

/// Grid minimum over the pairs ys[i] < zs[j]. Returns (best, ties) where each
/// entry is (y, z, F0), ties exclude the best and are capped at `max_ties`.
fn grid_minimum(
    kf: &KeyFunctions,
    ys: &[Node],
    zs: &[Node],
    tie_tol: f64,
    max_ties: usize,
) -> Option<((f64, f64, f64), Vec<(f64, f64, f64)>)> {
    let c = kf.costs();
    let rows: Vec<Vec<(f64, f64, f64)>> = ys
        .par_iter()
        .map(|ny| {
            zs.iter()
                .filter(|nz| nz.x > ny.x)
                .map(|nz| (ny.x, nz.x, ratio(c.c1(ny.x, nz.x), nz.g0 - ny.g0, nz.zeta - ny.zeta)))
                .filter(|t| t.2.is_finite())
                .collect()
        })
        .collect();
    let fmin = rows.iter().flatten().map(|t| t.2).fold(f64::INFINITY, f64::min);
    if !fmin.is_finite() {
        return None;
    }
    let tol = tie_tol * (1.0 + fmin.abs());
    let mut tied: Vec<(f64, f64, f64)> = rows.into_iter().flatten().filter(|t| t.2 <= fmin + tol).collect();
    // Tie-break: smallest z − y, then smallest y.
    tied.sort_by(|p, q| ((p.1 - p.0), p.0).partial_cmp(&((q.1 - q.0), q.0)).unwrap_or(std::cmp::Ordering::Equal));
    let best = tied[0];
    tied.remove(0);
    tied.truncate(max_ties);
    Some((best, tied))
}

/// F0 in (u, v) coordinates with the box as a soft wall.
struct UvCost<'a> {
    kf: &'a KeyFunctions,
    dom: Domain,
    bx: SearchBox,
}

const WALL: f64 = 1e30;

impl UvCost<'_> {
    fn eval(&self, u: f64, v: f64) -> f64 {
        let viol = (self.bx.lo - u).max(0.0) + (v - self.bx.hi).max(0.0) + (u - v).max(0.0);
        if viol > 0.0 || u == v {
            return WALL * (1.0 + viol);
        }
        let (y, z) = (self.dom.point(self.kf, u), self.dom.point(self.kf, v));
        match f0(self.kf, y, z) {
            Ok(f) if f.is_finite() => f,
            _ => WALL,
        }
    }
}

impl CostFunction for UvCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(p[0], p[1]))
    }
}

/// Nelder–Mead from (u, v) with initial edge `h`; returns (u, v, F, iters).
fn simplex(cost: UvCost<'_>, u: f64, v: f64, h: f64, f_start: f64, max_iter: u64) -> Result<(f64, f64, f64, u64)> {
    // Keep the start simplex feasible: move inward from the walls.
    let du = if u + h < v { h } else { -h };
    let dv = if v + h <= cost.bx.hi { h } else { -h };
    let verts = vec![vec![u, v], vec![u + du, v], vec![u, v + dv]];
    let tol = 1e-15 * (1.0 + f_start.abs());
    let solver = NelderMead::new(verts)
        .with_sd_tolerance(tol)
        .map_err(|e| Error::Numerical { what: format!("simplex setup: {e}"), achieved: f64::NAN })?;
    let res = Executor::new(cost, solver)
        .configure(|s| s.max_iters(max_iter))
        .run()
        .map_err(|e| Error::Numerical { what: format!("simplex search: {e}"), achieved: f64::NAN })?;
    let st = res.state();
    let p = st
        .best_param
        .clone()
        .ok_or_else(|| Error::Numerical { what: "simplex returned no point".into(), achieved: f64::NAN })?;
    Ok((p[0], p[1], st.best_cost, st.iter))
}

/// Newton refinement of a stationary point in (y, z). `fixed_y` keeps y at
/// an admissible endpoint. Returns (y, z, F, iterations).
fn polish(
    kf: &KeyFunctions,
    dom: &Domain,
    mut y: f64,
    mut z: f64,
    fixed_y: bool,
    fixed_z: bool,
) -> (f64, f64, f64, usize) {
    let grad = |y: f64, z: f64| -> Option<(f64, [f64; 2])> {
        if fixed_y || fixed_z {
            // One free coordinate; differentiate F0 numerically along it.
            let f = f0(kf, y, z).ok()?;
            let (gy, gz) = if fixed_y {
                let (_, g) = f0_gradient(kf, y + 1e-9 * (z - y), z).ok()?;
                (0.0, g[1])
            } else {
                let (_, g) = f0_gradient(kf, y, z - 1e-9 * (z - y)).ok()?;
                (g[0], 0.0)
            };
            return Some((f, [gy, gz]));
        }
        f0_gradient(kf, y, z).ok()
    };
    let Some((mut f, mut g)) = grad(y, z) else {
        return (y, z, f0(kf, y, z).unwrap_or(f64::NAN), 0);
    };
    let norm = |g: [f64; 2]| g[0].abs().max(g[1].abs());
    let mut it = 0;
    while it < 40 && norm(g) > 1e-14 * (1.0 + f.abs()) {
        it += 1;
        let h = 1e-5 * (z - y);
        let col = |dy: f64, dz: f64| -> Option<[f64; 2]> {
            let (_, gp) = grad(y + dy, z + dz)?;
            let (_, gm) = grad(y - dy, z - dz)?;
            Some([(gp[0] - gm[0]) / (2.0 * h), (gp[1] - gm[1]) / (2.0 * h)])
        };
        let step = if fixed_y || fixed_z {
            let Some(c) = (if fixed_y { col(0.0, h) } else { col(h, 0.0) }) else { break };
            let (d, gg) = if fixed_y { (c[1], g[1]) } else { (c[0], g[0]) };
            if !(d > 0.0) {
                break;
            }
            if fixed_y {
                [0.0, -gg / d]
            } else {
                [-gg / d, 0.0]
            }
        } else {
            let (Some(cy), Some(cz)) = (col(h, 0.0), col(0.0, h)) else { break };
            // Symmetrised Hessian [[hyy, hyz], [hyz, hzz]].
            let (hyy, hzz, hyz) = (cy[0], cz[1], 0.5 * (cy[1] + cz[0]));
            let det = hyy * hzz - hyz * hyz;
            if !(det > 0.0 && hyy > 0.0) {
                break;
            }
            [-(hzz * g[0] - hyz * g[1]) / det, -(hyy * g[1] - hyz * g[0]) / det]
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-6 {
            let (yn, zn) = (y + t * step[0], z + t * step[1]);
            let inside =
                yn < zn && (yn > dom.a || (fixed_y && yn == dom.a)) && (zn < dom.b || (fixed_z && zn == dom.b));
            if inside {
                if let Some((fnew, gnew)) = grad(yn, zn) {
                    if fnew <= f + 1e-13 * (1.0 + f.abs()) && norm(gnew) < norm(g) {
                        (y, z, f, g) = (yn, zn, fnew, gnew);
                        accepted = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (y, z, f, it)
}

/// Projected gradient ∞-norm at a candidate; at an admissible endpoint only
/// the inward-pointing descent component counts.
fn projected_gradient(kf: &KeyFunctions, y: f64, z: f64, at_a: bool, at_b: bool) -> f64 {
    let fd = |dy: f64, dz: f64, h: f64| -> f64 {
        match (f0(kf, y + dy, z + dz), f0(kf, y, z)) {
            (Ok(p), Ok(q)) => (p - q) / h,
            _ => f64::NAN,
        }
    };
    let h = 1e-7 * (z - y);
    let gy = if at_a {
        fd(h, 0.0, h).min(0.0)
    } else {
        match f0_gradient(kf, y, if at_b { z - h } else { z }) {
            Ok((_, g)) => g[0],
            Err(_) => f64::NAN,
        }
    };
    let gz = if at_b {
        (-fd(0.0, -h, h)).max(0.0)
    } else {
        match f0_gradient(kf, if at_a { y + h } else { y }, z) {
            Ok((_, g)) => g[1],
            Err(_) => f64::NAN,
        }
    };
    gy.abs().max(gz.abs())
}

/// Finds the minimising band (y*, z*), or reports why none exists.
pub fn minimize_f0(kf: &KeyFunctions, cfg: &OptimizerConfig) -> Result<PolicySolution> {
    cfg.validate()?;
    let dom = Domain::new(kf)?;
    let mut bx = SearchBox { lo: (-cfg.initial_box).max(dom.lo_lim), hi: cfg.initial_box.min(dom.hi_lim) };
    let mut diag = BTreeMap::new();
    let mut trace = Vec::new();
    let mut drift = 0usize;
    let mut prev = f64::INFINITY;
    let mut evaluations = 0usize;
    let mut nm_iters = 0u64;
    let mut last = (f64::NAN, f64::NAN, f64::NAN);
    let mut ties = Vec::new();

    for restart in 0..=cfg.max_restarts {
        let n = cfg.grid;
        let nodes = grid_nodes(kf, &dom, bx.lo, bx.hi, n);
        evaluations += nodes.len() * nodes.len() / 2;
        let Some((best, t)) = grid_minimum(kf, &nodes, &nodes, cfg.tie_tol, 10) else {
            trace.push(format!("restart {restart}: no finite F0 on the grid over [{}, {}]", bx.lo, bx.hi));
            return Ok(failed(diag, trace, bx));
        };
        ties = t;
        let h = (bx.hi - bx.lo) / n as f64;
        let u0 = kf.zeta_ext(best.0)?;
        let v0 = kf.zeta_ext(best.1)?;
        let cost = UvCost { kf, dom, bx };
        let (u, v, f, iters) = match simplex(cost, u0, v0, h, best.2, cfg.max_iter) {
            Ok(r) => r,
            Err(e) => {
                trace.push(format!("restart {restart}: {e}"));
                return Ok(failed(diag, trace, bx));
            }
        };
        nm_iters += iters;
        if !(f < WALL) {
            trace.push(format!("restart {restart}: simplex stagnated at the wall"));
            return Ok(failed(diag, trace, bx));
        }
        let edge_tol = 1e-6 * h;
        let at_lo = u - bx.lo <= edge_tol;
        let at_hi = bx.hi - v <= edge_tol;
        let lo_is_endpoint = dom.left_adm && bx.lo == dom.lo_lim;
        let hi_is_endpoint = dom.right_adm && bx.hi == dom.hi_lim;
        let exits = (at_lo && !lo_is_endpoint) || (at_hi && !hi_is_endpoint);
        trace.push(format!(
            "restart {restart}: box [{:.6}, {:.6}], grid best F0 = {:.12}, simplex F0 = {f:.12} at (u, v) = ({u:.6}, {v:.6}) after {iters} iterations{}",
            bx.lo,
            bx.hi,
            best.2,
            if exits { ", at the box edge" } else { "" }
        ));
        last = (dom.point(kf, u), dom.point(kf, v), f);
        if exits {
            if f < prev {
                drift += 1;
            } else {
                drift = 0;
            }
            prev = f;
            if drift >= cfg.drift_restarts {
                break;
            }
            let w = bx.hi - bx.lo;
            if at_lo && !lo_is_endpoint {
                bx.lo = (bx.lo - w).max(dom.lo_lim);
            }
            if at_hi && !hi_is_endpoint {
                bx.hi = (bx.hi + w).min(dom.hi_lim);
            }
            continue;
        }

        let fixed_y = at_lo && lo_is_endpoint;
        let fixed_z = at_hi && hi_is_endpoint;
        let (y0, z0) = (if fixed_y { dom.a } else { dom.point(kf, u) }, if fixed_z { dom.b } else { dom.point(kf, v) });
        let (y, z, fp, newton) = polish(kf, &dom, y0, z0, fixed_y, fixed_z);
        let fstar = f0(kf, y, z)?;
        let pg = projected_gradient(kf, y, z, fixed_y, fixed_z);
        diag.insert("grid_evaluations".into(), evaluations as f64);
        diag.insert("restarts".into(), restart as f64);
        diag.insert("simplex_iterations".into(), nm_iters as f64);
        diag.insert("newton_iterations".into(), newton as f64);
        diag.insert("projected_gradient".into(), pg);
        diag.insert("simplex_F0".into(), f);
        diag.insert("kappa".into(), 1.0 / (kf.zeta_ext(z)? - kf.zeta_ext(y)?));
        let stationary = pg <= cfg.stationarity_tol * (1.0 + fstar.abs());
        let ok = fstar.is_finite() && fstar > 0.0 && fstar <= f * (1.0 + 1e-9) + 1e-12 && stationary;
        if !ok {
            trace.push(format!(
                "polish ended at ({y}, {z}) with F0 = {fstar} (Newton value {fp}), projected gradient {pg:e}; not accepted"
            ));
            let mut s = failed(diag, trace, bx);
            (s.y_star, s.z_star, s.f0_star) = (y, z, fstar);
            return Ok(s);
        }
        return Ok(PolicySolution {
            y_star: y,
            z_star: z,
            f0_star: fstar,
            status: SolverStatus::Minimizer,
            diagnostics: diag,
            search_box: vec![bx.lo, bx.hi],
            near_ties: ties.iter().map(|t| triple(*t)).collect(),
            nonexistence: None,
            trace,
        });
    }

    // The iterates keep leaving the box toward a boundary.
    diag.insert("grid_evaluations".into(), evaluations as f64);
    diag.insert("simplex_iterations".into(), nm_iters as f64);
    diag.insert("drift_restarts".into(), drift as f64);
    diag.insert("last_y".into(), last.0);
    diag.insert("last_z".into(), last.1);
    diag.insert("last_F0".into(), last.2);
    let nx = detect_nonexistence(kf)?;
    for c in &nx.cases {
        if c.applicable {
            diag.insert(format!("liminf_estimate_{}", c.case), c.estimate);
        }
    }
    let (status, f0_star) = if nx.triggers() {
        trace.push("boundary drift; a non-existence criterion holds, the infimum of F0 is 0".into());
        (SolverStatus::NoMinimizerInfimumZero, 0.0)
    } else {
        trace.push("boundary drift without a confirmed non-existence criterion".into());
        (SolverStatus::BoundaryDrift, last.2)
    };
    Ok(PolicySolution {
        y_star: last.0,
        z_star: last.1,
        f0_star,
        status,
        diagnostics: diag,
        search_box: vec![bx.lo, bx.hi],
        near_ties: ties.iter().map(|t| triple(*t)).collect(),
        nonexistence: Some(nx),
        trace,
    })
}

fn triple(t: (f64, f64, f64)) -> [crate::serde_real::Real; 3] {
    use crate::serde_real::Real;
    [Real(t.0), Real(t.1), Real(t.2)]
}

fn failed(diag: BTreeMap<String, f64>, trace: Vec<String>, bx: SearchBox) -> PolicySolution {
    PolicySolution {
        y_star: f64::NAN,
        z_star: f64::NAN,
        f0_star: f64::NAN,
        status: SolverStatus::Failed,
        diagnostics: diag,
        search_box: vec![bx.lo, bx.hi],
        near_ties: Vec::new(),
        nonexistence: None,
        trace,
    }
}

/// Result of the brute-force grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptimum {
    pub y: f64,
    pub z: f64,
    pub f0: f64,
}

/// Exhaustive search on an n×n grid of (ζ(y), ζ(z)) over `[lo, hi]`, then a
/// second n×n grid over the ±2 cells around the first-level winner.
pub fn grid_oracle(kf: &KeyFunctions, lo: f64, hi: f64, n: usize) -> Result<GridOptimum> {
    let dom = Domain::new(kf)?;
    let (lo, hi) = (lo.max(dom.lo_lim), hi.min(dom.hi_lim));
    let nodes = grid_nodes(kf, &dom, lo, hi, n);
    let ((y, z, f), _) = grid_minimum(kf, &nodes, &nodes, 0.0, 0)
        .ok_or_else(|| Error::Numerical { what: "grid oracle found no finite F0".into(), achieved: f64::NAN })?;
    let h = (hi - lo) / n as f64;
    let (u, v) = (kf.zeta_ext(y)?, kf.zeta_ext(z)?);
    let ys = grid_nodes(kf, &dom, (u - 2.0 * h).max(lo), (u + 2.0 * h).min(hi), n);
    let zs = grid_nodes(kf, &dom, (v - 2.0 * h).max(lo), (v + 2.0 * h).min(hi), n);
    let ((y2, z2, f2), _) = grid_minimum(kf, &ys, &zs, 0.0, 0).unwrap_or(((y, z, f), Vec::new()));
    Ok(if f2 < f { GridOptimum { y: y2, z: z2, f0: f2 } } else { GridOptimum { y, z, f0: f } })
}

/// Fits r ≈ α + β/d over the last terms of a sequence whose denominators d
/// diverge, and judges whether the ratio tends to zero.
fn judge(r: &[f64], d: &[f64]) -> (NonexistenceVerdict, f64, String) {
    use NonexistenceVerdict::*;
    let pts: Vec<(f64, f64)> =
        r.iter().zip(d).filter(|(a, b)| a.is_finite() && b.is_finite() && **b != 0.0).map(|(a, b)| (*a, *b)).collect();
    if pts.len() < 10 {
        return (Inconclusive, f64::NAN, format!("only {} finite terms", pts.len()));
    }
    let tail = &pts[pts.len() - 10..];
    let mags: Vec<f64> = tail.iter().map(|p| p.0.abs()).collect();
    let scale = mags.iter().cloned().fold(0.0, f64::max);
    if mags.windows(2).all(|w| w[1] > w[0]) && mags[9] > 2.0 * mags[0] {
        let est = if tail[9].0 > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        return (DoesNotTrigger, est, format!("ratio diverges, last value {:e}", tail[9].0));
    }
    let xs: Vec<f64> = tail.iter().map(|p| 1.0 / p.1).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.0).collect();
    let n = 10.0;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let beta = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let alpha = my - beta * mx;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - alpha - beta * x).powi(2)).sum::<f64>() / n).sqrt();
    let fit_ok = rms <= 1e-3 * scale + 1e-12;
    let detail = format!("fit r = {alpha:e} + {beta:e}/d, rms {rms:e}, |r| up to {scale:e}");
    if fit_ok && alpha.abs() <= 1e-3 * scale + 1e-12 {
        (TriggersNonexistence, alpha, detail)
    } else if fit_ok && alpha.abs() > 1e-2 * scale {
        (DoesNotTrigger, alpha, detail)
    } else {
        (Inconclusive, alpha, detail)
    }
}

fn real3(a: f64, b: f64, c: f64) -> [crate::serde_real::Real; 3] {
    triple((a, b, c))
}

/// Checks the four boundary criteria under which F0 has infimum 0 and no
/// minimiser: (a) a natural with (c1(y, z) − g0(y))/ζ(y) → 0 as y → a for
/// some z; (b) b natural with (c1(y, z) + g0(z))/ζ(z) → 0 as z → b for some
/// y; (c), (d) an endpoint natural with c0 = 0 there and c1/(ζ(z) − ζ(y)) → 0
/// as both levels approach it. Limits are estimated along geometric
/// approach sequences.
pub fn detect_nonexistence(kf: &KeyFunctions) -> Result<NonexistenceDiagnosis> {
    let m = kf.model();
    let c = kf.costs();
    let mut cases = Vec::new();
    for side in [Side::Left, Side::Right] {
        let e = if side == Side::Left { m.a } else { m.b };
        let rep = m.classify_boundary(side)?;
        let natural = e.is_finite() && rep.kind == BoundaryKind::Natural;
        let name_ratio = if side == Side::Left { "a" } else { "b" };
        let name_pair = if side == Side::Left { "c" } else { "d" };
        let seq = approach_sequence(m, side, 40);
        let gate = |case: &str, why: String| CaseDiagnosis {
            case: case.into(),
            applicable: false,
            verdict: NonexistenceVerdict::DoesNotTrigger,
            estimate: f64::NAN,
            detail: why,
            sequence: Vec::new(),
        };

        // (a) / (b): one level fixed, the other approaching the endpoint.
        if !natural {
            let why = if e.is_finite() {
                format!("{side} endpoint {e} is {:?}, not natural", rep.kind)
            } else {
                format!("{side} endpoint is infinite")
            };
            cases.push(gate(name_ratio, why));
        } else {
            let map = m.coords();
            let anchors = [m.x0, map.x(-1.0), map.x(1.0)];
            let mut best: Option<CaseDiagnosis> = None;
            for &w in &anchors {
                let mut r = Vec::new();
                let mut d = Vec::new();
                let mut s = Vec::new();
                for &x in &seq {
                    let (y, z) = if side == Side::Left { (x, w) } else { (w, x) };
                    if !(y < z) {
                        continue;
                    }
                    let (num, den) = match side {
                        Side::Left => (c.c1(y, z) - kf.g0(y).unwrap_or(f64::NAN), kf.zeta(y).unwrap_or(f64::NAN)),
                        Side::Right => (c.c1(y, z) + kf.g0(z).unwrap_or(f64::NAN), kf.zeta(z).unwrap_or(f64::NAN)),
                    };
                    r.push(num / den);
                    d.push(den.abs());
                    s.push(real3(y, z, num / den));
                }
                let (verdict, estimate, detail) = judge(&r, &d);
                let cand = CaseDiagnosis {
                    case: name_ratio.into(),
                    applicable: true,
                    verdict,
                    estimate,
                    detail: format!("fixed level {w}: {detail}"),
                    sequence: s,
                };
                let rank = |v: NonexistenceVerdict| match v {
                    NonexistenceVerdict::TriggersNonexistence => 0,
                    NonexistenceVerdict::Inconclusive => 1,
                    NonexistenceVerdict::DoesNotTrigger => 2,
                };
                if best.as_ref().is_none_or(|b| rank(cand.verdict) < rank(b.verdict)) {
                    best = Some(cand);
                }
            }
            cases.push(best.expect("anchors are non-empty"));
        }

        // (c) / (d): both levels approaching the endpoint, the outer one
        // at half the depth of the inner one.
        let c0e = c.c0_limit(m, side);
        if !natural {
            cases.push(gate(name_pair, format!("{side} endpoint is not a finite natural boundary")));
        } else if c0e != 0.0 {
            cases.push(gate(name_pair, format!("c0 at the {side} endpoint is {c0e}, not 0")));
        } else {
            let mut r = Vec::new();
            let mut d = Vec::new();
            let mut s = Vec::new();
            for k in 1..seq.len() / 2 {
                let (near, far) = (seq[2 * k], seq[k]);
                let (y, z) = if side == Side::Left { (near, far) } else { (far, near) };
                let den = kf.zeta(z).unwrap_or(f64::NAN) - kf.zeta(y).unwrap_or(f64::NAN);
                let v = c.c1(y, z) / den;
                r.push(v);
                d.push(den);
                s.push(real3(y, z, v));
            }
            let (verdict, estimate, detail) = judge(&r, &d);
            cases.push(CaseDiagnosis {
                case: name_pair.into(),
                applicable: true,
                verdict,
                estimate,
                detail,
                sequence: s,
            });
        }
    }
    cases.sort_by(|p, q| p.case.cmp(&q.case));
    Ok(NonexistenceDiagnosis { cases })
}

/// Stationary law of the process under the band policy (y, z):
/// π(x) = 2κ e^{ψ(x)} (Ŝ(min(x, z)) − Ŝ(y)) / σ²(x) for x ≥ y, 0 below,
/// with order frequency κ = 1/(ζ(z) − ζ(y)).
#[derive(Debug, Clone)]
pub struct StationaryDensity {
    pub y: f64,
    pub z: f64,
    pub kappa: f64,
    kf: Arc<KeyFunctions>,
    shat_y: f64,
    shat_z: f64,
}

/// Builds the stationary density of the band policy (y, z).
pub fn stationary_density(kf: Arc<KeyFunctions>, y: f64, z: f64) -> Result<StationaryDensity> {
    let m = kf.model();
    if !(y < z) || y < m.a || z >= m.b || (y == m.a && !m.state_space()?.includes_left) {
        return Err(Error::Domain(format!("({y}, {z}) is not an admissible band")));
    }
    let (_, dz) = kf.cycle_stats(y, z)?;
    let shat_y = kf.shat_ext(y)?;
    let shat_z = kf.shat(z)?;
    Ok(StationaryDensity { y, z, kappa: 1.0 / dz, kf, shat_y, shat_z })
}

impl StationaryDensity {
    pub fn density(&self, x: f64) -> f64 {
        let m = self.kf.model();
        if x < self.y || !m.contains(x) {
            return 0.0;
        }
        let Ok(kv) = self.kf.eval(x) else { return f64::NAN };
        let s = if x <= self.z { kv.shat } else { self.shat_z };
        let sig = m.sigma.eval(x);
        2.0 * self.kappa * kv.psi.exp() * (s - self.shat_y) / (sig * sig)
    }

    fn quad_cfg(&self) -> QuadratureConfig {
        let q = self.kf.model().quad;
        QuadratureConfig { abs_tol: 1e-13, rel_tol: 1e-11, ..q }
    }

    /// ∫_lo^hi w(x) π(x) dx over [lo, hi] ∩ [y, z] by quadrature.
    fn band_integral(&self, lo: f64, hi: f64, w: &dyn Fn(f64) -> f64) -> Result<f64> {
        let (lo, hi) = (lo.max(self.y), hi.min(self.z));
        if !(hi > lo) {
            return Ok(0.0);
        }
        let (lo, hi) = (if lo == self.kf.model().a { lo + 1e-300 } else { lo }, hi);
        let r = integrate(|x| w(x) * self.density(x), lo, hi, &self.quad_cfg())?;
        if !r.converged {
            return Err(Error::Numerical { what: "stationary mass over the band".into(), achieved: r.error_estimate });
        }
        Ok(r.value)
    }

    /// ∫_x^b e^{ψ(v)} w(v)/σ²(v) dv from the key-function tails, with
    /// `which` selecting w = 1 (false) or w = 2c0 (true).
    fn tail(&self, x: f64, cost: bool) -> Result<f64> {
        if x >= self.kf.model().b {
            return Ok(0.0);
        }
        let kv = self.kf.eval(x)?;
        Ok(kv.psi.exp() * if cost { kv.rc } else { kv.r1 })
    }

    /// π-mass of [lo, hi]. Above z the mass is exact from the key-function
    /// tails; inside the band it is integrated.
    pub fn mass(&self, lo: f64, hi: f64) -> Result<f64> {
        let mut total = self.band_integral(lo, hi, &|_| 1.0)?;
        let (l, h) = (lo.max(self.z), hi.min(self.kf.model().b));
        if h > l {
            let k = 2.0 * self.kappa * (self.shat_z - self.shat_y);
            total += k * (self.tail(l, false)? - self.tail(h, false)?);
        }
        Ok(total)
    }

    /// ∫ π over the whole state space; 1 up to quadrature error.
    pub fn total_mass(&self) -> Result<f64> {
        self.mass(self.y, self.kf.model().b)
    }

    /// ∫ c0 dπ; equals (g0(z) − g0(y))/(ζ(z) − ζ(y)).
    pub fn running_cost(&self) -> Result<f64> {
        let c = self.kf.costs();
        let band = self.band_integral(self.y, self.z, &|x| c.c0(x))?;
        let k = 2.0 * self.kappa * (self.shat_z - self.shat_y);
        Ok(band + 0.5 * k * self.tail(self.z, true)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::Builtin;

    fn kf(b: Builtin) -> KeyFunctions {
        let p = b.default_problem().unwrap();
        KeyFunctions::new(&p.model, &p.costs, KeyfnsConfig::default()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn f0_examples() {
        let k = kf(Builtin::DbmClassic);
        assert!(rel(f0(&k, 0.0, 1.0).unwrap(), 3.0) < 1e-12);
        assert_eq!(f0(&k, 1.0, 1.0).unwrap(), f64::INFINITY);
        // Gradient against central differences.
        let (f, g) = f0_gradient(&k, -0.7, 1.3).unwrap();
        let h = 1e-6;
        let gy = (f0(&k, -0.7 + h, 1.3).unwrap() - f0(&k, -0.7 - h, 1.3).unwrap()) / (2.0 * h);
        let gz = (f0(&k, -0.7, 1.3 + h).unwrap() - f0(&k, -0.7, 1.3 - h).unwrap()) / (2.0 * h);
        assert!(f.is_finite());
        assert!((g[0] - gy).abs() < 1e-7 && (g[1] - gz).abs() < 1e-7, "{g:?} vs ({gy}, {gz})");
    }

    #[test]
    fn drifted_bm_minimiser_matches_grid() {
        let k = kf(Builtin::DbmClassic);
        let s = minimize_f0(&k, &OptimizerConfig::default()).unwrap();
        assert_eq!(s.status, SolverStatus::Minimizer, "{:#?}", s.trace);
        assert!(s.y_star < 0.0 && s.z_star > 0.0);
        let g = grid_oracle(&k, -8.0, 8.0, 200).unwrap();
        assert!(s.f0_star <= g.f0 * (1.0 + 1e-12));
        assert!(rel(s.f0_star, g.f0) < 1e-4, "{} vs {}", s.f0_star, g.f0);
        assert!(s.diagnostics["projected_gradient"] <= 1e-6 * (1.0 + s.f0_star));
    }

    #[test]
    fn gbm_linear_has_no_minimiser() {
        let k = kf(Builtin::GbmLinear);
        let s = minimize_f0(&k, &OptimizerConfig::default()).unwrap();
        assert_eq!(s.status, SolverStatus::NoMinimizerInfimumZero, "{:#?}", s.trace);
        let nx = s.nonexistence.unwrap();
        assert_eq!(nx.case("a").unwrap().verdict, NonexistenceVerdict::TriggersNonexistence);
        assert!(!nx.case("b").unwrap().applicable);
    }

    #[test]
    fn nonexistence_gates() {
        let nx = detect_nonexistence(&kf(Builtin::DbmClassic)).unwrap();
        assert_eq!(nx.cases.len(), 4);
        assert!(nx.cases.iter().all(|c| c.verdict == NonexistenceVerdict::DoesNotTrigger && !c.applicable));
        let nx = detect_nonexistence(&kf(Builtin::GbmPiecewise)).unwrap();
        let c = nx.case("c").unwrap();
        assert!(!c.applicable && c.sequence.is_empty(), "c0(a) = k4 > 0 gates case (c)");
        assert_eq!(nx.case("a").unwrap().verdict, NonexistenceVerdict::DoesNotTrigger);
    }

    #[test]
    fn stationary_density_examples() {
        let k = Arc::new(kf(Builtin::DbmClassic));
        let d = stationary_density(k.clone(), 0.0, 2.0).unwrap();
        assert!(rel(d.kappa, 0.5) < 1e-12);
        assert_eq!(d.density(-0.5), 0.0);
        assert!(rel(d.total_mass().unwrap(), 1.0) < 1e-8);
        let (dg, dz) = k.cycle_stats(0.0, 2.0).unwrap();
        assert!(rel(d.running_cost().unwrap(), dg / dz) < 1e-8);
    }

    #[test]
    fn solution_json_round_trips() {
        let k = kf(Builtin::GbmLinear);
        let s = minimize_f0(&k, &OptimizerConfig::default()).unwrap();
        let txt = serde_json::to_string(&s).unwrap();
        let back: PolicySolution = serde_json::from_str(&txt).unwrap();
        assert_eq!(back.status, s.status);
        assert_eq!(back.y_star.to_bits(), s.y_star.to_bits());
    }
}

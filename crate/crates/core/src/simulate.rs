//! Monte Carlo engine for band (s,S) policies: long-run averages, empirical
//! occupation and ordering measures, first-passage times and the
//! transversality diagnostic.
//!
//! Paths are independent: path `i` draws from a ChaCha8 stream selected by
//! `(seed, i)`, and per-path results are reduced in index order, so a result
//! is bit-identical for a fixed seed whatever the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::CostStructure;
use crate::diffusion::{BoundaryBehavior, DiffusionModel, ModelFamily};
use crate::error::{Error, Result};
use crate::keyfns::AuxiliaryG0;
use crate::optimizer::StationaryDensity;

/// Settings shared by every simulation routine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub time_step: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    /// Start of the averaging window; 5% of the horizon when unset.
    pub burn_in: Option<f64>,
    /// Number of interior histogram bins.
    pub bins: usize,
    /// Histogram range; defaults to [y, z + 4(z − y)] clipped to the interval.
    pub histogram_range: Option<[f64; 2]>,
    /// Detect level crossings between grid times with the Brownian bridge.
    pub bridge: bool,
    /// Number of equally spaced times on the transversality trace.
    pub trace_points: usize,
    /// Cap on the recorded (pre-order, post-order) pairs.
    pub max_ordering_samples: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            time_step: 1e-3,
            horizon: 2000.0,
            paths: 64,
            seed: 0,
            burn_in: None,
            bins: 50,
            histogram_range: None,
            bridge: true,
            trace_points: 100,
            max_ordering_samples: 10_000,
        }
    }
}

impl SimConfig {
    pub fn new(time_step: f64, horizon: f64, paths: usize, seed: u64) -> Self {
        SimConfig { time_step, horizon, paths, seed, ..Default::default() }
    }

    pub fn burn_in(&self) -> f64 {
        self.burn_in.unwrap_or(0.05 * self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Param(m));
        if !(self.time_step > 0.0) || !self.time_step.is_finite() {
            return bad(format!("time_step must be positive, got {}", self.time_step));
        }
        let b = self.burn_in();
        if !(b >= 0.0) || !(self.horizon > b) || !self.horizon.is_finite() {
            return bad(format!("need horizon > burn_in ≥ 0, got horizon {} and burn_in {b}", self.horizon));
        }
        if self.horizon / self.time_step > 1e11 {
            return bad("horizon/time_step exceeds 1e11 steps".into());
        }
        if self.paths == 0 {
            return bad("paths must be at least 1".into());
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        if let Some([lo, hi]) = self.histogram_range {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return bad(format!("histogram range [{lo}, {hi}] is empty or unbounded"));
            }
        }
        Ok(())
    }

    fn steps(&self) -> (u64, u64) {
        let n = (self.horizon / self.time_step).round().max(1.0) as u64;
        let nb = ((self.burn_in() / self.time_step).round() as u64).min(n - 1);
        (n, nb)
    }
}

/// A Monte Carlo mean with its standard error across paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(with = "crate::serde_real")]
    pub mean: f64,
    #[serde(with = "crate::serde_real")]
    pub stderr: f64,
}

impl Estimate {
    /// Mean and standard error of per-path values (NaN error for one path).
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate { mean, stderr: (var / n).sqrt() }
    }

    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// Time-fraction histogram with underflow and overflow bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
    pub underflow: f64,
    pub overflow: f64,
}

impl Histogram {
    fn empty(lo: f64, hi: f64, bins: usize) -> Self {
        let edges = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        Histogram { edges, mass: vec![0.0; bins], underflow: 0.0, overflow: 0.0 }
    }

    fn add(&mut self, x: f64, w: f64) {
        let (lo, hi) = (self.edges[0], self.edges[self.edges.len() - 1]);
        if x < lo {
            self.underflow += w;
        } else if x >= hi {
            self.overflow += w;
        } else {
            let n = self.mass.len();
            let i = (((x - lo) / (hi - lo)) * n as f64) as usize;
            self.mass[i.min(n - 1)] += w;
        }
    }

    fn scale_add(&mut self, other: &Histogram, s: f64) {
        for (m, o) in self.mass.iter_mut().zip(&other.mass) {
            *m += s * o;
        }
        self.underflow += s * other.underflow;
        self.overflow += s * other.overflow;
    }

    pub fn total_mass(&self) -> f64 {
        self.underflow + self.mass.iter().sum::<f64>() + self.overflow
    }
}

/// One sample of the transversality trace: the compensated estimate of
/// E[G(X(t))]/t and, for reference, the plain sample mean of G(X(t))/t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    #[serde(with = "crate::serde_real")]
    pub value: f64,
    #[serde(with = "crate::serde_real")]
    pub stderr: f64,
    #[serde(with = "crate::serde_real")]
    pub direct: f64,
    #[serde(with = "crate::serde_real")]
    pub direct_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub y: f64,
    pub z: f64,
    /// Long-run average of holding and ordering costs per unit time.
    pub avg_cost: Estimate,
    /// Orders per unit time.
    pub order_rate: Estimate,
    /// Holding-cost part of `avg_cost`, i.e. ∫ c0 against the occupation measure.
    pub holding_cost: Estimate,
    pub occupation: Histogram,
    /// (pre-order, post-order) levels, in path order, up to the configured cap.
    pub ordering_samples: Vec<(f64, f64)>,
    /// Local time at a per unit time; reflected models only.
    pub local_time_rate: Option<Estimate>,
    pub transversality_trace: Vec<TracePoint>,
    /// Length of the averaging window.
    pub window: f64,
    pub scheme: String,
}

#[derive(Debug, Clone, Copy)]
enum Scheme {
    /// Exact Gaussian increments for constant coefficients.
    Gaussian {
        drift: f64,
        sigma: f64,
    },
    /// Exact lognormal update for μ(x) = rate·x, σ(x) = sigma·x.
    LogNormal {
        rate: f64,
        sigma: f64,
    },
    Euler,
}

impl Scheme {
    fn name(&self) -> &'static str {
        match self {
            Scheme::Gaussian { .. } => "exact Gaussian",
            Scheme::LogNormal { .. } => "exact lognormal",
            Scheme::Euler => "Euler-Maruyama",
        }
    }
}

/// Steps the diffusion and detects crossings of the order level.
struct Stepper<'a> {
    model: &'a DiffusionModel,
    scheme: Scheme,
    level: f64,
    bridge: bool,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a DiffusionModel, level: f64, bridge: bool) -> Self {
        let scheme = match model.family {
            ModelFamily::ConstantDrift { drift, sigma } => Scheme::Gaussian { drift, sigma },
            ModelFamily::Geometric { rate, sigma } => Scheme::LogNormal { rate, sigma },
            ModelFamily::General => Scheme::Euler,
        };
        Stepper { model, scheme, level, bridge }
    }

    fn propose(&self, x: f64, h: f64, rng: &mut ChaCha8Rng) -> f64 {
        let n: f64 = rng.sample(StandardNormal);
        match self.scheme {
            Scheme::Gaussian { drift, sigma } => x + drift * h + sigma * h.sqrt() * n,
            Scheme::LogNormal { rate, sigma } => x * ((rate - 0.5 * sigma * sigma) * h + sigma * h.sqrt() * n).exp(),
            Scheme::Euler => x + self.model.mu.eval(x) * h + self.model.sigma.eval(x) * h.sqrt() * n,
        }
    }

    /// Fraction of the step at which the path reached the order level, if
    /// it did. A step ending at or below the level crosses at the linearly
    /// interpolated time; otherwise, with the bridge enabled, a crossing
    /// between two points above the level is drawn with the Brownian-bridge
    /// probability and placed uniformly in the step.
    fn crossing(&self, x: f64, xn: f64, h: f64, rng: &mut ChaCha8Rng) -> Option<f64> {
        let y = self.level;
        let (u, un, yy, s) = match self.scheme {
            Scheme::Gaussian { sigma, .. } => (x, xn, y, sigma),
            Scheme::LogNormal { sigma, .. } => (x.ln(), xn.ln(), y.ln(), sigma),
            Scheme::Euler => (x, xn, y, self.model.sigma.eval(x)),
        };
        if un <= yy {
            if !self.bridge {
                return Some(1.0);
            }
            let f = if u > un { (u - yy) / (u - un) } else { 1.0 };
            return Some(f.clamp(0.0, 1.0));
        }
        if !self.bridge || !yy.is_finite() {
            return None;
        }
        let p = (-2.0 * (u - yy) * (un - yy) / (s * s * h)).exp();
        if rng.random::<f64>() < p {
            Some(rng.random::<f64>())
        } else {
            None
        }
    }
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// G and the Ŝ control entering the transversality trace.
struct Tracer<'a> {
    g0: &'a AuxiliaryG0,
    k: f64,
}

impl Tracer<'_> {
    fn value(&self, x: f64) -> Result<f64> {
        let kv = self.g0.keyfns().eval(x)?;
        Ok(kv.g0 - self.g0.f0_star * kv.zeta + self.k * kv.shat)
    }

    /// The same at a point that may be an endpoint, by limit.
    fn value_ext(&self, x: f64) -> Result<f64> {
        let s = if self.k == 0.0 { 0.0 } else { self.k * self.g0.keyfns().shat_ext(x)? };
        Ok(self.g0.g_ext(x)? + s)
    }
}

#[derive(Default)]
struct PathStats {
    cost: f64,
    holding: f64,
    orders: f64,
    local_time: f64,
    occupation: Option<Histogram>,
    ordering: Vec<(f64, f64)>,
    /// (compensated, direct) values of G at each trace time.
    trace: Vec<(f64, f64)>,
}

fn check_policy(model: &DiffusionModel, y: f64, z: f64) -> Result<()> {
    let left_ok = y > model.a || (y == model.a && model.left_behavior != BoundaryBehavior::None);
    if !(y < z) || !left_ok || !(z < model.b) || !y.is_finite() || !z.is_finite() {
        return Err(Error::Domain(format!("({y}, {z}) is not an admissible band on ({}, {})", model.a, model.b)));
    }
    Ok(())
}

/// σ must be positive on the band; a degenerate diffusion has no
/// meaningful simulation here.
fn check_nondegenerate(model: &DiffusionModel, lo: f64, hi: f64) -> Result<()> {
    let pts = [lo, 0.5 * (lo + hi), hi, model.x0];
    for x in pts.into_iter().filter(|&x| model.contains(x)) {
        let s = model.sigma.eval(x);
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Precondition(format!("sigma must be positive, got {s} at x = {x}")));
        }
    }
    let family_sigma = match model.family {
        ModelFamily::ConstantDrift { sigma, .. } | ModelFamily::Geometric { sigma, .. } => sigma,
        ModelFamily::General => 1.0,
    };
    if !(family_sigma > 0.0) {
        return Err(Error::Precondition(format!("sigma must be positive, got {family_sigma}")));
    }
    Ok(())
}

struct Engine<'a> {
    model: &'a DiffusionModel,
    costs: &'a CostStructure,
    y: f64,
    z: f64,
    cfg: &'a SimConfig,
    range: [f64; 2],
    tracer: Option<Tracer<'a>>,
}

impl Engine<'_> {
    fn run_path(&self, path: usize) -> Result<PathStats> {
        let cfg = self.cfg;
        let m = self.model;
        let dt = cfg.time_step;
        let (n, nb) = cfg.steps();
        let trace_every = (n / cfg.trace_points.max(1) as u64).max(1);
        let stepper = Stepper::new(m, self.y, cfg.bridge);
        let reflecting = m.left_behavior == BoundaryBehavior::Reflecting;
        let mut rng = path_rng(cfg.seed, path);
        let mut st = PathStats {
            occupation: Some(Histogram::empty(self.range[0], self.range[1], cfg.bins)),
            ..Default::default()
        };
        let hist = st.occupation.as_mut().expect("histogram allocated above");

        // Quantities for the compensated trace: ∫(F0* − c0) ds, the jumps of
        // G across orders, and the Ŝ control.
        let (mut drift_int, mut jumps) = (0.0, 0.0);
        let (f0_star, g_x0) = match &self.tracer {
            Some(t) => (t.g0.f0_star, t.value(m.x0)?),
            None => (0.0, 0.0),
        };
        let jump_value = |pre: f64| -> Result<f64> {
            match &self.tracer {
                Some(t) => Ok(t.value(self.z)? - t.value_ext(pre)?),
                None => Ok(0.0),
            }
        };
        let g_jump_at_y = if self.tracer.is_some() { jump_value(self.y)? } else { 0.0 };

        let mut x = m.x0;
        if x <= self.y {
            if nb == 0 {
                st.cost += self.costs.c1(x, self.z);
                st.orders += 1.0;
            }
            jumps += jump_value(x)?;
            if st.ordering.len() < cfg.max_ordering_samples {
                st.ordering.push((x, self.z));
            }
            x = self.z;
        }
        for k in 0..n {
            let in_window = k >= nb;
            let mut h = dt;
            let mut guard = 0;
            loop {
                let xn = stepper.propose(x, h, &mut rng);
                if !xn.is_finite() || xn >= m.b {
                    return Err(Error::PathBlowup { path, time: (k as f64 + 1.0) * dt });
                }
                let c0 = self.costs.c0(x);
                match stepper.crossing(x, xn, h, &mut rng) {
                    Some(u) => {
                        let pre = if cfg.bridge { self.y } else { xn };
                        let used = u * h;
                        drift_int += (f0_star - c0) * used;
                        jumps += if cfg.bridge { g_jump_at_y } else { jump_value(pre)? };
                        if in_window {
                            st.holding += c0 * used;
                            st.cost += c0 * used + self.costs.c1(pre, self.z);
                            st.orders += 1.0;
                            hist.add(x, used);
                            if st.ordering.len() < cfg.max_ordering_samples {
                                st.ordering.push((pre, self.z));
                            }
                        }
                        x = self.z;
                        h -= used;
                        guard += 1;
                        if h <= 0.0 || guard > 1000 {
                            break;
                        }
                    }
                    None => {
                        let mut xn = xn;
                        if reflecting && xn < m.a {
                            if in_window {
                                st.local_time += m.a - xn;
                            }
                            xn = m.a + (m.a - xn);
                        }
                        drift_int += (f0_star - c0) * h;
                        if in_window {
                            st.holding += c0 * h;
                            st.cost += c0 * h;
                            hist.add(x, h);
                        }
                        x = xn;
                        break;
                    }
                }
            }
            if let Some(t) = &self.tracer {
                if (k + 1) % trace_every == 0 && st.trace.len() < cfg.trace_points {
                    st.trace.push((g_x0 + drift_int + jumps, t.value(x)?));
                }
            }
        }
        Ok(st)
    }
}

fn default_range(model: &DiffusionModel, y: f64, z: f64) -> [f64; 2] {
    let hi = z + 4.0 * (z - y);
    let hi = if hi < model.b { hi } else { z + 0.9 * (model.b - z) };
    [y, hi]
}

fn simulate(
    model: &DiffusionModel,
    costs: &CostStructure,
    y: f64,
    z: f64,
    cfg: &SimConfig,
    tracer: Option<Tracer<'_>>,
) -> Result<SimulationResult> {
    cfg.validate()?;
    check_policy(model, y, z)?;
    check_nondegenerate(model, y, z)?;
    let range = cfg.histogram_range.unwrap_or_else(|| default_range(model, y, z));
    let eng = Engine { model, costs, y, z, cfg, range, tracer };
    let stats: Vec<PathStats> = (0..cfg.paths).into_par_iter().map(|i| eng.run_path(i)).collect::<Result<_>>()?;

    let (n, nb) = cfg.steps();
    let window = (n - nb) as f64 * cfg.time_step;
    let per_path = |f: &dyn Fn(&PathStats) -> f64| -> Estimate {
        let v: Vec<f64> = stats.iter().map(f).collect();
        Estimate::from_samples(&v)
    };
    let mut occupation = Histogram::empty(range[0], range[1], cfg.bins);
    let w = 1.0 / (window * cfg.paths as f64);
    for s in &stats {
        occupation.scale_add(s.occupation.as_ref().expect("every path records a histogram"), w);
    }
    let mut ordering = Vec::new();
    for s in &stats {
        let room = cfg.max_ordering_samples - ordering.len();
        ordering.extend(s.ordering.iter().take(room));
    }
    let trace_every = (n / cfg.trace_points.max(1) as u64).max(1);
    let points = stats.first().map_or(0, |s| s.trace.len());
    let transversality_trace = (0..points)
        .map(|j| {
            let t = ((j as u64 + 1) * trace_every) as f64 * cfg.time_step;
            let c = per_path(&|s| s.trace[j].0 / t);
            let d = per_path(&|s| s.trace[j].1 / t);
            TracePoint { t, value: c.mean, stderr: c.stderr, direct: d.mean, direct_stderr: d.stderr }
        })
        .collect();
    Ok(SimulationResult {
        y,
        z,
        avg_cost: per_path(&|s| s.cost / window),
        order_rate: per_path(&|s| s.orders / window),
        holding_cost: per_path(&|s| s.holding / window),
        occupation,
        ordering_samples: ordering,
        local_time_rate: (model.left_behavior == BoundaryBehavior::Reflecting)
            .then(|| per_path(&|s| s.local_time / window)),
        transversality_trace,
        window,
        scheme: Stepper::new(model, y, cfg.bridge).scheme.name().to_string(),
    })
}

/// Simulates the band policy (y, z): order up to z whenever the inventory
/// reaches y, with reflection at a reflecting left endpoint.
pub fn simulate_policy(
    model: &DiffusionModel,
    costs: &CostStructure,
    y: f64,
    z: f64,
    cfg: &SimConfig,
) -> Result<SimulationResult> {
    simulate(model, costs, y, z, cfg, None)
}

/// Simulates the policy while tracing (1/t)E[Ĝ(X(t))] with Ĝ = G0 + K·Ŝ.
///
/// The trace value is the compensated estimator
/// (1/t)[Ĝ(x0) + ∫_0^t AĜ(X(s)) ds + Σ (Ĝ(post) − Ĝ(pre))], which has the
/// same mean as (1/t)Ĝ(X(t)) and drops the martingale part; the plain sample
/// mean is kept alongside as `direct`. With K = 0 the trace tends to 0; with
/// K ≠ 0 it tends to [`transversality_target`].
pub fn transversality_diagnostic(
    g0: &AuxiliaryG0,
    y: f64,
    z: f64,
    k: f64,
    cfg: &SimConfig,
) -> Result<SimulationResult> {
    let kf = g0.keyfns();
    if !k.is_finite() {
        return Err(Error::Param(format!("control weight K must be finite, got {k}")));
    }
    simulate(kf.model(), kf.costs(), y, z, cfg, Some(Tracer { g0, k }))
}

/// Limit of the transversality trace for the control G0 + K·Ŝ:
/// K(Ŝ(z) − Ŝ(y))/(ζ(z) − ζ(y)).
pub fn transversality_target(g0: &AuxiliaryG0, y: f64, z: f64, k: f64) -> Result<f64> {
    let kf = g0.keyfns();
    if k == 0.0 {
        return Ok(0.0);
    }
    let (_, dz) = kf.cycle_stats(y, z)?;
    Ok(k * (kf.shat(z)? - kf.shat_ext(y)?) / dz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingTime {
    #[serde(with = "crate::serde_real")]
    pub mean: f64,
    #[serde(with = "crate::serde_real")]
    pub stderr: f64,
    /// Paths still above y at the horizon; they enter the mean at the horizon.
    pub censored: usize,
}

/// Mean first-passage time from z down to y, one passage per path, each
/// path capped at the configured horizon.
pub fn estimate_hitting_time(model: &DiffusionModel, z: f64, y: f64, cfg: &SimConfig) -> Result<HittingTime> {
    cfg.validate()?;
    if !(y <= z) || !(y >= model.a) || !(z < model.b) {
        return Err(Error::Domain(format!("need a ≤ y ≤ z < b, got y = {y}, z = {z}")));
    }
    if y == z {
        return Ok(HittingTime { mean: 0.0, stderr: 0.0, censored: 0 });
    }
    check_nondegenerate(model, y, z)?;
    let stepper = Stepper::new(model, y, cfg.bridge);
    let dt = cfg.time_step;
    let (n, _) = cfg.steps();
    let times: Vec<(f64, bool)> = (0..cfg.paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(cfg.seed, path);
            let mut x = z;
            for k in 0..n {
                let xn = stepper.propose(x, dt, &mut rng);
                if !xn.is_finite() || xn >= model.b {
                    return Err(Error::PathBlowup { path, time: (k as f64 + 1.0) * dt });
                }
                if let Some(u) = stepper.crossing(x, xn, dt, &mut rng) {
                    return Ok(((k as f64 + u) * dt, false));
                }
                x = if model.left_behavior == BoundaryBehavior::Reflecting && xn < model.a {
                    2.0 * model.a - xn
                } else {
                    xn
                };
            }
            Ok((n as f64 * dt, true))
        })
        .collect::<Result<_>>()?;
    let v: Vec<f64> = times.iter().map(|t| t.0).collect();
    let e = Estimate::from_samples(&v);
    Ok(HittingTime { mean: e.mean, stderr: e.stderr, censored: times.iter().filter(|t| t.1).count() })
}

/// One histogram bin against the stationary law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinComparison {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    pub pi_mass: f64,
}

/// Distance between the empirical occupation measure and π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationComparison {
    /// Interior bins followed by the underflow and overflow bins.
    pub bins: Vec<BinComparison>,
    /// Σ |empirical − π| over all bins, including underflow and overflow.
    pub l1: f64,
    /// Empirical mass below y.
    pub mass_below_y: f64,
    /// ∫ c0 against the occupation measure.
    pub running_cost: Estimate,
    /// ∫ c0 dπ = (g0(z) − g0(y))/(ζ(z) − ζ(y)).
    pub pi_running_cost: f64,
    pub running_cost_gap: f64,
}

/// Compares a simulation with the stationary law of the same band.
pub fn compare_occupation(result: &SimulationResult, density: &StationaryDensity) -> Result<OccupationComparison> {
    if result.y != density.y || result.z != density.z {
        return Err(Error::Param(format!(
            "simulation band ({}, {}) differs from density band ({}, {})",
            result.y, result.z, density.y, density.z
        )));
    }
    let h = &result.occupation;
    let (lo, hi) = (h.edges[0], h.edges[h.edges.len() - 1]);
    let mut bins = Vec::with_capacity(h.mass.len() + 2);
    for (i, &mass) in h.mass.iter().enumerate() {
        let (l, r) = (h.edges[i], h.edges[i + 1]);
        bins.push(BinComparison { lo: l, hi: r, mass, pi_mass: density.mass(l, r)? });
    }
    bins.push(BinComparison {
        lo: f64::NEG_INFINITY,
        hi: lo,
        mass: h.underflow,
        pi_mass: density.mass(f64::NEG_INFINITY, lo)?,
    });
    bins.push(BinComparison { lo: hi, hi: f64::INFINITY, mass: h.overflow, pi_mass: density.mass(hi, f64::INFINITY)? });
    let l1 = bins.iter().map(|b| (b.mass - b.pi_mass).abs()).sum();
    let mass_below_y = if lo <= result.y {
        h.underflow
            + h.mass.iter().zip(h.edges.windows(2)).filter(|(_, e)| e[1] <= result.y).map(|(m, _)| m).sum::<f64>()
    } else {
        f64::NAN
    };
    let pi_running_cost = density.running_cost()?;
    Ok(OccupationComparison {
        bins,
        l1,
        mass_below_y,
        running_cost: result.holding_cost,
        pi_running_cost,
        running_cost_gap: (result.holding_cost.mean - pi_running_cost).abs(),
    })
}

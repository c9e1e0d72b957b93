//! Adaptive Gauss–Kronrod integration, improper endpoint handling and
//! Gauss–Legendre panel rules used by the key-function tables.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Magnitude beyond which a growing improper integral is reported as infinite.
    pub divergence_cap: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-8, max_subdivisions: 10_000, divergence_cap: 1e12 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.divergence_cap > 0.0) {
            return Err(Error::Param("quadrature tolerances and cap must be positive".into()));
        }
        if self.max_subdivisions < 16 {
            return Err(Error::Param("max_subdivisions must be at least 16".into()));
        }
        Ok(())
    }

    /// Configuration for an inner integral of a nested pair.
    pub fn inner(&self) -> Self {
        Self { abs_tol: 0.1 * self.abs_tol, rel_tol: 0.1 * self.rel_tol, ..*self }
    }

    pub fn tolerance_for(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl QuadratureResult {
    fn exact(value: f64) -> Self {
        Self { value, error_estimate: 0.0, converged: true, evaluations: 0 }
    }

    fn diverged(value: f64, evaluations: usize) -> Self {
        Self { value, error_estimate: 0.0, converged: true, evaluations }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208416958981,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn checked<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_nan() {
        Err(Error::Evaluation { location: x })
    } else {
        Ok(v)
    }
}

/// One 21-point Kronrod panel with the QUADPACK error heuristic.
fn qk21<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<Segment> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = checked(f, center)?;
    let mut resk = WGK[10] * fc;
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = checked(f, center - dx)?;
        let f2 = checked(f, center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut error = ((resk - resg) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    if !value.is_finite() {
        error = f64::INFINITY;
    }
    Ok(Segment { lo, hi, value, error })
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, cfg: &QuadratureConfig) -> Result<QuadratureResult> {
    let first = qk21(f, lo, hi)?;
    let mut evaluations = 21;
    let mut segs = vec![first];
    loop {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.error).sum();
        if total.is_infinite() {
            return Ok(QuadratureResult { value: total, error_estimate: f64::INFINITY, converged: true, evaluations });
        }
        if total.is_nan() {
            return Err(Error::Evaluation { location: 0.5 * (lo + hi) });
        }
        if err <= cfg.tolerance_for(total) {
            return Ok(QuadratureResult { value: total, error_estimate: err, converged: true, evaluations });
        }
        if segs.len() >= cfg.max_subdivisions {
            return Ok(QuadratureResult { value: total, error_estimate: err, converged: false, evaluations });
        }
        let (idx, _) =
            segs.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s.error > best.1 { (i, s.error) } else { best });
        let s = segs.swap_remove(idx);
        let mid = 0.5 * (s.lo + s.hi);
        if !(mid > s.lo && mid < s.hi) {
            // Interval exhausted at machine resolution.
            segs.push(s);
            let total: f64 = segs.iter().map(|s| s.value).sum();
            let err: f64 = segs.iter().map(|s| s.error).sum();
            return Ok(QuadratureResult { value: total, error_estimate: err, converged: false, evaluations });
        }
        segs.push(qk21(f, s.lo, mid)?);
        segs.push(qk21(f, mid, s.hi)?);
        evaluations += 42;
    }
}

/// Integrates `f` over `(lo, hi)`. Infinite endpoints are mapped to the unit
/// interval with `x = lo + t/(1-t)` (mirrored for a lower infinite limit).
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, cfg: &QuadratureConfig) -> Result<QuadratureResult> {
    integrate_dyn(&f, lo, hi, cfg)
}

fn integrate_dyn(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, cfg: &QuadratureConfig) -> Result<QuadratureResult> {
    if lo == hi {
        return Ok(QuadratureResult::exact(0.0));
    }
    if lo > hi {
        let mut r = integrate_dyn(f, hi, lo, cfg)?;
        r.value = -r.value;
        return Ok(r);
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => adaptive(&f, lo, hi, cfg),
        (true, false) => {
            let g = |t: f64| {
                let u = 1.0 - t;
                f(lo + t / u) / (u * u)
            };
            adaptive(&g, 0.0, 1.0, cfg)
        }
        (false, true) => {
            let g = |t: f64| {
                let u = 1.0 - t;
                f(hi - t / u) / (u * u)
            };
            adaptive(&g, 0.0, 1.0, cfg)
        }
        (false, false) => {
            let left = integrate_dyn(f, f64::NEG_INFINITY, 0.0, cfg)?;
            let right = integrate_dyn(f, 0.0, f64::INFINITY, cfg)?;
            Ok(QuadratureResult {
                value: left.value + right.value,
                error_estimate: left.error_estimate + right.error_estimate,
                converged: left.converged && right.converged,
                evaluations: left.evaluations + right.evaluations,
            })
        }
    }
}

/// Integrates from an interior point `from` towards an endpoint `to` of the
/// state interval, which may be infinite or a singular finite point.
///
/// The range is cut into geometric segments (doubling widths toward an infinite
/// end, halving distances toward a finite one). Divergence is declared when the
/// running sum exceeds the cap while still growing over three successive
/// segments, or when segment contributions stop decaying. The sign of the
/// returned infinity follows the direction of integration.
pub fn integrate_to_endpoint<F: Fn(f64) -> f64>(
    f: F,
    from: f64,
    to: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    integrate_to_endpoint_scaled(f, from, to, from.abs().max(1.0), cfg)
}

/// As [`integrate_to_endpoint`], with the first segment width toward an
/// infinite endpoint chosen by the caller (typically the local length scale
/// of an exponentially varying integrand).
pub fn integrate_to_endpoint_scaled<F: Fn(f64) -> f64>(
    f: F,
    from: f64,
    to: f64,
    first_width: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    if from == to {
        return Ok(QuadratureResult::exact(0.0));
    }
    let dir = if to > from { 1.0 } else { -1.0 };
    let width = first_width;
    let point = |k: i32| -> f64 {
        if to.is_finite() {
            to - (to - from) * 0.5f64.powi(k)
        } else {
            from + dir * width * (2.0f64.powi(k) - 1.0)
        }
    };
    const MAX_SEGMENTS: i32 = 400;
    let seg_cfg = QuadratureConfig { rel_tol: cfg.rel_tol * 0.1, abs_tol: cfg.abs_tol * 0.01, ..*cfg };
    let mut sum = 0.0;
    let mut err = 0.0;
    let mut evaluations = 0;
    let mut contributions: Vec<f64> = Vec::new();
    let mut small_run = 0;
    let mut all_converged = true;
    for k in 0..MAX_SEGMENTS {
        let x0 = point(k);
        let x1 = point(k + 1);
        if x0 == x1 || !x1.is_finite() {
            break;
        }
        let r = integrate(&f, x0, x1, &seg_cfg)?;
        evaluations += r.evaluations;
        if r.value.is_infinite() {
            return Ok(QuadratureResult::diverged(r.value, evaluations));
        }
        all_converged &= r.converged;
        sum += r.value;
        err += r.error_estimate;
        contributions.push(r.value);
        let n = contributions.len();
        if sum.abs() > cfg.divergence_cap && n >= 3 {
            let c = &contributions[n - 3..];
            if c.iter().all(|v| v.signum() == sum.signum()) {
                return Ok(QuadratureResult::diverged(sum.signum() * f64::INFINITY, evaluations));
            }
        }
        if r.value.abs() <= cfg.tolerance_for(sum) * 0.1 {
            small_run += 1;
            if small_run >= 3 {
                return Ok(QuadratureResult { value: sum, error_estimate: err, converged: all_converged, evaluations });
            }
        } else {
            small_run = 0;
        }
        if n >= 30 {
            let tail = &contributions[n - 10..];
            let same_sign = tail.iter().all(|v| v.signum() == sum.signum() && *v != 0.0);
            if same_sign {
                // Log-type divergence: contributions neither decay nor grow.
                // Geometric growth is left to the cap test.
                let ratio = (tail[9] / tail[0]).abs().powf(1.0 / 9.0);
                if (0.995..=1.05).contains(&ratio) {
                    return Ok(QuadratureResult::diverged(sum.signum() * f64::INFINITY, evaluations));
                }
            }
        }
    }
    // Segments exhausted: accept if the last contributions are negligible.
    let n = contributions.len();
    let last = contributions.last().copied().unwrap_or(0.0);
    let mut estimate = sum;
    let mut converged = last.abs() <= cfg.tolerance_for(sum);
    if !converged && n >= 2 {
        let r = last / contributions[n - 2];
        if r > 0.0 && r < 0.9 {
            estimate += last * r / (1.0 - r);
            converged = (last * r / (1.0 - r)).abs() <= cfg.tolerance_for(estimate) * 10.0;
        }
    }
    Ok(QuadratureResult {
        value: estimate,
        error_estimate: err + last.abs(),
        converged: converged && all_converged,
        evaluations,
    })
}

/// Integrates over a finite `[lo, hi]` split into segments whose widths
/// double away from both ends, starting at `w0`. Integrands concentrated in a
/// thin layer at either end of a long interval are resolved this way, where a
/// single Kronrod panel would see only zeros.
pub fn integrate_graded<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    w0: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    if lo == hi {
        return Ok(QuadratureResult::exact(0.0));
    }
    if lo > hi {
        let mut r = integrate_graded(f, hi, lo, w0, cfg)?;
        r.value = -r.value;
        return Ok(r);
    }
    let len = hi - lo;
    let half = 0.5 * len;
    let mut pts = vec![lo];
    let mut w = w0.max(len * 1e-15);
    let mut left = Vec::new();
    let mut right = Vec::new();
    while w < half {
        left.push(lo + w);
        right.push(hi - w);
        w *= 2.0;
    }
    pts.extend(left.iter());
    pts.push(lo + half);
    pts.extend(right.iter().rev());
    pts.push(hi);
    let seg_cfg = QuadratureConfig { abs_tol: cfg.abs_tol / pts.len() as f64, ..*cfg };
    let mut out = QuadratureResult::exact(0.0);
    for p in pts.windows(2) {
        if p[1] <= p[0] {
            continue;
        }
        let r = integrate(&f, p[0], p[1], &seg_cfg)?;
        out.value += r.value;
        out.error_estimate += r.error_estimate;
        out.evaluations += r.evaluations;
        out.converged &= r.converged;
    }
    Ok(out)
}

/// Iterated integral `∫_lo^hi w(u) I(u) du` where the inner integral is
/// supplied by the caller and run at a tenth of the outer tolerance.
pub fn integrate_nested<W, I>(
    outer_weight: W,
    inner: I,
    lo: f64,
    hi: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult>
where
    W: Fn(f64) -> f64,
    I: Fn(f64, &QuadratureConfig) -> Result<QuadratureResult>,
{
    let inner_cfg = cfg.inner();
    let failure = std::cell::Cell::new(None::<Error>);
    let inner_evals = std::cell::Cell::new(0usize);
    let g = |u: f64| -> f64 {
        let w = outer_weight(u);
        if w == 0.0 {
            return 0.0;
        }
        match inner(u, &inner_cfg) {
            Ok(r) => {
                inner_evals.set(inner_evals.get() + r.evaluations);
                if !r.converged {
                    failure.set(Some(Error::Numerical {
                        what: format!("inner integral at u = {u}"),
                        achieved: r.error_estimate,
                    }));
                }
                w * r.value
            }
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        }
    };
    let result = integrate(g, lo, hi, cfg);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let mut r = result?;
    r.evaluations += inner_evals.get();
    Ok(r)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// 16-point Gauss–Legendre rule, computed once.
pub fn gl16() -> &'static ([f64; 16], [f64; 16]) {
    static RULE: OnceLock<([f64; 16], [f64; 16])> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_legendre(16);
        let mut xa = [0.0; 16];
        let mut wa = [0.0; 16];
        xa.copy_from_slice(&x);
        wa.copy_from_slice(&w);
        (xa, wa)
    })
}

/// Nodes of the 16-point rule mapped onto [lo, hi], with matching weights.
pub fn gl16_points(lo: f64, hi: f64) -> ([f64; 16], [f64; 16]) {
    let (x, w) = gl16();
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut px = [0.0; 16];
    let mut pw = [0.0; 16];
    for i in 0..16 {
        px[i] = c + h * x[i];
        pw[i] = h * w[i];
    }
    (px, pw)
}

/// Fixed 16-point rule on [lo, hi].
pub fn gl16_integrate<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> f64 {
    let (x, w) = gl16_points(lo, hi);
    let mut s = 0.0;
    for i in 0..16 {
        s += w[i] * f(x[i]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn polynomial_and_exponential_integrals() {
        let r = integrate(|x| x, 0.0, 1.0, &cfg()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-14 && r.converged);
        let r = integrate(|v| (-2.0 * v).exp(), 0.0, f64::INFINITY, &cfg()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-10);
        let r = integrate(|v| v * (-2.0 * v).exp(), 0.0, f64::INFINITY, &cfg()).unwrap();
        assert!((r.value - 0.25).abs() < 1e-10);
    }

    #[test]
    fn gaussian_over_real_line() {
        let r = integrate(|x| (-x * x).exp(), f64::NEG_INFINITY, f64::INFINITY, &cfg()).unwrap();
        assert!((r.value - std::f64::consts::PI.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn endpoint_singularity() {
        let r = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, &cfg()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn nan_is_reported_with_location() {
        let e = integrate(|x| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, &cfg()).unwrap_err();
        assert!(matches!(e, Error::Evaluation { .. }));
    }

    #[test]
    fn endpoint_integration_detects_divergence() {
        let c = cfg();
        let r = integrate_to_endpoint(|x| 1.0 / (x * x), 1.0, f64::INFINITY, &c).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8, "{}", r.value);
        let r = integrate_to_endpoint(|x| 1.0 / x, 1.0, f64::INFINITY, &c).unwrap();
        assert_eq!(r.value, f64::INFINITY);
        let r = integrate_to_endpoint(|x| 1.0 / x, 1.0, 0.0, &c).unwrap();
        assert_eq!(r.value, f64::NEG_INFINITY);
        let r = integrate_to_endpoint(|x| (2.0 * x).exp(), 0.0, f64::NEG_INFINITY, &c).unwrap();
        assert!((r.value + 0.5).abs() < 1e-9);
        let r = integrate_to_endpoint(|x| x.exp(), 0.0, f64::INFINITY, &c).unwrap();
        assert_eq!(r.value, f64::INFINITY);
        let r = integrate_to_endpoint(|x| x.powf(-0.5), 1.0, 0.0, &c).unwrap();
        assert!((r.value + 2.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn graded_integration_resolves_boundary_layers() {
        let c = cfg();
        let lo = -1.0e6;
        let r = integrate_graded(|v| (-2.0 * (v - lo)).exp(), lo, 0.0, 0.25, &c).unwrap();
        assert!((r.value - 0.5).abs() < 1e-9, "{}", r.value);
        let r = integrate_graded(|v| (2.0 * v).exp(), lo, 0.0, 0.25, &c).unwrap();
        assert!((r.value - 0.5).abs() < 1e-9, "{}", r.value);
        let r = integrate_to_endpoint_scaled(|v| (-2.0 * (v - 1e9)).exp(), 1e9, f64::INFINITY, 0.25, &c).unwrap();
        assert!((r.value - 0.5).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn nested_integral_of_drifted_bm_scale_speed() {
        // ∫_0^2 2 M[u,∞) s(u) du with s = e^{2u}, M[u,∞) = e^{-2u}/2.
        let c = cfg();
        let r = integrate_nested(
            |u| 2.0 * (2.0 * u).exp(),
            |u, ic| integrate_to_endpoint(|v| (-2.0 * v).exp(), u, f64::INFINITY, ic),
            0.0,
            2.0,
            &c,
        )
        .unwrap();
        assert!((r.value - 2.0).abs() < 1e-7, "{}", r.value);
        let r = integrate_nested(|_| 1.0, |_, _| Ok(QuadratureResult::exact(1.0)), 1.0, 1.0, &c).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn gauss_legendre_is_exact_for_degree_31() {
        let v = gl16_integrate(|x| x.powi(30) + x.powi(31), -1.0, 1.0);
        assert!((v - 2.0 / 31.0).abs() < 1e-14);
        let (_, w) = gl16();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }
}

//! Limits of sampled sequences along geometric boundary approaches.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Limit {
    Finite(f64),
    PlusInfinity,
    MinusInfinity,
    /// No clear trend; carries the last sampled value.
    Unknown(f64),
}

impl Limit {
    /// Extended-real value (`Unknown` maps to its last sample).
    pub fn value(&self) -> f64 {
        match *self {
            Limit::Finite(v) | Limit::Unknown(v) => v,
            Limit::PlusInfinity => f64::INFINITY,
            Limit::MinusInfinity => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Limit::Finite(_))
    }

    pub fn negate(self) -> Limit {
        match self {
            Limit::Finite(v) => Limit::Finite(-v),
            Limit::Unknown(v) => Limit::Unknown(-v),
            Limit::PlusInfinity => Limit::MinusInfinity,
            Limit::MinusInfinity => Limit::PlusInfinity,
        }
    }
}

/// Estimates the limit of `vals` (ordered toward the boundary).
///
/// Converging sequences are finished with a three-point (Aitken) correction;
/// sequences whose increments keep their sign without decaying are declared
/// divergent, as are sequences that pass `cap` while growing.
pub fn extrapolate_limit(vals: &[f64], cap: f64) -> Limit {
    let n = vals.len();
    if n == 0 {
        return Limit::Unknown(f64::NAN);
    }
    let last = vals[n - 1];
    if vals.iter().any(|v| v.is_nan()) {
        return Limit::Unknown(last);
    }
    if last == f64::INFINITY {
        return Limit::PlusInfinity;
    }
    if last == f64::NEG_INFINITY {
        return Limit::MinusInfinity;
    }
    if n < 4 {
        return Limit::Unknown(last);
    }
    let d: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    let m = d.len();
    let scale = 1.0 + last.abs();
    let tail = &d[m.saturating_sub(3)..];
    if tail.iter().all(|x| x.abs() <= 1e-11 * scale) {
        return Limit::Finite(last);
    }
    if last.abs() > cap {
        let growing = tail.iter().all(|x| x.signum() == last.signum());
        if growing {
            return if last > 0.0 { Limit::PlusInfinity } else { Limit::MinusInfinity };
        }
    }
    let k = 5.min(m - 1);
    let ratios: Vec<f64> = (m - k..m).map(|i| d[i] / d[i - 1]).collect();
    if ratios.iter().all(|r| r.is_finite() && *r > 0.0 && *r < 0.95) {
        let r = ratios[k - 1];
        return Limit::Finite(last + d[m - 1] * r / (1.0 - r));
    }
    if ratios.iter().all(|r| r.is_finite() && r.abs() < 0.95) {
        // Alternating but contracting.
        let r = ratios[k - 1];
        return Limit::Finite(last + d[m - 1] * r / (1.0 - r));
    }
    let same_sign = d[m - k - 1..].iter().all(|x| x.signum() == d[m - 1].signum() && *x != 0.0);
    if same_sign && ratios.iter().all(|r| *r >= 0.95) {
        return if d[m - 1] > 0.0 { Limit::PlusInfinity } else { Limit::MinusInfinity };
    }
    Limit::Unknown(last)
}

/// Decides the limit of a cumulative integral from its values at the sample
/// knots, its value at the end of the table and the extrapolated remainder.
pub fn endpoint_limit(samples: &[f64], total: f64, beyond: f64, cap: f64) -> Limit {
    let whole = total + beyond;
    if whole.is_nan() {
        return Limit::Unknown(total);
    }
    match extrapolate_limit(samples, cap) {
        l @ (Limit::PlusInfinity | Limit::MinusInfinity) => l,
        Limit::Finite(_) if whole.abs() <= cap => Limit::Finite(whole),
        Limit::Finite(_) => Limit::Unknown(whole),
        Limit::Unknown(_) => {
            if whole.abs() > cap {
                if whole > 0.0 {
                    Limit::PlusInfinity
                } else {
                    Limit::MinusInfinity
                }
            } else if beyond.abs() <= 1e-6 * total.abs() {
                Limit::Finite(whole)
            } else {
                Limit::Unknown(whole)
            }
        }
    }
}

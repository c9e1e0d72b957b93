//! Named model/cost combinations with their default parameters.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::costs::{BuiltinCost, CostStructure};
use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    /// Drifted Brownian motion on ℝ, linear holding/back-order costs.
    DbmClassic,
    /// Drifted Brownian motion reflected at 0, concave ordering costs.
    RdbmConcave,
    /// Geometric Brownian motion, linear holding costs (no optimal policy).
    GbmLinear,
    /// Geometric Brownian motion, holding cost with a power term at 0.
    GbmNonlinear,
    /// Geometric Brownian motion, piecewise-linear holding cost.
    GbmPiecewise,
}

/// A diffusion together with its cost structure.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub model: DiffusionModel,
    pub costs: CostStructure,
}

impl Builtin {
    pub const ALL: [Builtin; 5] =
        [Builtin::DbmClassic, Builtin::RdbmConcave, Builtin::GbmLinear, Builtin::GbmNonlinear, Builtin::GbmPiecewise];

    pub fn name(&self) -> &'static str {
        match self {
            Builtin::DbmClassic => "dbm-classic",
            Builtin::RdbmConcave => "rdbm-concave",
            Builtin::GbmLinear => "gbm-linear",
            Builtin::GbmNonlinear => "gbm-nonlinear",
            Builtin::GbmPiecewise => "gbm-piecewise",
        }
    }

    /// Default parameters. Model parameters (`mu_bar` or `mu`, `sigma`, `x0`)
    /// share the map with the cost parameters.
    pub fn default_params(&self) -> BTreeMap<String, f64> {
        let kv: &[(&str, f64)] = match self {
            Builtin::DbmClassic => {
                &[("mu_bar", 1.0), ("sigma", 1.0), ("x0", 0.0), ("c_b", 1.0), ("c_h", 1.0), ("k1", 1.0), ("k2", 1.0)]
            }
            Builtin::RdbmConcave => {
                &[("mu_bar", 1.0), ("sigma", 1.0), ("x0", 1.0), ("k1", 1.0), ("k2", 2.0), ("k3", 1.0), ("k4", 1.0)]
            }
            Builtin::GbmLinear => &[("mu", 0.5), ("sigma", 1.0), ("x0", 1.0), ("k1", 1.0), ("k2", 1.0), ("k3", 1.0)],
            Builtin::GbmNonlinear => &[
                ("mu", 0.5),
                ("sigma", 1.0),
                ("x0", 1.0),
                ("k1", 1.0),
                ("k2", 1.0),
                ("k3", 1.0),
                ("k4", 1.0),
                ("beta", -1.0),
            ],
            Builtin::GbmPiecewise => {
                &[("mu", 0.5), ("sigma", 1.0), ("x0", 1.0), ("k1", 1.0), ("k2", 1.0), ("k3", 1.0), ("k4", 10.0)]
            }
        };
        kv.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    /// Builds the problem with `overrides` applied on top of the defaults.
    /// Unknown parameter names are rejected.
    pub fn problem(&self, overrides: &BTreeMap<String, f64>) -> Result<Problem> {
        let mut p = self.default_params();
        for (k, v) in overrides {
            match p.get_mut(k) {
                Some(slot) => *slot = *v,
                None => return Err(Error::Param(format!("unknown parameter '{k}' for builtin '{}'", self.name()))),
            }
        }
        let g = |k: &str| p[k];
        let (model, cost) = match self {
            Builtin::DbmClassic => (
                DiffusionModel::drifted_bm(g("mu_bar"), g("sigma"), g("x0"))?,
                BuiltinCost::DbmClassic { c_b: g("c_b"), c_h: g("c_h"), k1: g("k1"), k2: g("k2") },
            ),
            Builtin::RdbmConcave => (
                DiffusionModel::reflected_drifted_bm(g("mu_bar"), g("sigma"), g("x0"))?,
                BuiltinCost::RdbmConcave { k1: g("k1"), k2: g("k2"), k3: g("k3"), k4: g("k4") },
            ),
            Builtin::GbmLinear => (
                DiffusionModel::geometric_bm(g("mu"), g("sigma"), g("x0"))?,
                BuiltinCost::GbmLinear { k1: g("k1"), k2: g("k2"), k3: g("k3") },
            ),
            Builtin::GbmNonlinear => (
                DiffusionModel::geometric_bm(g("mu"), g("sigma"), g("x0"))?,
                BuiltinCost::GbmNonlinear { k1: g("k1"), k2: g("k2"), k3: g("k3"), k4: g("k4"), beta: g("beta") },
            ),
            Builtin::GbmPiecewise => (
                DiffusionModel::geometric_bm(g("mu"), g("sigma"), g("x0"))?,
                BuiltinCost::GbmPiecewise {
                    k1: g("k1"),
                    k2: g("k2"),
                    k3: g("k3"),
                    k4: g("k4"),
                    mu: g("mu"),
                    sigma: g("sigma"),
                },
            ),
        };
        for (k, v) in &p {
            if !v.is_finite() {
                return Err(Error::Param(format!("parameter '{k}' must be finite, got {v}")));
            }
        }
        if matches!(self, Builtin::DbmClassic | Builtin::RdbmConcave) && !(g("mu_bar") > 0.0) {
            return Err(Error::Param(format!("mu_bar must be positive, got {}", g("mu_bar"))));
        }
        if matches!(self, Builtin::GbmLinear | Builtin::GbmNonlinear | Builtin::GbmPiecewise) && !(g("mu") > 0.0) {
            return Err(Error::Param(format!("mu must be positive, got {}", g("mu"))));
        }
        Ok(Problem { name: self.name().to_string(), model, costs: cost.build()? })
    }

    pub fn default_problem(&self) -> Result<Problem> {
        self.problem(&BTreeMap::new())
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    /// Accepts the registry names and the short aliases `dbm`, `rdbm`, `gbm`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match s.as_str() {
            "dbm-classic" | "dbm" => Builtin::DbmClassic,
            "rdbm-concave" | "rdbm" => Builtin::RdbmConcave,
            "gbm-linear" => Builtin::GbmLinear,
            "gbm-nonlinear" | "gbm" => Builtin::GbmNonlinear,
            "gbm-piecewise" => Builtin::GbmPiecewise,
            _ => {
                let names: Vec<&str> = Builtin::ALL.iter().map(|b| b.name()).collect();
                return Err(Error::Param(format!("unknown builtin '{s}'; expected one of {}", names.join(", "))));
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_aliases_resolve() {
        for b in Builtin::ALL {
            assert_eq!(b.name().parse::<Builtin>().unwrap(), b);
            b.default_problem().unwrap();
        }
        assert_eq!("gbm".parse::<Builtin>().unwrap(), Builtin::GbmNonlinear);
        assert_eq!("RDBM".parse::<Builtin>().unwrap(), Builtin::RdbmConcave);
        assert!("ou".parse::<Builtin>().is_err());
    }

    #[test]
    fn overrides_are_checked() {
        let mut o = BTreeMap::new();
        o.insert("k9".to_string(), 1.0);
        assert!(Builtin::DbmClassic.problem(&o).is_err());
        o.clear();
        o.insert("k4".to_string(), 1.0);
        assert!(Builtin::GbmPiecewise.problem(&o).is_err(), "k4 below its lower bound");
        o.clear();
        o.insert("sigma".to_string(), 0.0);
        assert!(Builtin::DbmClassic.problem(&o).is_err());
    }
}

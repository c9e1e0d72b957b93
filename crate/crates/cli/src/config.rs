//! Run configuration: a TOML file naming a builtin problem or spelling out a
//! custom model and costs, plus optional solver, verifier and simulator
//! settings. Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use ssopt_core::builtin::{Builtin, Problem};
use ssopt_core::costs::CostStructure;
use ssopt_core::diffusion::{BoundaryBehavior, Coefficient, DiffusionModel};
use ssopt_core::keyfns::KeyfnsConfig;
use ssopt_core::optimizer::OptimizerConfig;
use ssopt_core::quadrature::QuadratureConfig;
use ssopt_core::simulate::SimConfig;
use ssopt_core::verify::VerifyConfig;

use crate::error::{CliError, CliResult};

/// Bundled configurations, one per builtin problem.
pub const BUNDLED: [(&str, &str); 5] = [
    ("dbm-classic", include_str!("../configs/dbm-classic.toml")),
    ("rdbm-concave", include_str!("../configs/rdbm-concave.toml")),
    ("gbm-linear", include_str!("../configs/gbm-linear.toml")),
    ("gbm-nonlinear", include_str!("../configs/gbm-nonlinear.toml")),
    ("gbm-piecewise", include_str!("../configs/gbm-piecewise.toml")),
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Parameter overrides for a builtin problem (model and cost parameters
    /// share one namespace).
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub costs: Option<CostSpec>,
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default)]
    pub keyfns: KeyfnsConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub simulation: SimConfig,
    pub policy: Option<PolicySpec>,
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Either `builtin = "<name>"` or the coefficient expressions, interval and
/// base point of a custom model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub builtin: Option<String>,
    /// Drift μ(x) as an expression in `x`.
    pub mu: Option<String>,
    /// Volatility σ(x) as an expression in `x`.
    pub sigma: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub x0: Option<f64>,
    pub left_behavior: Option<BoundaryBehavior>,
    pub scale_base: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    /// Holding/back-order cost rate, an expression in `x`.
    pub c0: String,
    /// Ordering cost, an expression in `y` (pre-order) and `z` (post-order).
    pub c1: String,
    /// Fixed part of every order, the lower bound of c1.
    pub k1: f64,
    pub c0_at_a: Option<f64>,
    pub c0_at_b: Option<f64>,
    /// Kinks of c0, handed to the quadrature as panel breaks.
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    /// Size of the endpoint neighbourhood used by the cost conditions.
    pub boundary_radius: Option<f64>,
}

/// An explicit band policy for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub y: f64,
    pub z: f64,
    /// Weight K of the Ŝ control in the transversality trace.
    #[serde(default)]
    pub k: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: String,
    pub values: Vec<f64>,
}

impl FromStr for Axis {
    type Err = CliError;

    /// `name=v1,v2,...`
    fn from_str(s: &str) -> CliResult<Self> {
        let (name, vals) =
            s.split_once('=').ok_or_else(|| CliError::Config(format!("axis '{s}' should look like name=v1,v2")))?;
        let values = vals
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<f64>().map_err(|e| CliError::Config(format!("axis '{name}': bad value '{v}': {e}"))))
            .collect::<CliResult<Vec<f64>>>()?;
        Ok(Axis { param: name.trim().to_string(), values })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Human-readable summary.
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The bundled configuration of a builtin (aliases accepted).
    pub fn bundled(name: &str) -> CliResult<Self> {
        let b: Builtin = name.parse()?;
        let text = BUNDLED.iter().find(|(n, _)| *n == b.name()).map(|(_, t)| *t).expect("every builtin is bundled");
        Self::parse(text)
    }

    /// Checks that need no model construction; the rest happens in
    /// [`RunConfig::problem`].
    pub fn validate(&self) -> CliResult<()> {
        let m = &self.model;
        let custom = m.mu.is_some() || m.sigma.is_some() || m.a.is_some() || m.b.is_some() || m.x0.is_some();
        match (&m.builtin, custom, &self.costs) {
            (Some(_), true, _) => {
                return Err(CliError::Config("[model]: give either builtin or mu/sigma/a/b/x0, not both".into()))
            }
            (Some(_), false, Some(_)) => return Err(CliError::Config("[costs] is only for custom models".into())),
            (None, _, None) => return Err(CliError::Config("a custom model needs a [costs] section".into())),
            (None, _, Some(_)) if m.mu.is_none() || m.sigma.is_none() || m.x0.is_none() => {
                return Err(CliError::Config("a custom model needs mu, sigma and x0".into()))
            }
            (None, _, Some(_)) if !self.params.is_empty() => {
                return Err(CliError::Config("[params] applies to builtin models only".into()))
            }
            _ => {}
        }
        self.optimizer.validate()?;
        self.verify.validate()?;
        self.simulation.validate()?;
        if let Some(s) = &self.sweep {
            check_axes(&s.axes)?;
        }
        Ok(())
    }

    pub fn builtin(&self) -> CliResult<Option<Builtin>> {
        Ok(match &self.model.builtin {
            Some(n) => Some(n.parse()?),
            None => None,
        })
    }

    /// Builds the model and costs, with extra parameter overrides (used by sweeps).
    pub fn problem_with(&self, extra: &BTreeMap<String, f64>) -> CliResult<Problem> {
        let mut p = match self.builtin()? {
            Some(b) => {
                let mut params = self.params.clone();
                params.extend(extra.iter().map(|(k, v)| (k.clone(), *v)));
                b.problem(&params)?
            }
            None => {
                if !extra.is_empty() {
                    return Err(CliError::Config("parameter sweeps need a builtin model".into()));
                }
                self.custom_problem()?
            }
        };
        if let Some(lb) = self.model.left_behavior {
            p.model = p.model.with_left_behavior(lb);
        }
        if let Some(q) = self.quadrature {
            p.model = p.model.with_quadrature(q);
        }
        if let Some(base) = self.model.scale_base {
            p.model = p.model.with_scale_base(base)?;
        }
        Ok(p)
    }

    pub fn problem(&self) -> CliResult<Problem> {
        self.problem_with(&BTreeMap::new())
    }

    fn custom_problem(&self) -> CliResult<Problem> {
        let m = &self.model;
        let c = self.costs.as_ref().expect("validated: custom models carry costs");
        let mu = Coefficient::from_expr(m.mu.as_deref().expect("validated"))?;
        let sigma = Coefficient::from_expr(m.sigma.as_deref().expect("validated"))?;
        let model = DiffusionModel::new(
            mu,
            sigma,
            m.a.unwrap_or(f64::NEG_INFINITY),
            m.b.unwrap_or(f64::INFINITY),
            m.x0.expect("validated"),
        )?;
        let mut costs = CostStructure::from_exprs(&c.c0, &c.c1, c.k1)?
            .with_boundary_values(c.c0_at_a, c.c0_at_b)
            .with_breakpoints(c.breakpoints.clone());
        if let Some(r) = c.boundary_radius {
            if !(r > 0.0) {
                return Err(CliError::Config(format!("boundary_radius must be positive, got {r}")));
            }
            costs.boundary_radius = r;
        }
        Ok(Problem { name: "custom".into(), model, costs })
    }
}

pub fn check_axes(axes: &[Axis]) -> CliResult<()> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(CliError::Config(format!("a sweep takes one or two axes, got {}", axes.len())));
    }
    for a in axes {
        if a.values.is_empty() {
            return Err(CliError::Config(format!("sweep axis '{}' has no values", a.param)));
        }
    }
    Ok(())
}

//! The subcommands. Each writes its summary to `out` and returns the
//! process exit code; files go to the output directory when one is set.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use ssopt_core::builtin::Problem;
use ssopt_core::diffusion::{BoundaryReport, Side};
use ssopt_core::keyfns::{build_g0, KeyFunctions};
use ssopt_core::optimizer::{f0, minimize_f0, stationary_density, PolicySolution, SolverStatus};
use ssopt_core::report::{Report, Verdict};
use ssopt_core::simulate::{
    compare_occupation, transversality_diagnostic, transversality_target, OccupationComparison, SimulationResult,
};
use ssopt_core::verify::{check_extra_condition, verify_solution};

use crate::config::{check_axes, Axis, Format, RunConfig};
use crate::error::{CliError, CliResult};

pub mod exit {
    pub const OK: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const CONDITIONS_FAIL: i32 = 2;
    pub const NO_MINIMIZER: i32 = 3;
    pub const VERIFY_FAIL: i32 = 4;
    pub const VERIFY_UNCERTAIN: i32 = 5;
}

/// Resolved settings shared by the subcommands.
pub struct Context {
    pub cfg: RunConfig,
    pub out_dir: Option<PathBuf>,
    pub format: Format,
}

impl Context {
    fn write_file(&self, name: &str, contents: &[u8]) -> CliResult<()> {
        if let Some(dir) = &self.out_dir {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }

    fn key_functions(&self, p: &Problem) -> CliResult<Arc<KeyFunctions>> {
        Ok(Arc::new(KeyFunctions::new(&p.model, &p.costs, self.cfg.keyfns)?))
    }
}

fn json<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn write_checks(out: &mut dyn Write, rep: &Report) -> CliResult<()> {
    for c in &rep.checks {
        let loc = if c.location.is_empty() { String::new() } else { format!(" at {:?}", c.location) };
        writeln!(out, "  [{:<9}] {:<34} residual {:>12.4e}{loc}", format!("{:?}", c.verdict), c.name, c.residual)?;
        if !c.note.is_empty() {
            writeln!(out, "              {}", c.note)?;
        }
    }
    Ok(())
}

fn checks_csv(rep: &Report) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "verdict", "residual", "location", "condition"])?;
    for c in &rep.checks {
        let loc: Vec<String> = c.location.iter().map(|x| x.to_string()).collect();
        w.write_record([&c.name, &format!("{:?}", c.verdict), &c.residual.to_string(), &loc.join(" "), &c.condition])?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

#[derive(Serialize)]
struct Classification<'a> {
    problem: &'a str,
    boundaries: [BoundaryReport; 2],
    model_conditions: Report,
    cost_conditions: Report,
}

pub fn classify(ctx: &Context, out: &mut dyn Write) -> CliResult<i32> {
    let p = ctx.cfg.problem()?;
    let c = Classification {
        problem: &p.name,
        boundaries: [p.model.classify_boundary(Side::Left)?, p.model.classify_boundary(Side::Right)?],
        model_conditions: p.model.check_model_conditions()?,
        cost_conditions: ssopt_core::costs::check_cost_conditions(&p.model, &p.costs)?,
    };
    ctx.write_file("classify.json", &json(&c)?)?;
    match ctx.format {
        Format::Json => out.write_all(&json(&c)?)?,
        Format::Csv => {
            let mut all = c.model_conditions.clone();
            all.extend(c.cost_conditions.clone());
            out.write_all(&checks_csv(&all)?)?
        }
        Format::Text => {
            writeln!(out, "problem: {}", c.problem)?;
            for b in &c.boundaries {
                writeln!(
                    out,
                    "{} endpoint {}: {:?}, behavior {:?}, attracting {}, attainable {}",
                    b.side, b.endpoint, b.kind, b.behavior, b.attracting, b.attainable
                )?;
            }
            writeln!(out, "model conditions:")?;
            write_checks(out, &c.model_conditions)?;
            writeln!(out, "cost conditions:")?;
            write_checks(out, &c.cost_conditions)?;
        }
    }
    Ok(if c.model_conditions.any_fail() || c.cost_conditions.any_fail() { exit::CONDITIONS_FAIL } else { exit::OK })
}

/// Condition checks, then the minimisation.
fn solve_problem(ctx: &Context, p: &Problem, kf: &KeyFunctions) -> CliResult<PolicySolution> {
    let mut rep = p.model.check_model_conditions()?;
    rep.extend(ssopt_core::costs::check_cost_conditions(&p.model, &p.costs)?);
    if rep.any_fail() {
        let failed: Vec<&str> =
            rep.checks.iter().filter(|c| c.verdict == Verdict::Fail).map(|c| c.name.as_str()).collect();
        return Err(CliError::Config(format!("model or cost conditions fail: {}", failed.join(", "))));
    }
    Ok(minimize_f0(kf, &ctx.cfg.optimizer)?)
}

fn status_code(s: SolverStatus) -> i32 {
    match s {
        SolverStatus::Minimizer => exit::OK,
        SolverStatus::NoMinimizerInfimumZero | SolverStatus::BoundaryDrift => exit::NO_MINIMIZER,
        SolverStatus::Failed => exit::ERROR,
    }
}

pub fn solve(ctx: &Context, out: &mut dyn Write) -> CliResult<i32> {
    let p = ctx.cfg.problem()?;
    let kf = ctx.key_functions(&p)?;
    let sol = solve_problem(ctx, &p, &kf)?;
    ctx.write_file("solution.json", &json(&sol)?)?;
    match ctx.format {
        Format::Json => out.write_all(&json(&sol)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["y_star", "z_star", "F0_star", "status"])?;
            w.write_record([
                &sol.y_star.to_string(),
                &sol.z_star.to_string(),
                &sol.f0_star.to_string(),
                &format!("{:?}", sol.status),
            ])?;
            out.write_all(&w.into_inner().map_err(|e| CliError::Output(e.to_string()))?)?;
        }
        Format::Text => {
            writeln!(out, "problem: {}", p.name)?;
            writeln!(out, "status: {:?}", sol.status)?;
            if sol.is_minimizer() {
                writeln!(out, "y* = {:.10}\nz* = {:.10}\nF0* = {:.12}", sol.y_star, sol.z_star, sol.f0_star)?;
            }
            if let Some(d) = &sol.nonexistence {
                for c in &d.cases {
                    if c.applicable {
                        writeln!(out, "  case {}: {:?} (estimate {:e}) {}", c.case, c.verdict, c.estimate, c.detail)?;
                    }
                }
            }
        }
    }
    Ok(status_code(sol.status))
}

fn read_solution(path: &Path) -> CliResult<PolicySolution> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn solution(ctx: &Context, p: &Problem, kf: &KeyFunctions, file: Option<&Path>) -> CliResult<PolicySolution> {
    match file {
        Some(f) => read_solution(f),
        None => solve_problem(ctx, p, kf),
    }
}

pub fn verify(ctx: &Context, solution_file: Option<&Path>, out: &mut dyn Write) -> CliResult<i32> {
    let p = ctx.cfg.problem()?;
    let kf = ctx.key_functions(&p)?;
    let sol = solution(ctx, &p, &kf, solution_file)?;
    let rep = match sol.status {
        SolverStatus::Minimizer => {
            let g0 = build_g0(kf.clone(), sol.f0_star)?;
            verify_solution(&kf, &g0, &sol, &ctx.cfg.verify)?
        }
        SolverStatus::NoMinimizerInfimumZero | SolverStatus::BoundaryDrift => {
            check_extra_condition(&kf, None, &ctx.cfg.verify)?
        }
        SolverStatus::Failed => {
            return Err(CliError::Config("the solution has status Failed; nothing to verify".into()))
        }
    };
    ctx.write_file("report.json", &json(&rep)?)?;
    match ctx.format {
        Format::Json => out.write_all(&json(&rep)?)?,
        Format::Csv => out.write_all(&checks_csv(&rep)?)?,
        Format::Text => {
            writeln!(out, "problem: {} ({:?})", p.name, sol.status)?;
            write_checks(out, &rep)?;
        }
    }
    Ok(report_code(&rep))
}

/// 4 if any check failed, else 5 if any is uncertain, else 0.
pub fn report_code(rep: &Report) -> i32 {
    if rep.any_fail() {
        exit::VERIFY_FAIL
    } else if rep.any_uncertain() {
        exit::VERIFY_UNCERTAIN
    } else {
        exit::OK
    }
}

/// Band policy and control weight to simulate.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolicyArgs {
    pub y: Option<f64>,
    pub z: Option<f64>,
    pub k: Option<f64>,
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    problem: &'a str,
    y: f64,
    z: f64,
    /// F0(y, z) from the key functions.
    f0: f64,
    /// Order frequency 1/(ζ(z) − ζ(y)).
    kappa: f64,
    k: f64,
    transversality_target: f64,
    result: &'a SimulationResult,
    occupation: &'a OccupationComparison,
}

pub fn simulate(ctx: &Context, solution_file: Option<&Path>, args: PolicyArgs, out: &mut dyn Write) -> CliResult<i32> {
    let p = ctx.cfg.problem()?;
    let kf = ctx.key_functions(&p)?;
    let from_cfg = ctx.cfg.policy;
    let (y, z) = match (args.y.or(from_cfg.map(|q| q.y)), args.z.or(from_cfg.map(|q| q.z))) {
        (Some(y), Some(z)) => (y, z),
        (None, None) => {
            let sol = solution(ctx, &p, &kf, solution_file)?;
            if !sol.is_minimizer() {
                return Err(CliError::Config(format!(
                    "no optimal policy to simulate (status {:?}); give the band with --y/--z or [policy]",
                    sol.status
                )));
            }
            (sol.y_star, sol.z_star)
        }
        _ => return Err(CliError::Config("give both y and z".into())),
    };
    let k = args.k.or(from_cfg.map(|q| q.k)).unwrap_or(0.0);
    let f0_yz = f0(&kf, y, z)?;
    let g0 = build_g0(kf.clone(), f0_yz)?;
    let res = transversality_diagnostic(&g0, y, z, k, &ctx.cfg.simulation)?;
    let density = stationary_density(kf.clone(), y, z)?;
    let cmp = compare_occupation(&res, &density)?;
    let summary = SimulationSummary {
        problem: &p.name,
        y,
        z,
        f0: f0_yz,
        kappa: density.kappa,
        k,
        transversality_target: transversality_target(&g0, y, z, k)?,
        result: &res,
        occupation: &cmp,
    };

    let hist = histogram_csv(&cmp)?;
    let trace = trace_csv(&res)?;
    ctx.write_file("simulation.json", &json(&summary)?)?;
    ctx.write_file("histogram.csv", &hist)?;
    ctx.write_file("transversality.csv", &trace)?;
    match ctx.format {
        Format::Json => out.write_all(&json(&summary)?)?,
        Format::Csv => out.write_all(&hist)?,
        Format::Text => {
            let a = res.avg_cost;
            writeln!(out, "problem: {}  policy (y, z) = ({y}, {z})  scheme: {}", p.name, res.scheme)?;
            writeln!(
                out,
                "avg cost   {:.6} ± {:.6}   F0(y, z) = {:.6}   ({:+.2} se, {:+.3}%)",
                a.mean,
                a.stderr,
                f0_yz,
                (a.mean - f0_yz) / a.stderr,
                100.0 * (a.mean / f0_yz - 1.0)
            )?;
            writeln!(
                out,
                "order rate {:.6} ± {:.6}   κ = {:.6}",
                res.order_rate.mean, res.order_rate.stderr, density.kappa
            )?;
            writeln!(
                out,
                "holding    {:.6} ± {:.6}   ∫c0 dπ = {:.6}",
                cmp.running_cost.mean, cmp.running_cost.stderr, cmp.pi_running_cost
            )?;
            writeln!(out, "occupation L1 distance to π: {:.4}", cmp.l1)?;
            if let Some(l) = res.local_time_rate {
                writeln!(out, "local time rate at a: {:.3e} ± {:.3e}", l.mean, l.stderr)?;
            }
            if let Some(t) = res.transversality_trace.last() {
                writeln!(
                    out,
                    "transversality at t = {}: {:.4e} ± {:.4e} (target {:.4e}, K = {k})",
                    t.t, t.value, t.stderr, summary.transversality_target
                )?;
            }
        }
    }
    Ok(exit::OK)
}

/// Columns: bin_lo, bin_hi, mass, pi_mass; the underflow and overflow bins
/// come last with infinite outer edges.
fn histogram_csv(cmp: &OccupationComparison) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_lo", "bin_hi", "mass", "pi_mass"])?;
    for b in &cmp.bins {
        w.write_record([b.lo.to_string(), b.hi.to_string(), b.mass.to_string(), b.pi_mass.to_string()])?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

/// Columns: t, value, stderr.
fn trace_csv(res: &SimulationResult) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "value", "stderr"])?;
    for p in &res.transversality_trace {
        w.write_record([p.t.to_string(), p.value.to_string(), p.stderr.to_string()])?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub params: BTreeMap<String, f64>,
    pub y_star: Option<f64>,
    pub z_star: Option<f64>,
    #[serde(rename = "F0_star")]
    pub f0_star: Option<f64>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Solves every point of the grid spanned by the axes (first axis
/// outermost). Failing points become rows with status `Failed`.
pub fn sweep_rows(cfg: &RunConfig, axes: &[Axis]) -> CliResult<Vec<SweepRow>> {
    check_axes(axes)?;
    if cfg.builtin()?.is_none() {
        return Err(CliError::Config("parameter sweeps need a builtin model".into()));
    }
    let mut points: Vec<Vec<f64>> = vec![vec![]];
    for a in axes {
        points =
            points.into_iter().flat_map(|p| a.values.iter().map(move |&v| [p.clone(), vec![v]].concat())).collect();
    }
    let ctx = Context { cfg: cfg.clone(), out_dir: None, format: Format::Text };
    Ok(points
        .par_iter()
        .map(|vals| {
            let params: BTreeMap<String, f64> =
                axes.iter().map(|a| a.param.clone()).zip(vals.iter().copied()).collect();
            let run = || -> CliResult<PolicySolution> {
                let p = cfg.problem_with(&params)?;
                let kf = ctx.key_functions(&p)?;
                solve_problem(&ctx, &p, &kf)
            };
            match run() {
                Ok(s) => {
                    let m = s.is_minimizer();
                    SweepRow {
                        params,
                        y_star: m.then_some(s.y_star),
                        z_star: m.then_some(s.z_star),
                        f0_star: m.then_some(s.f0_star),
                        status: format!("{:?}", s.status),
                        error: None,
                    }
                }
                Err(e) => SweepRow {
                    params,
                    y_star: None,
                    z_star: None,
                    f0_star: None,
                    status: "Failed".into(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Columns: one per swept parameter in axis order, then y_star, z_star,
/// F0_star, status. Values absent for non-minimisers are left empty.
pub fn sweep_csv(axes: &[Axis], rows: &[SweepRow]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<String> = axes.iter().map(|a| a.param.clone()).collect();
    head.extend(["y_star", "z_star", "F0_star", "status"].map(String::from));
    w.write_record(&head)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec: Vec<String> = axes.iter().map(|a| r.params[&a.param].to_string()).collect();
        rec.extend([cell(r.y_star), cell(r.z_star), cell(r.f0_star), r.status.clone()]);
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| CliError::Output(e.to_string()))
}

pub fn sweep(ctx: &Context, cli_axes: &[Axis], out: &mut dyn Write) -> CliResult<i32> {
    let axes = if cli_axes.is_empty() {
        ctx.cfg.sweep.as_ref().map(|s| s.axes.clone()).unwrap_or_default()
    } else {
        cli_axes.to_vec()
    };
    let rows = sweep_rows(&ctx.cfg, &axes)?;
    let csv = sweep_csv(&axes, &rows)?;
    ctx.write_file("sweep.csv", &csv)?;
    match ctx.format {
        Format::Json => out.write_all(&json(&rows)?)?,
        Format::Csv | Format::Text => out.write_all(&csv)?,
    }
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("sweep point {:?} failed: {}", r.params, r.error.as_deref().unwrap_or_default());
    }
    Ok(exit::OK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssopt_core::report::Check;

    #[test]
    fn verification_exit_codes() {
        let mut rep = Report::default();
        assert_eq!(report_code(&rep), exit::OK);
        rep.push(Check::new("a", "", Verdict::Pass, 0.0));
        assert_eq!(report_code(&rep), exit::OK);
        rep.push(Check::new("b", "", Verdict::Uncertain, 0.0));
        assert_eq!(report_code(&rep), exit::VERIFY_UNCERTAIN);
        rep.push(Check::new("c", "", Verdict::Fail, 0.0));
        assert_eq!(report_code(&rep), exit::VERIFY_FAIL);
    }

    #[test]
    fn sweep_grid_order() {
        let cfg = RunConfig::bundled("dbm-classic").unwrap();
        let axes: Vec<Axis> = vec!["k1=1,2".parse().unwrap(), "k2=0.5,1".parse().unwrap()];
        let rows = sweep_rows(&cfg, &axes).unwrap();
        let order: Vec<(f64, f64)> = rows.iter().map(|r| (r.params["k1"], r.params["k2"])).collect();
        assert_eq!(order, vec![(1.0, 0.5), (1.0, 1.0), (2.0, 0.5), (2.0, 1.0)]);
        let csv = String::from_utf8(sweep_csv(&axes, &rows).unwrap()).unwrap();
        assert!(csv.starts_with("k1,k2,y_star,z_star,F0_star,status\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}

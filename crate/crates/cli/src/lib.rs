//! Command-line driver: solves presets or inline problems, evaluates Riccati
//! and barrier functions, runs Monte-Carlo estimates and verification suites.
//! Artifacts are CSV tables and JSON reports.
//!
//! Exit codes: `0` success, `2` invalid configuration or input, `3` blow-up
//! the configuration did not expect, `4` verification failure.

pub mod config;
mod output;

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hjblab_core::barriers::{self, quadratic_barrier_constants, RationalBarrier, StrictSupersolutionParams};
use hjblab_core::mc::{self, McConfig, PolicyFamily, PolicySpec, SearchConfig};
use hjblab_core::presets::{Oracle, Preset};
use hjblab_core::riccati::{self, ScalarLQParams};
use hjblab_core::solver::{self, Dissipation, SolutionField};
use hjblab_core::verification::{self, growth_check};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use config::{ScenarioConfig, UsageError};
use output::{write_csv, write_json, Artifacts};

pub const OUT_DIR_ENV: &str = "HJBLAB_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "hjblab-out";

const PRESET_HELP: &str = "Preset problem: lq, lq-blowup, stoch-lq, finance, risk-sensitive, robust-limit, sign-h, const-h, sigma-form";
const SUITE_HELP: &str = "Suite: riccati, barriers, lq, blowup, hopf-lax, ordering, risk, convergence, mc, all";

#[derive(Debug, Parser)]
#[command(name = "hjblab", version, about = "Monotone solvers, barriers and Monte-Carlo checks for quadratic Bellman–Isaacs equations")]
#[command(after_help = "Presets: lq, lq-blowup, stoch-lq, finance, risk-sensitive, robust-limit, sign-h, const-h, sigma-form")]
pub struct Cli {
    /// Scenario file (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $HJBLAB_OUT_DIR or ./hjblab-out].
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Write the effective scenario (file plus flags) to this path.
    #[arg(long, global = true)]
    pub save_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// March a preset or inline problem on a grid.
    Solve(SolveArgs),
    /// Closed-form and RK4 Riccati solutions of the scalar LQ problem.
    Riccati(RiccatiArgs),
    /// Sample a barrier function.
    Barrier(BarrierArgs),
    /// Monte-Carlo cost estimate and policy search.
    Mc(McArgs),
    /// Run a named verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Default)]
pub struct ProblemArgs {
    #[arg(long, help = PRESET_HELP)]
    pub preset: Option<String>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Horizon.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Base name of the output files.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub dx: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub cfl_safety: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub p_max: Option<f64>,
    #[arg(long, value_parser = parse_dissipation)]
    pub dissipation: Option<Dissipation>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub blowup_threshold: Option<f64>,
    /// Treat blow-up as an expected outcome (exit 0 instead of 3).
    #[arg(long)]
    pub expect_blowup: bool,
}

#[derive(Debug, Args)]
pub struct RiccatiArgs {
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// RK4 step.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct BarrierArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// heat, quadratic, strict or rational.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub r_kink: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub truncation: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub t0: Option<f64>,
    /// linear-gain, constant, open-loop, gain or optimal.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub gain: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<f64>,
    #[arg(long)]
    pub cells: Option<usize>,
    /// Also audit the second-moment bound.
    #[arg(long)]
    pub moments: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, help = SUITE_HELP)]
    pub suite: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_dissipation(s: &str) -> std::result::Result<Dissipation, String> {
    match s {
        "global" => Ok(Dissipation::Global),
        "local" => Ok(Dissipation::Local),
        _ => Err(format!("expected global or local, got {s:?}")),
    }
}

/// Blow-up the configuration did not expect; maps to exit code 3.
#[derive(Debug)]
pub struct UnexpectedBlowUp(pub String);

impl std::fmt::Display for UnexpectedBlowUp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "blow-up detected: {}", self.0)
    }
}

impl std::error::Error for UnexpectedBlowUp {}

/// A verification suite reported failures; maps to exit code 4.
#[derive(Debug)]
pub struct VerificationFailed(pub Vec<String>);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for VerificationFailed {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return 4;
    }
    if err.downcast_ref::<UnexpectedBlowUp>().is_some() {
        return 3;
    }
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<hjblab_core::Error>() {
        Some(hjblab_core::Error::BlowUp { .. } | hjblab_core::Error::Estimation(_)) => 3,
        Some(_) => 2,
        None => 1,
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl ProblemArgs {
    fn apply(&self, config: &mut ScenarioConfig) {
        set_opt(&mut config.preset, self.preset.clone());
        set_opt(&mut config.params.rho, self.rho);
        set_opt(&mut config.params.horizon, self.horizon);
        set_opt(&mut config.params.epsilon, self.epsilon);
        set_opt(&mut config.output.name, self.name.clone());
    }
}

/// Merges the scenario file and the flags of the chosen subcommand.
pub fn effective_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    set_opt(&mut config.output.dir, cli.out_dir.clone());
    match &cli.command {
        Command::Solve(a) => {
            a.problem.apply(&mut config);
            set_opt(&mut config.grid.dx, a.dx);
            let s = &mut config.scheme;
            set_opt(&mut s.dt, a.dt);
            set_opt(&mut s.cfl_safety, a.cfl_safety);
            set_opt(&mut s.theta, a.theta);
            set_opt(&mut s.p_max, a.p_max);
            set_opt(&mut s.dissipation, a.dissipation);
            set_opt(&mut s.record_every, a.record_every);
            set_opt(&mut s.blowup_threshold, a.blowup_threshold);
            s.expect_blowup |= a.expect_blowup;
        }
        Command::Riccati(a) => {
            set_opt(&mut config.params.rho, a.rho);
            set_opt(&mut config.params.horizon, a.horizon);
            set_opt(&mut config.output.name, a.name.clone());
        }
        Command::Barrier(a) => {
            a.problem.apply(&mut config);
            let b = &mut config.barrier;
            set(&mut b.kind, a.kind.clone());
            set(&mut b.r_kink, a.r_kink);
            set(&mut b.horizon, a.problem.horizon);
            set(&mut b.rho, a.problem.rho);
            set(&mut b.r_max, a.r_max);
            set(&mut b.points, a.points);
            set(&mut b.k, a.k);
            set(&mut b.eta, a.eta);
        }
        Command::Mc(a) => {
            a.problem.apply(&mut config);
            let m = &mut config.mc;
            set(&mut m.n_paths, a.paths);
            set(&mut m.dt, a.dt);
            set(&mut m.seed, a.seed);
            set_opt(&mut m.truncation, a.truncation);
            set(&mut m.x0, a.x0.clone());
            set(&mut m.t0, a.t0);
            set(&mut m.family, a.family.clone());
            set(&mut m.gain, a.gain);
            set(&mut m.lo, a.lo);
            set(&mut m.hi, a.hi);
            set(&mut m.cells, a.cells);
            m.moments |= a.moments;
        }
        Command::Verify(a) => {
            set(&mut config.verify.suite, a.suite.clone());
            set(&mut config.verify.seed, a.seed);
        }
    }
    Ok(config)
}

/// What a successful run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let config = effective_config(cli)?;
    if let Some(path) = &cli.save_config {
        std::fs::write(path, config.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
    }
    let dir = config
        .output
        .dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let mut artifacts = Artifacts::new(dir)?;
    let result = match &cli.command {
        Command::Solve(_) => run_solve(&config, &mut artifacts),
        Command::Riccati(_) => run_riccati(&config, &mut artifacts),
        Command::Barrier(_) => run_barrier(&config, &mut artifacts),
        Command::Mc(_) => run_mc(&config, &mut artifacts),
        Command::Verify(_) => run_verify(&config, &mut artifacts),
    };
    let summary = result?;
    Ok(Outcome {
        files: artifacts.files,
        summary,
    })
}

#[derive(Serialize)]
struct OracleComparison {
    max_rel_err: f64,
    max_abs_err: f64,
    region: f64,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    problem: &'a str,
    scenario: &'a ScenarioConfig,
    grid: &'a solver::Grid,
    stats: &'a solver::SolveStats,
    blow_up: Option<solver::BlowUp>,
    layers: usize,
    growth_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleComparison>,
}

/// Error against the closed form on `|x|∞ ≤ ½ max|x|`, normalised by the largest exact value.
fn oracle_errors(p: &Preset, field: &SolutionField) -> Result<Option<OracleComparison>> {
    let exact: Box<dyn Fn(&DVector<f64>, f64) -> Option<f64>> = match p.oracle {
        Some(Oracle::ScalarLq(params)) => Box::new(move |x, t| riccati::lq_value(&params, x[0], t).ok()),
        Some(Oracle::StochLq(params)) => Box::new(move |x, t| params.value(x[0], t).ok()),
        Some(Oracle::HopfLax { h }) => {
            let psi = p.spec.data.clone();
            Box::new(move |x, t| verification::hopf_lax_oracle(|y| psi.eval(&DVector::from_element(1, y)), h, x[0], t).ok())
        }
        None => return Ok(None),
    };
    let region = 0.5 * field.grid.max_norm();
    let points: Vec<(usize, DVector<f64>)> = field
        .grid
        .points()
        .into_iter()
        .enumerate()
        .filter(|(_, x)| x.amax() <= region + 1e-12)
        .collect();
    let (mut err, mut scale): (f64, f64) = (0.0, 0.0);
    let hopf_lax = matches!(p.oracle, Some(Oracle::HopfLax { .. }));
    for (k, layer) in field.layers.iter().enumerate() {
        // the minimisation oracle is costly; use every fifth layer and node
        if hopf_lax && k % 5 != 0 && k + 1 != field.layers.len() {
            continue;
        }
        for (i, x) in points.iter().filter(|(i, _)| !hopf_lax || i % 5 == 0) {
            if let Some(v) = exact(x, field.times[k]) {
                err = err.max((layer[*i] - v).abs());
                scale = scale.max(v.abs());
            }
        }
    }
    Ok(Some(OracleComparison {
        max_rel_err: if scale > 0.0 { err / scale } else { err },
        max_abs_err: err,
        region,
    }))
}

fn field_rows(field: &SolutionField) -> Vec<Vec<f64>> {
    let points = field.grid.points();
    let mut rows = Vec::with_capacity(points.len() * field.layers.len());
    for (k, layer) in field.layers.iter().enumerate() {
        for (x, w) in points.iter().zip(layer) {
            let mut row = Vec::with_capacity(4);
            row.push(field.times[k]);
            row.extend(x.iter());
            row.push(*w);
            rows.push(row);
        }
    }
    rows
}

fn run_solve(config: &ScenarioConfig, out: &mut Artifacts) -> Result<String> {
    let p = config.problem()?;
    let grid = p.grid(config.grid.dx)?;
    let mut scheme = config.scheme_config(&p);
    if config.scheme.record_every.is_none() {
        let steps = scheme.resolve(&p.spec, &grid)?.steps;
        scheme.record_every = (steps / 100).max(1);
    }
    let field = solver::solve(&p.spec, &grid, &scheme)?;
    let name = config.output.name.clone().unwrap_or_else(|| p.name.clone());
    let mut header = vec!["t", "x"];
    if grid.dim() == 2 {
        header.push("y");
    }
    header.push("w");
    out.push(write_csv(&out.dir, &format!("{name}.csv"), &header, &field_rows(&field))?);
    let report = SolveReport {
        problem: &p.name,
        scenario: config,
        grid: &grid,
        stats: &field.stats,
        blow_up: field.blow_up,
        layers: field.layers.len(),
        growth_ratio: growth_check(&field, p.spec.constants.c_hat).max_ratio,
        oracle: oracle_errors(&p, &field)?,
    };
    out.push(write_json(&out.dir, &format!("{name}.json"), &report)?);
    let mut summary = format!(
        "{}: {} steps, dt = {:.3e}, max courant = {:.3}",
        p.name, field.stats.steps, field.stats.dt, field.stats.max_courant
    );
    if let Some(o) = &report.oracle {
        summary.push_str(&format!(", max rel err = {:.3e}", o.max_rel_err));
    }
    if let Some(b) = field.blow_up {
        let message = format!("{} at t = {:.6} (norm {:.3e})", p.name, b.time, b.norm);
        if !config.scheme.expect_blowup {
            bail!(UnexpectedBlowUp(message));
        }
        summary.push_str(&format!(", blow-up at t = {:.6}", b.time));
    }
    Ok(summary)
}

#[derive(Serialize)]
struct RiccatiReport {
    rho: f64,
    #[serde(rename = "T")]
    horizon: f64,
    blowup_time: Option<f64>,
    phi0_closed: Option<f64>,
    rk4_dt: f64,
    rk4_blew_up: bool,
    rk4_t_min: f64,
    rk4_phi_first: f64,
    /// `|rk4 − closed| / max(1, |closed|)` over the steps before blow-up.
    max_rel_diff: f64,
}

fn run_riccati(config: &ScenarioConfig, out: &mut Artifacts) -> Result<String> {
    let rho = config.params.rho.unwrap_or(2.0);
    let horizon = config.params.horizon.unwrap_or(1.0);
    let params = ScalarLQParams::new(rho, horizon)?;
    let dt = config.scheme.dt.unwrap_or(1e-3).min(horizon / 10.0);
    let traj = riccati::phi_rk4(&params, dt)?;
    let mut rows = Vec::with_capacity(traj.times.len());
    let mut max_rel_diff: f64 = 0.0;
    for (t, v) in traj.times.iter().zip(&traj.values) {
        let closed = riccati::phi_closed(&params, *t).unwrap_or(f64::NAN);
        if closed.is_finite() {
            max_rel_diff = max_rel_diff.max((closed - v).abs() / closed.abs().max(1.0));
        }
        rows.push(vec![*t, *v, closed]);
    }
    let name = config.output.name.clone().unwrap_or_else(|| "riccati".into());
    out.push(write_csv(&out.dir, &format!("{name}.csv"), &["t", "phi_rk4", "phi_closed"], &rows)?);
    let report = RiccatiReport {
        rho,
        horizon,
        blowup_time: riccati::blowup_time(&params),
        phi0_closed: riccati::phi_closed(&params, 0.0).ok(),
        rk4_dt: dt,
        rk4_blew_up: traj.blew_up,
        rk4_t_min: traj.t_min,
        rk4_phi_first: traj.initial_value(),
        max_rel_diff,
    };
    out.push(write_json(&out.dir, &format!("{name}.json"), &report)?);
    Ok(match report.blowup_time {
        Some(tau) => format!("rho = {rho}, T = {horizon}: blow-up at {tau:.6}"),
        None => format!("rho = {rho}, T = {horizon}: phi(0) = {:.12}", report.phi0_closed.unwrap_or(f64::NAN)),
    })
}

#[derive(Serialize)]
struct BarrierReport<T: Serialize> {
    kind: String,
    constants: T,
    samples: usize,
}

fn run_barrier(config: &ScenarioConfig, out: &mut Artifacts) -> Result<String> {
    let b = &config.barrier;
    if b.points < 2 {
        bail!(UsageError("barrier sampling needs at least 2 points".into()));
    }
    let name = config.output.name.clone().unwrap_or_else(|| format!("barrier-{}", b.kind));
    let lin = |lo: f64, hi: f64, n: usize| (0..n).map(move |k| lo + (hi - lo) * k as f64 / (n - 1) as f64);
    let times: Vec<f64> = lin(0.0, 1.0, 5).collect();
    let mut rows = Vec::new();
    let summary;
    match b.kind.as_str() {
        "heat" => {
            let params = barriers::HeatBarrierParams::new(b.r_kink, b.horizon)?;
            for t in times.iter().map(|f| f * b.horizon) {
                for r in lin(0.0, b.r_max, b.points) {
                    rows.push(vec![r, t, params.phi(r, t)?]);
                }
            }
            out.push(write_csv(&out.dir, &format!("{name}.csv"), &["r", "t", "phi"], &rows)?);
            out.push(write_json(
                &out.dir,
                &format!("{name}.json"),
                &BarrierReport {
                    kind: b.kind.clone(),
                    constants: params,
                    samples: rows.len(),
                },
            )?);
            summary = format!("heat barrier with R = {}, T = {}", b.r_kink, b.horizon);
        }
        "quadratic" | "strict" => {
            let p = config.problem()?;
            let constants = p.spec.constants;
            let xs: Vec<f64> = lin(-b.r_max, b.r_max, b.points).collect();
            if b.kind == "quadratic" {
                let (sub, sup) = quadratic_barrier_constants(&constants);
                for t in times.iter().map(|f| f * sup.tau) {
                    for &x in &xs {
                        let x = DVector::from_element(p.spec.state_dim, x);
                        rows.push(vec![x[0], t, sub.eval(&x, t), sup.eval(&x, t)]);
                    }
                }
                out.push(write_csv(&out.dir, &format!("{name}.csv"), &["x", "t", "sub", "super"], &rows)?);
                out.push(write_json(
                    &out.dir,
                    &format!("{name}.json"),
                    &BarrierReport {
                        kind: b.kind.clone(),
                        constants: (sub, sup),
                        samples: rows.len(),
                    },
                )?);
                summary = format!("quadratic barriers K = {}, rho = {:.6}, window {:.6}", sup.k, sup.rho, sup.tau);
            } else {
                let params = StrictSupersolutionParams::minimal(&constants, b.mu, b.r_kink, b.horizon, b.eta, b.margin)?;
                for t in times.iter().map(|f| f * params.time_limit()) {
                    for &x in &xs {
                        let x = DVector::from_element(p.spec.state_dim, x);
                        rows.push(vec![x[0], t, params.eval(&x, t)?]);
                    }
                }
                out.push(write_csv(&out.dir, &format!("{name}.csv"), &["x", "t", "value"], &rows)?);
                out.push(write_json(
                    &out.dir,
                    &format!("{name}.json"),
                    &BarrierReport {
                        kind: b.kind.clone(),
                        constants: params,
                        samples: rows.len(),
                    },
                )?);
                summary = format!("strict supersolution C = {:.4}, L = {:.4e}, M = {:.4}", params.c, params.l, params.m);
            }
        }
        "rational" => {
            let params = RationalBarrier::for_scalar_lq(b.rho, b.k, b.eta)?;
            let t_end = 0.9 / params.l;
            for t in times.iter().map(|f| f * t_end) {
                for x in lin(-b.r_max, b.r_max, b.points) {
                    rows.push(vec![x, t, params.eval(&DVector::from_element(1, x), t)?]);
                }
            }
            out.push(write_csv(&out.dir, &format!("{name}.csv"), &["x", "t", "value"], &rows)?);
            out.push(write_json(
                &out.dir,
                &format!("{name}.json"),
                &BarrierReport {
                    kind: b.kind.clone(),
                    constants: params,
                    samples: rows.len(),
                },
            )?);
            summary = format!("rational barrier K = {}, L = {:.4e}, R = {:.4e}", params.k, params.l, params.radius);
        }
        other => bail!(UsageError(format!(
            "unknown barrier kind {other:?}; expected heat, quadratic, strict or rational"
        ))),
    }
    Ok(summary)
}

#[derive(Serialize)]
struct McReport<'a> {
    problem: &'a str,
    scenario: &'a ScenarioConfig,
    family: &'a str,
    policy: mc::PolicySummary,
    params: Vec<f64>,
    evaluations: usize,
    estimate: mc::McEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    moments: Option<mc::MomentReport>,
}

fn optimal_policy(p: &Preset) -> Result<PolicySpec> {
    match p.oracle {
        Some(Oracle::ScalarLq(params)) => Ok(PolicySpec::LinearFeedback {
            gain: Arc::new(move |t| {
                DMatrix::from_element(1, 1, -riccati::phi_closed(&params, t).unwrap_or(f64::NAN) / params.rho)
            }),
            label: "riccati feedback".into(),
        }),
        Some(Oracle::StochLq(params)) => Ok(PolicySpec::Feedback {
            law: Arc::new(move |x, t| DVector::from_element(1, params.optimal_feedback(x[0], t).unwrap_or(f64::NAN))),
            label: "riccati feedback".into(),
        }),
        _ => bail!(UsageError(format!("preset {} has no optimal feedback", p.name))),
    }
}

fn run_mc(config: &ScenarioConfig, out: &mut Artifacts) -> Result<String> {
    let p = config.problem()?;
    let sde = p
        .sde
        .as_ref()
        .ok_or_else(|| UsageError(format!("{} has no controlled dynamics; use lq, lq-blowup, stoch-lq or finance", p.name)))?;
    let m = &config.mc;
    if m.x0.len() != sde.dynamics.state_dim {
        bail!(UsageError(format!("x0 must have {} entries", sde.dynamics.state_dim)));
    }
    let x0 = DVector::from_column_slice(&m.x0);
    let mc_config = McConfig {
        n_paths: m.n_paths,
        dt: m.dt,
        seed: m.seed,
        truncation: m.truncation,
    };
    let search = SearchConfig {
        sweeps: m.sweeps,
        golden_iterations: m.golden_iterations,
    };
    let family = match m.family.as_str() {
        "linear-gain" => Some(PolicyFamily::LinearGain { lo: m.lo, hi: m.hi }),
        "constant" => Some(PolicyFamily::Constant { lo: m.lo, hi: m.hi }),
        "open-loop" => Some(PolicyFamily::OpenLoop {
            cells: m.cells,
            lo: m.lo,
            hi: m.hi,
        }),
        "gain" | "optimal" => None,
        other => bail!(UsageError(format!(
            "unknown policy family {other:?}; expected linear-gain, constant, open-loop, gain or optimal"
        ))),
    };
    let (policy, params, evaluations, estimate) = match family {
        Some(family) => {
            let best = mc::optimize_policy(sde, &family, &x0, m.t0, &mc_config, &search)?;
            (best.policy, best.params, best.evaluations, best.estimate)
        }
        None => {
            let policy = if m.family == "gain" {
                let k = sde.dynamics.control_dim;
                let n = sde.dynamics.state_dim;
                PolicySpec::constant_gain(DMatrix::from_element(k, n, m.gain))
            } else {
                optimal_policy(&p)?
            };
            let estimate = mc::estimate_cost(sde, &policy, &x0, m.t0, &mc_config)?;
            (policy, vec![], 1, estimate)
        }
    };
    let moments = if m.moments {
        Some(mc::moment_check(sde, &policy, &x0, m.t0, &mc_config)?)
    } else {
        None
    };
    let exact_value = match p.oracle {
        Some(Oracle::ScalarLq(params)) if x0.len() == 1 => riccati::lq_value(&params, x0[0], m.t0).ok(),
        Some(Oracle::StochLq(params)) if x0.len() == 1 => params.value(x0[0], m.t0).ok(),
        _ => None,
    };
    let report = McReport {
        problem: &p.name,
        scenario: config,
        family: &m.family,
        policy: policy.summary(),
        params,
        evaluations,
        estimate,
        exact_value,
        moments,
    };
    let name = config.output.name.clone().unwrap_or_else(|| format!("mc-{}", p.name));
    out.push(write_json(&out.dir, &format!("{name}.json"), &report)?);
    if let Some(mr) = &report.moments {
        if !mr.passed {
            bail!(VerificationFailed(vec!["moment_bound".into()]));
        }
    }
    Ok(format!(
        "{}: cost {:.6} ± {:.2e} over {} paths",
        p.name, estimate.mean, estimate.stderr, estimate.n_paths
    ))
}

fn run_verify(config: &ScenarioConfig, out: &mut Artifacts) -> Result<String> {
    let report = verification::run_suite(&config.verify.suite, config.verify.seed).map_err(|e| match e {
        hjblab_core::Error::Config(m) => anyhow::Error::new(UsageError(m)),
        other => other.into(),
    })?;
    let dir = out.dir.join(format!("verify-{}", report.suite));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for check in &report.checks {
        out.push(write_json(&dir, &format!("{}.json", check.name), check)?);
    }
    out.push(write_json(&out.dir, &format!("verify-{}.json", report.suite), &report)?);
    let lines: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name))
        .collect();
    if !report.passed {
        let failed = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
        eprintln!("{}", lines.join("\n"));
        bail!(VerificationFailed(failed));
    }
    Ok(lines.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn help_lists_every_preset() {
        let help = Cli::command().render_long_help().to_string();
        for name in hjblab_core::presets::PRESET_NAMES {
            assert!(help.contains(name), "{name} missing from --help");
        }
        let mut cmd = Cli::command();
        let solve = cmd.find_subcommand_mut("solve").unwrap().render_long_help().to_string();
        assert!(solve.contains("sigma-form") && solve.contains("--T"));
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        std::fs::write(&path, "preset = \"lq\"\n[params]\nrho = 3.0\nT = 0.5\n[grid]\ndx = 0.1\n").unwrap();
        let cli = Cli::try_parse_from(["hjblab", "--config", path.to_str().unwrap(), "solve", "--rho", "2", "--dx", "0.05"]).unwrap();
        let config = effective_config(&cli).unwrap();
        assert_eq!(config.params.rho, Some(2.0));
        assert_eq!(config.params.horizon, Some(0.5));
        assert_eq!(config.grid.dx, Some(0.05));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&anyhow::Error::new(UsageError("x".into()))), 2);
        assert_eq!(exit_code(&anyhow::Error::new(UnexpectedBlowUp("x".into()))), 3);
        assert_eq!(exit_code(&anyhow::Error::new(VerificationFailed(vec![]))), 4);
        assert_eq!(exit_code(&hjblab_core::Error::Validation("x".into()).into()), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 1);
    }
}

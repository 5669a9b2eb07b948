//! Command-line harness: `solve`, `compare`, `reference`, `gen-mpc`, `norms`.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use crate::blockops::{NormReport, DEFAULT_ENUM_BUDGET};
use crate::error::{create_file, Error, Result};
use crate::formats::{load_point, load_problem, save_point, save_problem, write_log, ReferencePoint};
use crate::instances::{build_svm, gen_mpc, load_libsvm, synthetic_svm, MpcSpec};
use crate::problem::SaddleProblem;
use crate::restart::{RestartPolicy, DEFAULT_RESTART_FACTOR};
use crate::sampling::SamplingPlan;
use crate::solver::{
    drive, setup_with_norms, Method, ReportPoint, RunOptions, RunSetup, RunStatus, StepMode, Trajectory,
    DEFAULT_REFRESH_EVERY,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;

pub const DEFAULT_BUDGET: f64 = 1000.0;
pub const DEFAULT_REFERENCE_TOL: f64 = 1e-12;
pub const DEFAULT_REFERENCE_BUDGET: f64 = 1e5;

/// Where the problem comes from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    Libsvm {
        path: PathBuf,
        #[serde(default = "default_c")]
        c: f64,
    },
    SyntheticSvm {
        n: usize,
        m: usize,
        #[serde(default = "default_density")]
        density: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_c")]
        c: f64,
    },
    Mpc {
        nx: usize,
        nu: usize,
        horizon: usize,
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

fn default_c() -> f64 {
    1.0
}

fn default_density() -> f64 {
    0.1
}

impl ProblemSource {
    pub fn build(&self) -> Result<SaddleProblem> {
        match self {
            ProblemSource::Libsvm { path, c } => {
                Ok(build_svm(&load_libsvm(path)?, *c)?.with_source(path.display().to_string()))
            }
            ProblemSource::SyntheticSvm { n, m, density, seed, c } => {
                Ok(build_svm(&synthetic_svm(*n, *m, *density, *seed)?, *c)?.with_source(format!(
                    "synthetic_svm n={n} m={m} density={density} seed={seed}"
                )))
            }
            ProblemSource::Mpc { nx, nu, horizon, seed } => Ok(gen_mpc(MpcSpec {
                nx: *nx,
                nu: *nu,
                horizon: *horizon,
                seed: *seed,
            })?
            .with_source(format!("mpc nx={nx} nu={nu} horizon={horizon} seed={seed}"))),
            ProblemSource::File { path } => load_problem(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RestartKind {
    None,
    Adaptive,
    Fixed,
}

/// `[run]` table of a config file. Unset fields fall back to command-line
/// flags, then to defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub method: Option<Method>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub step_mode: Option<StepMode>,
    pub restart: Option<RestartKind>,
    pub restart_factor: Option<f64>,
    pub epoch_length: Option<u64>,
    pub seed: Option<u64>,
    pub budget: Option<f64>,
    pub max_iterations: Option<u64>,
    pub target: Option<f64>,
    pub log_every: Option<f64>,
    pub refresh_every: Option<u64>,
    pub enum_budget: Option<u64>,
    pub kkt_step: Option<f64>,
    pub reference_objective: Option<f64>,
    pub reference_point: Option<PathBuf>,
    pub smoothed_gap_mu: Option<f64>,
    pub initial_point: Option<PathBuf>,
    pub report: Option<ReportPoint>,
}

impl RunSection {
    /// Fields set in `self` win over `other`.
    fn or(self, other: RunSection) -> RunSection {
        RunSection {
            method: self.method.or(other.method),
            p: self.p.or(other.p),
            q: self.q.or(other.q),
            step_mode: self.step_mode.or(other.step_mode),
            restart: self.restart.or(other.restart),
            restart_factor: self.restart_factor.or(other.restart_factor),
            epoch_length: self.epoch_length.or(other.epoch_length),
            seed: self.seed.or(other.seed),
            budget: self.budget.or(other.budget),
            max_iterations: self.max_iterations.or(other.max_iterations),
            target: self.target.or(other.target),
            log_every: self.log_every.or(other.log_every),
            refresh_every: self.refresh_every.or(other.refresh_every),
            enum_budget: self.enum_budget.or(other.enum_budget),
            kkt_step: self.kkt_step.or(other.kkt_step),
            reference_objective: self.reference_objective.or(other.reference_objective),
            reference_point: self.reference_point.or(other.reference_point),
            smoothed_gap_mu: self.smoothed_gap_mu.or(other.smoothed_gap_mu),
            initial_point: self.initial_point.or(other.initial_point),
            report: self.report.or(other.report),
        }
    }
}

/// One experiment: a problem and how to run it.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<ProblemSource>,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub method: Method,
    pub requested_p: f64,
    pub requested_q: f64,
    pub options: RunOptions,
    pub reference: Option<ReferencePoint>,
    pub initial_point_source: String,
}

fn restart_policy(section: &RunSection) -> Result<RestartPolicy> {
    let policy = match section.restart.unwrap_or(RestartKind::None) {
        RestartKind::None => RestartPolicy::None,
        RestartKind::Adaptive => RestartPolicy::AdaptiveKkt {
            factor: section.restart_factor.unwrap_or(DEFAULT_RESTART_FACTOR),
        },
        RestartKind::Fixed => RestartPolicy::FixedK(section.epoch_length.ok_or_else(|| {
            Error::Config("fixed restart needs 'epoch_length'".into())
        })?),
    };
    policy.validate()?;
    Ok(policy)
}

pub fn resolve_run(section: &RunSection, problem: &SaddleProblem) -> Result<ResolvedRun> {
    let method = section.method.unwrap_or(Method::Dspdhg);
    let requested_p = section.p.unwrap_or(1.0);
    let requested_q = section.q.unwrap_or(1.0);
    let (p, q) = method.probabilities(requested_p, requested_q);
    let reference = section.reference_point.as_deref().map(load_point).transpose()?;
    let initial_point = match &section.initial_point {
        Some(path) => Some(load_point(path)?.point),
        None => None,
    };
    let initial_point_source = section
        .initial_point
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "zero".into());
    if let Some(z) = &initial_point {
        if z.x.len() != problem.primal_dim() || z.y.len() != problem.dual_dim() {
            return Err(Error::Config("initial point does not match problem dimensions".into()));
        }
    }
    let reference_objective = section
        .reference_objective
        .or_else(|| reference.as_ref().and_then(|r| r.objective));
    let options = RunOptions {
        p,
        q,
        step_mode: section.step_mode.unwrap_or(StepMode::Practical),
        seed: section.seed.unwrap_or(0),
        max_cost: section.budget.unwrap_or(DEFAULT_BUDGET),
        max_iterations: section.max_iterations,
        target_relkkt: section.target,
        log_every: section.log_every.unwrap_or(1.0),
        refresh_every: section.refresh_every.unwrap_or(DEFAULT_REFRESH_EVERY),
        enum_budget: section.enum_budget.unwrap_or(DEFAULT_ENUM_BUDGET),
        restart: restart_policy(section)?,
        kkt_step: section.kkt_step,
        reference_objective,
        smoothed_gap_mu: section.smoothed_gap_mu,
        gap_center: reference.as_ref().map(|r| r.point.clone()),
        initial_point,
        report: section.report.unwrap_or_default(),
    };
    if !(options.max_cost >= 0.0) || !(options.log_every > 0.0) {
        return Err(Error::Config("budget must be >= 0 and log_every > 0".into()));
    }
    Ok(ResolvedRun {
        method,
        requested_p,
        requested_q,
        options,
        reference,
        initial_point_source,
    })
}

fn policy_label(p: &RestartPolicy) -> String {
    match p {
        RestartPolicy::None => "none".into(),
        RestartPolicy::FixedK(k) => format!("fixed K={k}"),
        RestartPolicy::AdaptiveKkt { factor } => format!("adaptive factor={factor}"),
    }
}

/// Self-describing log header with every realized setting.
pub fn log_header(problem: &SaddleProblem, run: &ResolvedRun, setup: &RunSetup) -> Vec<(String, String)> {
    let a = problem.matrix();
    let o = &run.options;
    let s = &setup.steps;
    let n = &setup.norms;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_else(|| "none".into());
    let mut h = vec![
        ("problem", problem.name.clone()),
        ("source", problem.source.clone()),
        ("rows", a.rows().to_string()),
        ("cols", a.cols().to_string()),
        ("nnz", a.nnz().to_string()),
        ("primal_blocks", setup.plan.m.to_string()),
        ("dual_blocks", setup.plan.n.to_string()),
        ("method", run.method.name().to_string()),
        ("p_requested", format!("{:?}", run.requested_p)),
        ("q_requested", format!("{:?}", run.requested_q)),
        ("p", format!("{:?}", setup.plan.p())),
        ("q", format!("{:?}", setup.plan.q())),
        ("s", setup.plan.s.to_string()),
        ("r", setup.plan.r.to_string()),
        ("step_mode", format!("{:?}", s.mode).to_lowercase()),
        ("tau", format!("{:?}", s.tau)),
        ("sigma", format!("{:?}", s.sigma)),
        ("gamma1_sq", format!("{:?}", s.gamma1_sq)),
        ("gamma2_sq", format!("{:?}", s.gamma2_sq)),
        ("norm_a", format!("{:?}", n.lambda)),
        ("norm_a_converged", n.lambda_converged.to_string()),
        ("lambda_r", format!("{:?}", n.lambda_r)),
        ("lambda_r_exact", n.lambda_r_exact.to_string()),
        ("lambda_rs", format!("{:?}", n.lambda_rs)),
        ("lambda_rs_exact", n.lambda_rs_exact.to_string()),
        ("kkt_step", format!("{:?}", setup.kkt_step)),
        ("restart", policy_label(&o.restart)),
        ("seed", o.seed.to_string()),
        ("budget", format!("{:?}", o.max_cost)),
        ("max_iterations", o.max_iterations.map(|v| v.to_string()).unwrap_or_else(|| "none".into())),
        ("target", opt(o.target_relkkt)),
        ("log_every", format!("{:?}", o.log_every)),
        ("refresh_every", o.refresh_every.to_string()),
        ("enum_budget", o.enum_budget.to_string()),
        ("initial_point", run.initial_point_source.clone()),
        ("report", format!("{:?}", o.report).to_lowercase()),
        ("reference_objective", opt(o.reference_objective)),
        ("smoothed_gap_mu", opt(o.smoothed_gap_mu)),
    ];
    h.retain(|(_, v)| !v.is_empty());
    h.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Parser, Debug)]
#[command(name = "dspdhg", version, about = "Doubly stochastic PDHG solver and benchmark harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one problem and write a CSV convergence log.
    Solve(SolveArgs),
    /// Run several methods over several seeds and tabulate cost to target.
    Compare(CompareArgs),
    /// High-accuracy restarted PDHG solve; writes the reference point.
    Reference(ReferenceArgs),
    /// Generate a synthetic MPC instance as a problem file.
    GenMpc(GenMpcArgs),
    /// Print the operator constants for given sampling probabilities.
    Norms(NormsArgs),
}

#[derive(Args, Debug, Default)]
pub struct ProblemArgs {
    /// TOML run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// serialized problem file
    #[arg(long, conflicts_with = "libsvm")]
    pub problem: Option<PathBuf>,
    /// LIBSVM dataset (built as soft-margin SVM)
    #[arg(long)]
    pub libsvm: Option<PathBuf>,
    /// SVM penalty for --libsvm
    #[arg(long = "svm-c", default_value_t = 1.0)]
    pub svm_c: f64,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, value_parser = parse_step_mode)]
    pub step_mode: Option<StepMode>,
    #[arg(long, value_enum)]
    pub restart: Option<RestartKind>,
    #[arg(long)]
    pub restart_factor: Option<f64>,
    #[arg(long)]
    pub epoch_length: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// budget in cost units
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<u64>,
    /// stop once relKKT falls to this value
    #[arg(long)]
    pub target: Option<f64>,
    /// cost units between log rows
    #[arg(long)]
    pub log_every: Option<f64>,
    #[arg(long)]
    pub refresh_every: Option<u64>,
    #[arg(long)]
    pub enum_budget: Option<u64>,
    #[arg(long)]
    pub kkt_step: Option<f64>,
    #[arg(long)]
    pub reference_objective: Option<f64>,
    /// point file from `reference`; supplies the objective and the gap center
    #[arg(long)]
    pub reference_point: Option<PathBuf>,
    /// log the smoothed gap with this mu
    #[arg(long)]
    pub smoothed_gap_mu: Option<f64>,
    #[arg(long)]
    pub initial_point: Option<PathBuf>,
    /// point evaluated in log rows: average (method output) or iterate
    #[arg(long, value_parser = parse_report)]
    pub report: Option<ReportPoint>,
}

impl RunArgs {
    fn section(&self) -> RunSection {
        RunSection {
            method: self.method,
            p: self.p,
            q: self.q,
            step_mode: self.step_mode,
            restart: self.restart,
            restart_factor: self.restart_factor,
            epoch_length: self.epoch_length,
            seed: self.seed,
            budget: self.budget,
            max_iterations: self.max_iterations,
            target: self.target,
            log_every: self.log_every,
            refresh_every: self.refresh_every,
            enum_budget: self.enum_budget,
            kkt_step: self.kkt_step,
            reference_objective: self.reference_objective,
            reference_point: self.reference_point.clone(),
            smoothed_gap_mu: self.smoothed_gap_mu,
            initial_point: self.initial_point.clone(),
            report: self.report,
        }
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_report(s: &str) -> std::result::Result<ReportPoint, String> {
    match s {
        "average" => Ok(ReportPoint::Average),
        "iterate" => Ok(ReportPoint::Iterate),
        other => Err(format!("unknown report point '{other}'")),
    }
}

fn parse_step_mode(s: &str) -> std::result::Result<StepMode, String> {
    match s {
        "practical" => Ok(StepMode::Practical),
        "certified" => Ok(StepMode::Certified),
        other => Err(format!("unknown step mode '{other}'")),
    }
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// CSV log path (stdout when absent)
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// comma-separated cells, e.g. `pdhg,spdhg,dspdhg,pdhg+restart`
    #[arg(long, default_value = "pdhg,spdhg,dspdhg,pdhg+restart,spdhg+restart,dspdhg+restart")]
    pub methods: String,
    /// comma-separated seeds or a range `a..b`
    #[arg(long, default_value = "0")]
    pub seeds: String,
    /// cost to target is measured on rel_error at this threshold (on relKKT
    /// at --target otherwise)
    #[arg(long)]
    pub rel_error_target: Option<f64>,
    #[arg(long, short)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReferenceArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = DEFAULT_REFERENCE_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_REFERENCE_BUDGET)]
    pub budget: f64,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenMpcArgs {
    #[arg(long)]
    pub nx: usize,
    #[arg(long)]
    pub nu: usize,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct NormsArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    #[arg(long, default_value_t = DEFAULT_ENUM_BUDGET)]
    pub enum_budget: u64,
}

/// Outcome classes of a command, mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Error(Error),
    BudgetExhausted(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn load_inputs(problem: &ProblemArgs, run: &RunArgs) -> Result<(SaddleProblem, RunSection)> {
    let config = match &problem.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let source = if let Some(path) = &problem.problem {
        ProblemSource::File { path: path.clone() }
    } else if let Some(path) = &problem.libsvm {
        ProblemSource::Libsvm {
            path: path.clone(),
            c: problem.svm_c,
        }
    } else {
        config.problem.clone().ok_or_else(|| {
            Error::Config("no problem given (use --config, --problem or --libsvm)".into())
        })?
    };
    let p = source.build()?;
    Ok((p, run.section().or(config.run)))
}

fn run_resolved(problem: &SaddleProblem, run: &ResolvedRun, norms: Option<NormReport>) -> Result<Trajectory> {
    let plan = SamplingPlan::from_probabilities(
        problem.primal_blocks(),
        problem.dual_blocks(),
        run.options.p,
        run.options.q,
        run.options.seed,
    )?;
    let norms = match norms {
        Some(n) => n,
        None => problem
            .matrix()
            .norm_report(plan.r, plan.s, run.options.enum_budget)?,
    };
    let setup = setup_with_norms(problem, &run.options, plan, norms)?;
    drive(problem, &run.options, setup)
}

fn write_trajectory(problem: &SaddleProblem, run: &ResolvedRun, t: &Trajectory, out: impl Write) -> Result<()> {
    write_log(&log_header(problem, run, &t.setup), &t.records, out)
}

fn summary(t: &Trajectory) -> String {
    let last = t.records.last();
    let mut s = format!(
        "final relkkt {:.3e}, cost {:.3} units, {} iterations, {} restarts, {:.3}s",
        t.final_relkkt(),
        t.cost_units,
        t.iterations,
        t.restarts,
        t.wall_seconds
    );
    if let Some(e) = last.and_then(|r| r.rel_error) {
        s.push_str(&format!(", rel_error {e:.3e}"));
    }
    if let Some(v) = last.and_then(|r| r.infeasibility) {
        s.push_str(&format!(", infeasibility {v:.3e}"));
    }
    s
}

pub fn solve_command(args: &SolveArgs) -> std::result::Result<(), Failure> {
    let (problem, section) = load_inputs(&args.problem, &args.run)?;
    let run = resolve_run(&section, &problem)?;
    let t = run_resolved(&problem, &run, None)?;
    match &args.output {
        Some(path) => {
            let mut w = BufWriter::new(create_file(path)?);
            write_trajectory(&problem, &run, &t, &mut w)?;
            w.flush()?;
        }
        None => write_trajectory(&problem, &run, &t, io::stdout().lock())?,
    }
    eprintln!("{}", summary(&t));
    if run.options.target_relkkt.is_some() && t.status != RunStatus::ReachedTarget {
        return Err(Failure::BudgetExhausted(format!(
            "target not reached within budget ({})",
            summary(&t)
        )));
    }
    Ok(())
}

/// One compare cell: a method with or without restarts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodCell {
    pub method: Method,
    pub restarted: bool,
}

impl MethodCell {
    pub fn parse_list(s: &str) -> Result<Vec<MethodCell>> {
        let cells: Vec<MethodCell> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                let (name, restarted) = match t.strip_suffix("+restart") {
                    Some(n) => (n, true),
                    None => (t, false),
                };
                Ok(MethodCell {
                    method: name.parse()?,
                    restarted,
                })
            })
            .collect::<Result<_>>()?;
        if cells.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        Ok(cells)
    }

    pub fn label(&self) -> String {
        if self.restarted {
            format!("{}+restart", self.method.name())
        } else {
            self.method.name().to_string()
        }
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    let seeds: Vec<u64> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// First logged cost at which `metric` is at most `threshold`.
pub fn cost_to_target(
    records: &[crate::solver::IterationRecord],
    threshold: f64,
    use_rel_error: bool,
) -> Option<f64> {
    records
        .iter()
        .find(|r| {
            let v = if use_rel_error { r.rel_error } else { Some(r.relkkt) };
            v.is_some_and(|v| v <= threshold)
        })
        .map(|r| r.cost_units)
}

/// Median and interquartile range (linear interpolation between order statistics).
pub fn median_iqr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some((quantile(0.5), quantile(0.75) - quantile(0.25)))
}

pub fn compare_command(args: &CompareArgs) -> std::result::Result<(), Failure> {
    let (problem, section) = load_inputs(&args.problem, &args.run)?;
    let cells = MethodCell::parse_list(&args.methods)?;
    let seeds = parse_seeds(&args.seeds)?;
    let base_restart = match section.restart {
        Some(RestartKind::None) | None => RestartKind::Adaptive,
        Some(k) => k,
    };
    let threshold = match (args.rel_error_target, section.target) {
        (Some(t), _) => Some((t, true)),
        (None, Some(t)) => Some((t, false)),
        (None, None) => None,
    };
    fs::create_dir_all(&args.out_dir)?;

    let mut jobs = Vec::new();
    for cell in &cells {
        let mut sec = section.clone();
        sec.method = Some(cell.method);
        sec.restart = Some(if cell.restarted { base_restart } else { RestartKind::None });
        let run = resolve_run(&sec, &problem)?;
        for &seed in &seeds {
            let mut run = run.clone();
            run.options.seed = seed;
            jobs.push((*cell, seed, run));
        }
    }
    if threshold.is_some_and(|(_, rel)| rel) && jobs.iter().any(|j| j.2.options.reference_objective.is_none()) {
        return Err(Error::Config("--rel-error-target needs a reference objective".into()).into());
    }

    // operator constants depend only on (r, s)
    let mut norms: HashMap<(usize, usize), NormReport> = HashMap::new();
    for (_, _, run) in &jobs {
        let plan = SamplingPlan::from_probabilities(
            problem.primal_blocks(),
            problem.dual_blocks(),
            run.options.p,
            run.options.q,
            0,
        )?;
        if let std::collections::hash_map::Entry::Vacant(e) = norms.entry((plan.r, plan.s)) {
            e.insert(problem.matrix().norm_report(plan.r, plan.s, run.options.enum_budget)?);
        }
    }

    let results: Vec<(MethodCell, u64, Result<Trajectory>)> = jobs
        .par_iter()
        .map(|(cell, seed, run)| {
            let plan = SamplingPlan::from_probabilities(
                problem.primal_blocks(),
                problem.dual_blocks(),
                run.options.p,
                run.options.q,
                *seed,
            );
            let result = plan.and_then(|plan| {
                let t = run_resolved(&problem, run, norms.get(&(plan.r, plan.s)).copied())?;
                let path = args.out_dir.join(format!("{}_seed{seed}.csv", cell.label()));
                let mut w = BufWriter::new(create_file(&path)?);
                write_trajectory(&problem, run, &t, &mut w)?;
                w.flush()?;
                Ok(t)
            });
            (*cell, *seed, result)
        })
        .collect();

    let mut table = csv::Writer::from_path(args.out_dir.join("comparison.csv")).map_err(Error::from)?;
    table
        .write_record(["method", "seed", "cost_to_target", "final_relkkt", "final_rel_error", "iterations", "restarts", "status"])
        .map_err(Error::from)?;
    let mut failures = Vec::new();
    let mut per_cell: Vec<(MethodCell, Vec<f64>, usize)> = cells.iter().map(|c| (*c, Vec::new(), 0)).collect();
    for (cell, seed, res) in &results {
        let slot = per_cell.iter_mut().find(|c| c.0 == *cell).expect("known cell");
        slot.2 += 1;
        match res {
            Ok(t) => {
                let ctt = threshold.and_then(|(th, rel)| cost_to_target(&t.records, th, rel));
                if let Some(c) = ctt {
                    slot.1.push(c);
                }
                let last = t.records.last();
                table
                    .write_record([
                        cell.label(),
                        seed.to_string(),
                        ctt.map(|c| format!("{c:?}")).unwrap_or_default(),
                        format!("{:?}", t.final_relkkt()),
                        last.and_then(|r| r.rel_error).map(|e| format!("{e:?}")).unwrap_or_default(),
                        t.iterations.to_string(),
                        t.restarts.to_string(),
                        "ok".into(),
                    ])
                    .map_err(Error::from)?;
            }
            Err(e) => {
                failures.push(format!("{} seed {seed}: {e}", cell.label()));
                table
                    .write_record([cell.label(), seed.to_string(), String::new(), String::new(), String::new(), String::new(), String::new(), format!("error: {e}")])
                    .map_err(Error::from)?;
            }
        }
    }
    table.flush()?;

    let mut summary_w = csv::Writer::from_path(args.out_dir.join("summary.csv")).map_err(Error::from)?;
    summary_w
        .write_record(["method", "runs", "reached", "median_cost_to_target", "iqr_cost_to_target"])
        .map_err(Error::from)?;
    for (cell, costs, runs) in &per_cell {
        let stats = median_iqr(costs);
        summary_w
            .write_record([
                cell.label(),
                runs.to_string(),
                costs.len().to_string(),
                stats.map(|s| format!("{:?}", s.0)).unwrap_or_default(),
                stats.map(|s| format!("{:?}", s.1)).unwrap_or_default(),
            ])
            .map_err(Error::from)?;
        eprintln!(
            "{:<16} reached {}/{}  median cost {}",
            cell.label(),
            costs.len(),
            runs,
            stats.map(|s| format!("{:.3}", s.0)).unwrap_or_else(|| "-".into())
        );
    }
    summary_w.flush()?;
    if let Some(first) = failures.first() {
        return Err(Error::Numerical(format!("{} run(s) failed; first: {first}", failures.len())).into());
    }
    Ok(())
}

/// Restarted PDHG to `tol`; the result is flagged non-certified when the
/// budget runs out first.
pub fn reference_solve(problem: &SaddleProblem, tol: f64, budget: f64) -> Result<ReferencePoint> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let options = RunOptions {
        target_relkkt: Some(tol),
        max_cost: budget,
        restart: RestartPolicy::adaptive(),
        report: ReportPoint::Iterate,
        ..RunOptions::for_method(Method::Pdhg, 1.0, 1.0)
    };
    let plan = SamplingPlan::from_probabilities(problem.primal_blocks(), problem.dual_blocks(), 1.0, 1.0, 0)?;
    let norms = problem.matrix().norm_report(plan.r, plan.s, options.enum_budget)?;
    let setup = setup_with_norms(problem, &options, plan, norms)?;
    let t = drive(problem, &options, setup)?;
    let objective = problem.primal_objective(&t.final_point.x)?.value;
    Ok(ReferencePoint {
        objective,
        relkkt: t.final_relkkt(),
        certified: t.status == RunStatus::ReachedTarget,
        point: t.final_point,
    })
}

pub fn reference_command(args: &ReferenceArgs) -> std::result::Result<(), Failure> {
    let (problem, _) = load_inputs(&args.problem, &RunArgs::default())?;
    let r = reference_solve(&problem, args.tol, args.budget)?;
    save_point(&r, &args.output)?;
    match r.objective {
        Some(obj) => println!("objective {obj:?}"),
        None => println!("objective none"),
    }
    println!("relkkt {:?}", r.relkkt);
    if !r.certified {
        return Err(Failure::BudgetExhausted(format!(
            "reference solve stopped at relkkt {:.3e} > {:.1e}; point saved as non-certified",
            r.relkkt, args.tol
        )));
    }
    Ok(())
}

pub fn gen_mpc_command(args: &GenMpcArgs) -> std::result::Result<(), Failure> {
    let spec = MpcSpec {
        nx: args.nx,
        nu: args.nu,
        horizon: args.horizon,
        seed: args.seed,
    };
    let p = gen_mpc(spec)
        .map_err(|e| Error::Config(e.to_string()))?
        .with_source(format!(
            "mpc nx={} nu={} horizon={} seed={}",
            args.nx, args.nu, args.horizon, args.seed
        ));
    save_problem(&p, &args.output)?;
    Ok(())
}

pub fn norms_command(args: &NormsArgs) -> std::result::Result<(), Failure> {
    let (problem, _) = load_inputs(&args.problem, &RunArgs::default())?;
    let plan = SamplingPlan::from_probabilities(problem.primal_blocks(), problem.dual_blocks(), args.p, args.q, 0)?;
    let n = problem.matrix().norm_report(plan.r, plan.s, args.enum_budget)?;
    println!("primal_blocks {}", plan.m);
    println!("dual_blocks {}", plan.n);
    println!("s {}", plan.s);
    println!("r {}", plan.r);
    println!("norm_a {:?} converged={}", n.lambda, n.lambda_converged);
    println!("lambda_r {:?} exact={}", n.lambda_r, n.lambda_r_exact);
    println!("lambda_rs {:?} exact={}", n.lambda_rs, n.lambda_rs_exact);
    println!("iterations {}", n.iterations_used);
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

pub fn run_cli(cli: Cli) -> ExitCode {
    let result = match &cli.command {
        Command::Solve(a) => solve_command(a),
        Command::Compare(a) => compare_command(a),
        Command::Reference(a) => reference_command(a),
        Command::GenMpc(a) => gen_mpc_command(a),
        Command::Norms(a) => norms_command(a),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::BudgetExhausted(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_BUDGET)
        }
    }
}

//! Command-line driver: scenario configs in JSON, results as CSV and JSON.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid config or arguments,
//! 3 solver non-convergence, 4 a structural condition failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::functional::DiscreteProblem;
use crate::grid::{Grid, Region, ScalarField};
use crate::model::{
    check_g_properties, check_problem_conditions, Case, Coefficient, ConditionOutcome, ConditionReport,
    Counterexample, NonlinearitySpec, PenalizedNonlinearity, PowerTerm, ProblemDefinition, ProblemSpec,
    SampleLattice,
};
use crate::semiclassical::{
    assess_sweep, certify_original, decay_fit, default_limit_grid, solve_limit_problem, sweep, validate_hbars,
    LimitResult, SweepParams, SweepRecord, SweepReference,
};
use crate::solver::{solve, SolveResult, SolverParams};

/// Environment variable capping the rayon pool size.
pub const THREADS_ENV: &str = "PENALIZED_NLS_THREADS";

/// Shipped scenario files.
pub mod demos {
    pub const LAMBDA1_1D: &str = include_str!("../demos/lambda1_1d.json");
    pub const LAMBDA2_1D: &str = include_str!("../demos/lambda2_1d.json");
}

#[derive(Debug, Parser)]
#[command(name = "penalized-nls", version, about = "Penalized semiclassical ground states and ℏ-sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the penalized problem at one ℏ.
    Solve(RunArgs),
    /// Solve for every ℏ in the config and evaluate the concentration checks.
    Sweep(RunArgs),
    /// Check the structural conditions and (G1)–(G4) on the config.
    Check(RunArgs),
    /// Solve the limit problem at ℏ = 1.
    Limit(RunArgs),
    /// Fit the exponential tail of a solution.
    DecayFit(DecayArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the ℏ list with a single value.
    #[arg(long, allow_negative_numbers = true)]
    pub hbar: Option<f64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `solver.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// A `solution_<ℏ>.csv` to fit instead of solving afresh; `--hbar` must match it.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Window `r1,r2` in units of ℏ; defaults to the sweep decay window.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub window: Option<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("condition check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    /// `coefficient·u^{q−1}`.
    Power {
        q: f64,
        #[serde(default = "one")]
        coefficient: f64,
        theta: Option<f64>,
        p: Option<f64>,
    },
    Combined {
        terms: Vec<PowerTerm>,
        theta: Option<f64>,
        p: Option<f64>,
    },
    Saturable {
        coefficient: f64,
        theta: Option<f64>,
        p: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl NonlinearityConfig {
    pub fn to_spec(&self) -> NonlinearitySpec {
        let (base, theta, p) = match self {
            NonlinearityConfig::Power { q, coefficient, theta, p } => {
                (NonlinearitySpec::combined(vec![PowerTerm { coefficient: *coefficient, q: *q }]), theta, p)
            }
            NonlinearityConfig::Combined { terms, theta, p } => (NonlinearitySpec::combined(terms.clone()), theta, p),
            NonlinearityConfig::Saturable { coefficient, theta, p } => {
                (NonlinearitySpec::saturable(*coefficient), theta, p)
            }
        };
        let (t0, p0) = (base.theta(), base.p());
        base.with_exponents(theta.unwrap_or(t0), p.unwrap_or(p0))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenalizationConfig {
    /// Defaults to `2θ/(θ−2)`.
    pub k: Option<f64>,
    /// Overrides `α = min V`.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitGridConfig {
    pub half_width: f64,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dimension: usize,
    #[serde(rename = "box")]
    pub domain: BoxConfig,
    /// Interior nodes per axis.
    pub resolution: Vec<usize>,
    pub potential: Coefficient,
    pub gamma: Coefficient,
    #[serde(default = "yes")]
    pub normalize_gamma: bool,
    /// Period of Γ (case Λ₁) or V (case Λ₂).
    #[serde(default)]
    pub declared_period: Option<f64>,
    pub region: Region,
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub penalization: PenalizationConfig,
    pub case: Case,
    pub anchor: Vec<f64>,
    #[serde(default)]
    pub hbar: Vec<f64>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub sweep: SweepParams,
    #[serde(default)]
    pub limit_grid: Option<LimitGridConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    /// Parses a JSON document; errors name the offending path.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(if path.is_empty() { "." } else { &path }, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), CliError> {
        let d = self.dimension;
        if !(1..=2).contains(&d) {
            return Err(config_err("dimension", format!("must be 1 or 2, got {d}")));
        }
        for (path, len) in [
            ("box.lower", self.domain.lower.len()),
            ("box.upper", self.domain.upper.len()),
            ("resolution", self.resolution.len()),
            ("anchor", self.anchor.len()),
        ] {
            if len != d {
                return Err(config_err(path, format!("expected {d} entries, got {len}")));
            }
        }
        for (i, h) in self.hbar.iter().enumerate() {
            if !(*h > 0.0 && h.is_finite()) {
                return Err(config_err(&format!("hbar[{i}]"), format!("must be positive, got {h}")));
            }
        }
        if let Some(lg) = &self.limit_grid {
            if lg.nodes.len() != d {
                return Err(config_err("limit_grid.nodes", format!("expected {d} entries")));
            }
            if !(lg.half_width > 0.0) {
                return Err(config_err("limit_grid.half_width", "must be positive"));
            }
        }
        let [r1, r2] = self.sweep.decay_window;
        if !(r1 > 0.0 && r2 > r1) {
            return Err(config_err("sweep.decay_window", "need 0 < r1 < r2"));
        }
        self.solver.validate().map_err(|e| config_err("solver", e))?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(&self.domain.lower, &self.domain.upper, &self.resolution).map_err(|e| config_err("box", e))
    }

    pub fn definition(&self) -> ProblemDefinition {
        ProblemDefinition {
            potential: self.potential.clone(),
            gamma: self.gamma.clone(),
            region: self.region.clone(),
            nonlinearity: self.nonlinearity.to_spec(),
            case: self.case,
            anchor: self.anchor.clone(),
            alpha: self.penalization.alpha,
            beta: None,
            normalize_gamma: self.normalize_gamma,
            declared_period: self.declared_period,
        }
    }

    pub fn limit_grid(&self) -> Result<Grid, CliError> {
        match &self.limit_grid {
            None => default_limit_grid(&self.anchor).map_err(|e| config_err("anchor", e)),
            Some(lg) => {
                let lower: Vec<f64> = self.anchor.iter().map(|c| c - lg.half_width).collect();
                let upper: Vec<f64> = self.anchor.iter().map(|c| c + lg.half_width).collect();
                Grid::new(&lower, &upper, &lg.nodes).map_err(|e| config_err("limit_grid", e))
            }
        }
    }
}

/// A config built into a problem on its grid.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: Arc<Grid>,
    pub spec: ProblemSpec,
    pub pen: PenalizedNonlinearity,
    pub problem: DiscreteProblem,
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Self, CliError> {
        let grid = Arc::new(config.grid()?);
        let spec = config.definition().build(&grid).map_err(|e| config_err("problem", e))?;
        let pen = spec.penalize(config.penalization.k).map_err(|e| config_err("penalization", e))?;
        let problem = DiscreteProblem::penalized(&spec, &pen, grid.clone(), config.sweep.band_width)
            .map_err(|e| config_err("region", e))?;
        Ok(Self { config, grid, spec, pen, problem })
    }
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_hbar(h: f64) -> String {
    format!("{h}")
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn coordinate_headers(dim: usize) -> Vec<&'static str> {
    ["x", "y"][..dim].to_vec()
}

pub fn write_solution_csv(path: &Path, u: &ScalarField) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let grid = u.grid();
    let mut header = coordinate_headers(grid.dim());
    header.push("u");
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for (j, v) in u.values().iter().enumerate() {
        let mut row: Vec<String> = grid.point(j).into_iter().map(fmt_num).collect();
        row.push(fmt_num(*v));
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a solution CSV back onto `grid`; the coordinates must match its nodes.
pub fn read_solution_csv(path: &Path, grid: Arc<Grid>) -> Result<ScalarField, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let dim = grid.dim();
    let mut values = Vec::with_capacity(grid.len());
    for (j, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| io_err(path, format!("row {}: {e}", j + 1)))?;
        if nums.len() != dim + 1 || j >= grid.len() {
            return Err(config_err("solution", format!("row {} does not fit the config grid", j + 1)));
        }
        let x = grid.point(j);
        if x.iter().zip(&nums).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs())) {
            return Err(config_err("solution", format!("row {} is not at grid node {x:?}", j + 1)));
        }
        values.push(nums[dim]);
    }
    ScalarField::new(grid, values).map_err(|e| config_err("solution", e))
}

pub const SWEEP_COLUMNS_TAIL: [&str; 6] =
    ["V_at_argmax", "Gamma_at_argmax", "solves_original", "decay_rate", "converged", "residual_norm"];

pub fn sweep_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["hbar", "level_scaled", "Q_scaled", "m"].iter().map(|s| s.to_string()).collect();
    h.extend(["argmax_x", "argmax_y"][..dim].iter().map(|s| s.to_string()));
    h.extend(SWEEP_COLUMNS_TAIL.iter().map(|s| s.to_string()));
    h
}

pub fn write_sweep_csv(path: &Path, dim: usize, records: &[SweepRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(sweep_header(dim)).map_err(|e| io_err(path, e))?;
    for r in records {
        let mut row = vec![fmt_num(r.hbar), fmt_num(r.level_scaled), fmt_num(r.q_scaled), fmt_num(r.m)];
        row.extend(r.argmax_point.iter().map(|x| fmt_num(*x)));
        row.push(fmt_num(r.v_at_argmax));
        row.push(fmt_num(r.gamma_at_argmax));
        row.push(r.solves_original.to_string());
        row.push(fmt_num(r.decay_rate));
        row.push(r.converged.to_string());
        row.push(fmt_num(r.residual_norm));
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn output_dir(cfg: &ScenarioConfig, args: &RunArgs) -> PathBuf {
    args.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn load(args: &RunArgs) -> Result<(Scenario, PathBuf), CliError> {
    let mut cfg = ScenarioConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.solver.seed = seed;
    }
    if let Some(h) = args.hbar {
        if !(h > 0.0 && h.is_finite()) {
            return Err(config_err("--hbar", format!("must be positive, got {h}")));
        }
        cfg.hbar = vec![h];
    }
    let dir = output_dir(&cfg, args);
    Ok((Scenario::build(cfg)?, dir))
}

fn single_hbar(s: &Scenario) -> Result<f64, CliError> {
    s.config.hbar.first().copied().ok_or_else(|| config_err("hbar", "no ℏ given in the config or with --hbar"))
}

fn summary_json(s: &Scenario, hbar: f64, res: &SolveResult) -> serde_json::Value {
    let scale = hbar.powi(s.grid.dim() as i32);
    json!({
        "hbar": hbar,
        "level": res.level,
        "level_scaled": res.level / scale,
        "Q": res.breakdown.q,
        "Q_scaled": res.breakdown.q / scale,
        "energy": res.breakdown,
        "residual": res.residual_norm,
        "iterations": res.iterations,
        "converged": res.converged,
        "nehari_scale": res.nehari_scale,
        "m": res.m,
        "a": s.pen.a(),
        "k": s.pen.k(),
        "alpha": s.pen.alpha(),
        "argmax": {
            "index": res.argmax_index,
            "point": res.argmax_point,
            "value": res.argmax_value,
            "V": res.v_at_argmax,
            "Gamma": res.gamma_at_argmax,
        },
        "boundary_value": res.boundary_value,
        "certification": certify_original(&res.u, &s.problem, hbar),
    })
}

fn cmd_solve(args: &RunArgs) -> Result<(), CliError> {
    let (s, dir) = load(args)?;
    let hbar = single_hbar(&s)?;
    let res = solve(&s.problem, hbar, &s.config.solver).map_err(|e| CliError::NotConverged(e.to_string()))?;
    create_dir(&dir)?;
    write_solution_csv(&dir.join(format!("solution_{}.csv", fmt_hbar(hbar))), &res.u)?;
    write_json(&dir.join(format!("summary_{}.json", fmt_hbar(hbar))), &summary_json(&s, hbar, &res))?;
    if !res.converged {
        return Err(CliError::NotConverged(format!(
            "ℏ = {hbar}: relative residual {:e} after {} iterations",
            res.residual_norm, res.iterations
        )));
    }
    println!("ℏ = {hbar}: level {:.10}, residual {:.3e}, {} iterations", res.level, res.residual_norm, res.iterations);
    Ok(())
}

fn limit_json(lim: &LimitResult) -> serde_json::Value {
    json!({
        "case": lim.case,
        "c_limit": lim.level,
        "V0": lim.v0,
        "Gamma0": lim.gamma0,
        "residual": lim.residual_norm,
        "iterations": lim.iterations,
    })
}

fn run_limit(s: &Scenario) -> Result<LimitResult, CliError> {
    let grid = Arc::new(s.config.limit_grid()?);
    solve_limit_problem(&s.spec, &s.pen, grid, &s.config.solver).map_err(|e| CliError::NotConverged(e.to_string()))
}

fn cmd_limit(args: &RunArgs) -> Result<(), CliError> {
    let (s, dir) = load(args)?;
    let lim = run_limit(&s)?;
    create_dir(&dir)?;
    write_json(&dir.join("limit.json"), &limit_json(&lim))?;
    write_solution_csv(&dir.join("limit_solution.csv"), &lim.w)?;
    println!("c̲ = {:.10}", lim.level);
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> Result<(), CliError> {
    let (s, dir) = load(args)?;
    validate_hbars(&s.config.hbar).map_err(|e| config_err("hbar", e))?;
    let lim = run_limit(&s)?;
    let (records, _) = sweep(&s.problem, &s.config.hbar, &s.config.solver, &s.config.sweep, Some(lim.level))
        .map_err(|e| config_err("sweep", e))?;
    let reference = SweepReference {
        case: s.spec.case(),
        limit_level: lim.level,
        v0: s.spec.v0(),
        gamma0: s.spec.gamma0(),
        a: s.pen.a(),
        b: s.config.sweep.b,
        level_tolerance: s.config.sweep.level_tolerance,
    };
    let checks = assess_sweep(&records, &reference);
    create_dir(&dir)?;
    write_sweep_csv(&dir.join("sweep.csv"), s.grid.dim(), &records)?;
    write_json(&dir.join("limit.json"), &limit_json(&lim))?;
    write_json(&dir.join("lemmas.json"), &json!({ "checks": checks, "records": records }))?;
    for c in &checks {
        println!("{:<14} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    if !records.iter().any(|r| r.converged) {
        return Err(CliError::NotConverged("no ℏ in the sweep converged".into()));
    }
    Ok(())
}

fn failed(name: &str, detail: String) -> ConditionOutcome {
    ConditionOutcome {
        name: name.to_string(),
        passed: false,
        counterexample: Some(Counterexample { x: None, u: None, detail }),
    }
}

fn cmd_check(args: &RunArgs) -> Result<(), CliError> {
    let mut cfg = ScenarioConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.solver.seed = seed;
    }
    let dir = output_dir(&cfg, args);
    let grid = cfg.grid()?;
    let spec = cfg.definition().build(&grid).map_err(|e| config_err("problem", e))?;
    let mut report = check_problem_conditions(&spec, &grid);
    let mut truncation = None;
    match spec.penalize(cfg.penalization.k) {
        Ok(pen) => {
            truncation = Some(pen.a());
            report.extend(check_g_properties(&pen, &spec, &SampleLattice::standard(&grid, pen.a())));
        }
        Err(e) => report.conditions.push(failed("penalization", e.to_string())),
    }
    create_dir(&dir)?;
    write_json(
        &dir.join("conditions.json"),
        &json!({ "all_passed": report.all_passed(), "a": truncation, "conditions": report.conditions }),
    )?;
    print_report(&report);
    match report.first_failure() {
        None => Ok(()),
        Some(c) => Err(CliError::CheckFailed(format!(
            "{}: {}",
            c.name,
            c.counterexample.as_ref().map_or(String::new(), |ce| ce.detail.clone())
        ))),
    }
}

fn print_report(report: &ConditionReport) {
    for c in &report.conditions {
        println!("{:<12} {}", c.name, if c.passed { "pass" } else { "FAIL" });
    }
}

fn cmd_decay_fit(args: &DecayArgs) -> Result<(), CliError> {
    let (s, dir) = load(&args.run)?;
    let hbar = single_hbar(&s)?;
    let u = match &args.solution {
        Some(path) => read_solution_csv(path, s.grid.clone())?,
        None => {
            let res = solve(&s.problem, hbar, &s.config.solver).map_err(|e| CliError::NotConverged(e.to_string()))?;
            if !res.converged {
                return Err(CliError::NotConverged(format!("ℏ = {hbar}: solve did not converge")));
            }
            res.u
        }
    };
    let window = match &args.window {
        Some(w) if w.len() == 2 => [w[0], w[1]],
        Some(w) => return Err(config_err("--window", format!("expected r1,r2, got {} values", w.len()))),
        None => s.config.sweep.decay_window,
    };
    let center = u.peak_location();
    let r = [window[0] * hbar, window[1] * hbar];
    let (c, rate) = decay_fit(&u, &center, r).map_err(|e| config_err("--window", e))?;
    let v_center = s.spec.v(&center);
    let out = json!({
        "hbar": hbar,
        "center": center,
        "window": r,
        "C": c,
        "rate": rate,
        "reference_rate": v_center.sqrt() / hbar,
    });
    create_dir(&dir)?;
    write_json(&dir.join(format!("decay_{}.json", fmt_hbar(hbar))), &out)?;
    println!("ℏ = {hbar}: rate {rate:.6} (√V/ℏ at the peak: {:.6})", v_center.sqrt() / hbar);
    Ok(())
}

/// Sets the global rayon pool from [`THREADS_ENV`] when present.
pub fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))
        })?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Check(a) => cmd_check(a),
        Command::Limit(a) => cmd_limit(a),
        Command::DecayFit(a) => cmd_decay_fit(a),
    }
}

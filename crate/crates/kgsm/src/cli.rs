//! Command-line front end.
//!
//! Subcommands: `run` (solve a configured system and write traces), `theory`
//! (companion-matrix analysis as JSON), `figure` (regenerate a named study),
//! `sweep` (scan the momentum plane), and `generate` (emit a synthesized
//! system). Every subcommand is deterministic given its flags and seed; the
//! `KGSM_SEED` environment variable supplies the seed when no flag does.
//!
//! Exit codes: 0 success (divergence is data, not failure), 2 invalid
//! input, 3 I/O failure.

use std::env;
use std::ffi::OsString;
use std::io;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::config::{BetaSpec, ConfigError, ExperimentConfig, MethodSpec, SystemSpec};
use crate::experiments::{
    parameter_sweep, run_figure, Emitter, ExperimentError, FigureId, FigureSpec, Overrides,
};
use crate::plot::{PlotSpec, Series, YScale};
use crate::solvers::{run, IterationTrace, MomentumParams, RowSource, RunOptions};
use crate::stochastics::RngStream;
use crate::systems::LinearSystem;
use crate::theory;

const ENV_SEED: &str = "KGSM_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Prints one line to stdout. A closed pipe (`kgsm ... | head`) ends the
/// process quietly with success; any other stdout failure is an I/O error.
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let mut so = io::stdout().lock();
        if let Err(e) = writeln!(so, $($t)*) {
            if e.kind() == io::ErrorKind::BrokenPipe {
                std::process::exit(EXIT_OK);
            }
            std::process::exit(EXIT_IO);
        }
    }};
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io(inner) => CliError::Io(inner.to_string()),
            ExperimentError::Plot(crate::plot::PlotError::Io(inner)) => {
                CliError::Io(inner.to_string())
            }
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<crate::theory::TheoryError> for CliError {
    fn from(e: crate::theory::TheoryError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<crate::solvers::SolverError> for CliError {
    fn from(e: crate::solvers::SolverError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<crate::plot::PlotError> for CliError {
    fn from(e: crate::plot::PlotError) -> Self {
        match e {
            crate::plot::PlotError::Io(inner) => CliError::Io(inner.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "kgsm",
    version,
    about = "Randomized Kaczmarz with geometrically smoothed momentum",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a synthesized system and write error traces.
    Run(RunArgs),
    /// Print the companion-matrix analysis for (eta, M, beta) as JSON.
    Theory(TheoryArgs),
    /// Regenerate a named study into CSV, SVG, and manifest files.
    Figure(FigureArgs),
    /// Scan a (M, beta) grid and classify each cell.
    Sweep(SweepArgs),
    /// Synthesize a linear system and write it out.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodName {
    Kaczmarz,
    Kgsm,
    HeavyBall,
}

/// Flags that choose or adjust the system; shared by run/sweep/generate.
#[derive(Args, Debug)]
struct SystemArgs {
    /// Spectrum preset: one-small, two-small, many-small, linear,
    /// convex-poly, concave-poly
    #[arg(long, group = "system_kind")]
    preset: Option<String>,
    /// Dense standard-normal system instead of a preset spectrum
    #[arg(long, group = "system_kind")]
    gaussian: bool,
    /// Explicit singular values, comma-separated (fixes the column count)
    #[arg(long, group = "system_kind", value_name = "S1,S2,...")]
    sigma: Option<String>,
    /// Number of rows
    #[arg(long)]
    rows: Option<usize>,
    /// Number of columns
    #[arg(long)]
    cols: Option<usize>,
}

impl SystemArgs {
    /// Applies these flags on top of `base` (the config's system, if any).
    fn resolve(&self, base: Option<SystemSpec>) -> Result<SystemSpec, CliError> {
        let mut spec = if let Some(name) = &self.preset {
            SystemSpec::preset(name, 100, 20)
        } else if self.gaussian {
            SystemSpec::Gaussian { rows: 60, cols: 50 }
        } else if let Some(list) = &self.sigma {
            SystemSpec::Explicit { sigma: parse_float_list(list)?, rows: 0 }
        } else if let Some(base) = base {
            base
        } else {
            SystemSpec::preset("one-small", 100, 20)
        };
        if let SystemSpec::Explicit { sigma, rows } = &mut spec {
            *rows = self.rows.unwrap_or(if *rows == 0 { 2 * sigma.len() } else { *rows });
            if self.cols.is_some() {
                return Err(CliError::Invalid(
                    "--cols conflicts with --sigma; the value count fixes the columns"
                        .to_string(),
                ));
            }
        } else {
            match &mut spec {
                SystemSpec::Preset { rows, cols, .. } | SystemSpec::Gaussian { rows, cols } => {
                    if let Some(r) = self.rows {
                        *rows = r;
                    }
                    if let Some(c) = self.cols {
                        *cols = c;
                    }
                }
                SystemSpec::Explicit { .. } => unreachable!(),
            }
        }
        Ok(spec)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON config file; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    system: SystemArgs,
    /// Methods to run; the first one draws the row sequence, the rest
    /// replay it
    #[arg(long = "method", value_enum)]
    methods: Vec<MethodName>,
    /// Momentum mass M in [0, 1] for kgsm / heavy-ball
    #[arg(long)]
    mass: Option<f64>,
    /// Smoothing beta in [0, 1), or "auto" for the critical value
    #[arg(long)]
    beta: Option<String>,
    /// Iteration budget
    #[arg(long)]
    iters: Option<usize>,
    /// Independent repeats (fresh start point and row draws per trial)
    #[arg(long)]
    trials: Option<usize>,
    /// 0-based singular directions to track (v20 of a 20-column system
    /// is 19); repeatable
    #[arg(long = "track")]
    tracked: Vec<usize>,
    /// Recording stride in iterations
    #[arg(long)]
    stride: Option<usize>,
    /// Master seed (default: KGSM_SEED, then 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render SVG panels next to the CSV traces
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    /// Spectral ratio eta = sigma_l^2 / ||A||_F^2, in (0, 1)
    #[arg(long)]
    eta: f64,
    /// Momentum mass M in [0, 1]
    #[arg(long)]
    mass: f64,
    /// Smoothing beta in [0, 1), or "auto" for the critical value
    #[arg(long)]
    beta: String,
    /// Also print the expected signed error for k = 0..=K
    #[arg(long, value_name = "K")]
    trajectory: Option<usize>,
    /// Start error e0 for the trajectory
    #[arg(long, default_value_t = 1.0)]
    e0: f64,
}

#[derive(Args, Debug)]
struct FigureArgs {
    /// Study id; see --list
    id: Option<String>,
    /// List the known study ids and exit
    #[arg(long, conflicts_with = "id")]
    list: bool,
    /// Master seed (default: KGSM_SEED, then 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; files land under <out>/<id>/
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the study's momentum mass
    #[arg(long)]
    mass: Option<f64>,
    /// Override the study's smoothing beta
    #[arg(long)]
    beta: Option<f64>,
    /// Override the study's iteration budget
    #[arg(long)]
    iters: Option<usize>,
    /// Override the study's trial count
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Mass grid: comma list "0.8,0.9" or range "start:stop:step"
    #[arg(long = "mass-grid", value_name = "GRID")]
    mass_grid: String,
    /// Beta grid: comma list or range "start:stop:step"
    #[arg(long = "beta-grid", value_name = "GRID")]
    beta_grid: String,
    /// Iteration budget per cell
    #[arg(long, default_value_t = 200_000)]
    iters: usize,
    /// Master seed (default: KGSM_SEED, then 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; files land under <out>/sweep/
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Master seed (default: KGSM_SEED, then 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; files land under <out>/generate/
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Entry point for the binary; returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with success; usage errors
            // land on stderr with the invalid-input code.
            let _ = e.print();
            return if e.exit_code() == 0 { EXIT_OK } else { EXIT_INVALID };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Theory(args) => cmd_theory(args),
        Command::Figure(args) => cmd_figure(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env::var(ENV_SEED) {
        Ok(text) => text.trim().parse().map_err(|_| {
            CliError::Invalid(format!("{ENV_SEED} must be an unsigned integer, got {text:?}"))
        }),
        Err(_) => Ok(0),
    }
}

fn parse_float_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Invalid(format!("cannot parse number {:?}", tok.trim())))
        })
        .collect()
}

/// "a,b,c" or "start:stop:step" (inclusive stop, within half a step).
fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Invalid(format!(
                "grid range must be start:stop:step, got {text:?}"
            )));
        }
        let nums = parse_float_list(&parts.join(","))?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if !step.is_finite() || step <= 0.0 || !start.is_finite() || !stop.is_finite() || stop < start {
            return Err(CliError::Invalid(format!("bad grid range {text:?}")));
        }
        let count = ((stop - start) / step + 0.5).floor() as usize;
        Ok((0..=count).map(|i| start + i as f64 * step).collect())
    } else {
        let values = parse_float_list(text)?;
        if values.is_empty() {
            return Err(CliError::Invalid("empty grid".to_string()));
        }
        Ok(values)
    }
}

fn parse_beta_spec(text: &str) -> Result<BetaSpec, CliError> {
    if text == "auto" {
        Ok(BetaSpec::Auto)
    } else {
        text.parse::<f64>()
            .map(BetaSpec::Value)
            .map_err(|_| CliError::Invalid(format!("beta must be a number or \"auto\", got {text:?}")))
    }
}

/// Builds the method list from flags, enforcing that momentum parameters
/// only accompany momentum methods.
fn methods_from_flags(
    names: &[MethodName],
    mass: Option<f64>,
    beta: Option<&str>,
) -> Result<Vec<MethodSpec>, CliError> {
    let wants_momentum = names
        .iter()
        .any(|n| matches!(n, MethodName::Kgsm | MethodName::HeavyBall));
    if mass.is_some() && !wants_momentum {
        return Err(CliError::Invalid(
            "--mass requires a momentum method (kgsm or heavy-ball)".to_string(),
        ));
    }
    if beta.is_some() && !names.contains(&MethodName::Kgsm) {
        return Err(CliError::Invalid("--beta requires the kgsm method".to_string()));
    }
    names
        .iter()
        .map(|name| match name {
            MethodName::Kaczmarz => Ok(MethodSpec::Kaczmarz),
            MethodName::Kgsm => {
                let mass = mass
                    .ok_or_else(|| CliError::Invalid("kgsm needs --mass".to_string()))?;
                let beta = beta.map(parse_beta_spec).transpose()?.unwrap_or(BetaSpec::Auto);
                Ok(MethodSpec::Kgsm { mass, beta })
            }
            MethodName::HeavyBall => {
                let mass = mass
                    .ok_or_else(|| CliError::Invalid("heavy-ball needs --mass".to_string()))?;
                Ok(MethodSpec::HeavyBall { mass })
            }
        })
        .collect()
}

/// Duplicate method labels get a positional suffix so file names and
/// summary lines stay unambiguous.
fn unique_labels(methods: &[MethodSpec]) -> Vec<String> {
    let mut labels = Vec::with_capacity(methods.len());
    for (i, m) in methods.iter().enumerate() {
        let base = m.label().to_string();
        let dup = methods.iter().filter(|o| o.label() == base).count() > 1;
        labels.push(if dup { format!("{base}{i}") } else { base });
    }
    labels
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(ExperimentConfig::from_json(&text)?)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let base = match &args.config {
        Some(path) => Some(load_config(path)?),
        None => None,
    };

    let system_spec = args
        .system
        .resolve(base.as_ref().map(|c| c.system.clone()))?;
    let methods = if args.methods.is_empty() {
        if args.mass.is_some() || args.beta.is_some() {
            // Momentum flags without --method: same contract as with an
            // explicit non-momentum method list.
            methods_from_flags(&[], args.mass, args.beta.as_deref())?
        } else {
            base.as_ref()
                .map(|c| c.methods.clone())
                .unwrap_or_else(|| vec![MethodSpec::Kaczmarz])
        }
    } else {
        methods_from_flags(&args.methods, args.mass, args.beta.as_deref())?
    };

    let config = ExperimentConfig {
        system: system_spec,
        methods,
        iters: args.iters.or(base.as_ref().map(|c| c.iters)).unwrap_or(10_000),
        trials: args.trials.or(base.as_ref().map(|c| c.trials)).unwrap_or(1),
        tracked_dirs: if args.tracked.is_empty() {
            base.as_ref().map(|c| c.tracked_dirs.clone()).unwrap_or_default()
        } else {
            args.tracked.clone()
        },
        seed: Some(resolve_seed(args.seed, base.as_ref().and_then(|c| c.seed))?),
        stride: args.stride.or(base.as_ref().and_then(|c| c.stride)),
        out: args.out.or(base.map(|c| c.out)).unwrap_or_else(|| PathBuf::from("out")),
    };
    config.validate()?;
    let seed = config.seed.expect("resolved above");

    let mut sys_stream = RngStream::derive_substream(seed, 0);
    let system = config.system.build(&mut sys_stream)?;
    let eta_min = system.eta_min();
    let labels = unique_labels(&config.methods);
    let resolved: Vec<_> = config
        .methods
        .iter()
        .map(|m| m.to_method(eta_min))
        .collect::<Result<_, _>>()?;

    let mut em = Emitter::new(&config.out, "run")?;
    let sampler = system.row_sampler();
    let mut opts = RunOptions::new(config.iters).tracking(&config.tracked_dirs);
    if let Some(stride) = config.stride {
        opts = opts.with_stride(stride);
    }

    let mut first_trial: Vec<IterationTrace> = Vec::new();
    let mut summaries = Vec::new();
    for t in 0..config.trials {
        let x0 = RngStream::derive_substream(seed, 1 + 2 * t as u64).normal_vec(system.cols());
        let mut idx = RngStream::derive_substream(seed, 2 + 2 * t as u64);
        let record = opts.clone().recording_indices();
        let mut log: Option<Vec<usize>> = None;
        for (label, method) in labels.iter().zip(&resolved) {
            let trace = match &log {
                None => {
                    let trace = run(
                        &system,
                        method,
                        &x0,
                        &record,
                        RowSource::Weighted { sampler: &sampler, stream: &mut idx },
                    );
                    log = trace.index_log.clone();
                    trace
                }
                Some(log) => run(&system, method, &x0, &opts, RowSource::Replay(log)),
            };
            let name = if config.trials == 1 {
                format!("{label}.csv")
            } else {
                format!("{label}_t{t}.csv")
            };
            em.trace(&name, &trace)?;
            if t == 0 {
                summaries.push(json!({
                    "method": label,
                    "final_l2": trace.final_l2(),
                    "diverged_at": trace.divergence,
                }));
                outln!(
                    "method={label} final_l2={:.6e} diverged_at={}",
                    trace.final_l2(),
                    trace.divergence.map(|k| k.to_string()).unwrap_or_else(|| "-".to_string()),
                );
                first_trial.push(trace);
            }
        }
    }

    if args.svg {
        let mut l2_plot =
            PlotSpec::new("run: l2 error", "iteration k", "||x_k - x||", YScale::Log10);
        for (label, trace) in labels.iter().zip(&first_trial) {
            l2_plot.series.push(Series::line(
                label,
                trace.recorded_k.iter().zip(&trace.l2).map(|(&k, &v)| (k as f64, v)).collect(),
            ));
        }
        em.svg("run_l2.svg", &l2_plot)?;
        for &d in &config.tracked_dirs {
            let mut p = PlotSpec::new(
                &format!("run: error along direction {}", d + 1),
                "iteration k",
                &format!("|<x_k - x, v_{}>|", d + 1),
                YScale::Log10,
            );
            for (label, trace) in labels.iter().zip(&first_trial) {
                p.series.push(Series::line(
                    label,
                    trace.recorded_k
                        .iter()
                        .zip(&trace.directional[&d])
                        .map(|(&k, &v)| (k as f64, v.abs()))
                        .collect(),
                ));
            }
            em.svg(&format!("run_dir{}.svg", d + 1), &p)?;
        }
    }

    let params = json!({
        "config": serde_json::to_value(&config).expect("config serializes"),
        "eta_min": eta_min,
        "summaries": summaries,
    });
    let manifest = em.finish("run", seed, params)?;
    outln!(
        "wrote {} files to {}",
        manifest.files.len() + 1,
        config.out.join("run").display()
    );
    Ok(())
}

fn cmd_theory(args: TheoryArgs) -> Result<(), CliError> {
    let beta = match parse_beta_spec(&args.beta)? {
        BetaSpec::Auto => theory::optimal_beta(args.eta, args.mass),
        BetaSpec::Value(v) => v,
    };
    let params = MomentumParams::new(args.mass, beta)?;
    let analysis = theory::analyze(args.eta, &params)?;
    let mut doc = analysis.to_json();
    if let Some(k_max) = args.trajectory {
        let mut rows = Vec::with_capacity(k_max + 1);
        rows.push(json!({ "k": 0, "expected": args.e0 }));
        if k_max > 0 {
            let traj = theory::expected_error_trajectory(&analysis, args.e0, k_max - 1);
            for k in 1..=k_max {
                rows.push(json!({ "k": k, "expected": traj.value(k - 1) }));
            }
        }
        doc["e0"] = json!(args.e0);
        doc["trajectory"] = Value::Array(rows);
    }
    outln!("{}", serde_json::to_string_pretty(&doc).expect("analysis serializes"));
    Ok(())
}

fn cmd_figure(args: FigureArgs) -> Result<(), CliError> {
    if args.list {
        for id in FigureId::ALL {
            outln!("{id}");
        }
        return Ok(());
    }
    let id: FigureId = args
        .id
        .as_deref()
        .ok_or_else(|| CliError::Invalid("give a study id or --list".to_string()))?
        .parse()
        .map_err(|e: ExperimentError| CliError::Invalid(e.to_string()))?;
    let seed = resolve_seed(args.seed, None)?;
    let spec = FigureSpec {
        id,
        seed,
        overrides: Overrides {
            mass: args.mass,
            beta: args.beta,
            iters: args.iters,
            trials: args.trials,
        },
    };
    let manifest = run_figure(&spec, &args.out)?;
    for flag in &manifest.divergence_flags {
        outln!("divergence: {} at iteration {}", flag.trace, flag.at);
    }
    outln!(
        "wrote {} files to {}",
        manifest.files.len() + 1,
        args.out.join(id.as_str()).display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let spec = args.system.resolve(None)?;
    let mass_grid = parse_grid(&args.mass_grid)?;
    let beta_grid = parse_grid(&args.beta_grid)?;
    if args.iters == 0 {
        return Err(CliError::Invalid("iters must be positive".to_string()));
    }
    let seed = resolve_seed(args.seed, None)?;

    let mut sys_stream = RngStream::derive_substream(seed, 0);
    let system = spec.build(&mut sys_stream)?;
    let sweep_stream = RngStream::derive_substream(seed, 1);
    let cells = parameter_sweep(&system, &mass_grid, &beta_grid, args.iters, &sweep_stream)?;

    let mut csv = String::from("mass,beta,regime,diverged_at,converged,initial_abs,final_abs\n");
    let mut diverged = 0usize;
    let mut converged = 0usize;
    for cell in &cells {
        csv.push_str(&format!(
            "{:.16e},{:.16e},{},{},{},{:.16e},{:.16e}\n",
            cell.mass,
            cell.beta,
            cell.regime.name(),
            cell.diverged.map(|k| k.to_string()).unwrap_or_default(),
            cell.converged,
            cell.initial_abs,
            cell.final_abs,
        ));
        diverged += usize::from(cell.diverged.is_some());
        converged += usize::from(cell.converged);
    }

    let mut em = Emitter::new(&args.out, "sweep")?;
    em.raw("sweep.csv", &csv)?;
    let params = json!({
        "system": serde_json::to_value(&spec).expect("system spec serializes"),
        "mass_grid": mass_grid,
        "beta_grid": beta_grid,
        "iters": args.iters,
        "cells": cells.len(),
        "converged": converged,
        "diverged": diverged,
    });
    em.finish("sweep", seed, params)?;
    outln!(
        "{} cells: {} converged, {} diverged; wrote {}",
        cells.len(),
        converged,
        diverged,
        args.out.join("sweep").join("sweep.csv").display()
    );
    Ok(())
}

fn format_row(values: &[f64]) -> String {
    let mut row = String::with_capacity(values.len() * 26);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            row.push(',');
        }
        row.push_str(&format!("{v:.16e}"));
    }
    row.push('\n');
    row
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let spec = args.system.resolve(None)?;
    let seed = resolve_seed(args.seed, None)?;
    let mut sys_stream = RngStream::derive_substream(seed, 0);
    let system: LinearSystem = spec.build(&mut sys_stream)?;

    let mut matrix_csv = String::new();
    matrix_csv.push_str(
        &(0..system.cols()).map(|j| format!("c{j}")).collect::<Vec<_>>().join(","),
    );
    matrix_csv.push('\n');
    for i in 0..system.rows() {
        matrix_csv.push_str(&format_row(system.matrix().row(i)));
    }
    let mut rhs_csv = String::from("b\n");
    for i in 0..system.rows() {
        rhs_csv.push_str(&format!("{:.16e}\n", system.rhs()[i]));
    }
    let mut solution_csv = String::from("x\n");
    for j in 0..system.cols() {
        solution_csv.push_str(&format!("{:.16e}\n", system.solution()[j]));
    }

    let summary = json!({
        "rows": system.rows(),
        "cols": system.cols(),
        "spectrum": system.spectrum().singular_values,
        "frobenius_sq": system.frobenius_sq(),
        "eta_min": system.eta_min(),
    });

    let mut em = Emitter::new(&args.out, "generate")?;
    em.raw("matrix.csv", &matrix_csv)?;
    em.raw("rhs.csv", &rhs_csv)?;
    em.raw("solution.csv", &solution_csv)?;
    em.raw(
        "system.json",
        &format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary serializes")),
    )?;
    let params = json!({
        "system": serde_json::to_value(&spec).expect("system spec serializes"),
        "eta_min": system.eta_min(),
    });
    em.finish("generate", seed, params)?;
    outln!(
        "{} x {} system written to {}",
        system.rows(),
        system.cols(),
        args.out.join("generate").display()
    );
    Ok(())
}

//! Command-line front end: `simulate`, `run`, `sweep` and `loglik`.
//!
//! Filter failures are results, not errors, so they are written into the
//! reports and the process still exits 0. Bad flags or unreadable models
//! exit 2; anything else that goes wrong exits 1.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{self, MonteCarloReport, RunConfig, SweepReport};
use crate::error::Error;
use crate::filters::{loglik_conventional, loglik_svd, Filter, FilterFailure, FilterKind, StepReport};
use crate::model::{simulate_with, InitialState, StateSpaceModel, Trajectory};

#[derive(Debug, Parser)]
#[command(name = "svdkf", version, about = "Kalman filter comparison and ill-conditioning benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one simulated trajectory as CSV.
    Simulate(SimulateArgs),
    /// Monte-Carlo comparison of filters on one model.
    Run(RunArgs),
    /// ‖RMSE‖₂ of each filter on the ill-conditioned model over a δ grid.
    Sweep(SweepArgs),
    /// Log-likelihood of one simulated measurement record.
    Loglik(LoglikArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Conventional,
    Svd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Start {
    /// True initial state drawn from N(x̄₀, Π₀).
    Sampled,
    /// True initial state fixed at x̄₀.
    Mean,
}

impl From<Start> for InitialState {
    fn from(s: Start) -> Self {
        match s {
            Start::Sampled => InitialState::Sampled,
            Start::Mean => InitialState::Mean,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Preset (`example1`, `example2:<δ>`) or path to a JSON model.
    #[arg(long, default_value = "example1")]
    pub model: String,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Start::Sampled)]
    pub initial_state: Start,
    /// Output file; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long, default_value = "example1")]
    pub model: String,
    /// Comma-separated subset of kf,srkf,udkf,svd-srkf,svd-kf, or `all`.
    #[arg(long, default_value = "all")]
    pub filters: String,
    #[arg(long, default_value_t = 500)]
    pub runs: usize,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Start::Sampled)]
    pub initial_state: Start,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// Comma-separated δ values, or a decade range such as `1e-1..1e-14`.
    #[arg(long, default_value = "1e-1..1e-14")]
    pub deltas: String,
    #[arg(long, default_value = "all")]
    pub filters: String,
    #[arg(long, default_value_t = 500)]
    pub runs: usize,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Start::Sampled)]
    pub initial_state: Start,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct LoglikArgs {
    #[arg(long, default_value = "example1")]
    pub model: String,
    #[arg(long, default_value = "svd-kf")]
    pub filter: String,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Start::Sampled)]
    pub initial_state: Start,
    #[arg(long, value_enum, default_value_t = Method::Svd)]
    pub method: Method,
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or input; exit code 2.
    Input(String),
    /// Exit code 1.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Loglik(a) => cmd_loglik(a),
    }
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| internal(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_model(name: &str) -> Result<StateSpaceModel, CliError> {
    StateSpaceModel::resolve(name).map_err(|e| input(format!("model `{name}`: {e}")))
}

fn positive(name: &str, value: usize) -> Result<(), CliError> {
    if value == 0 {
        return Err(input(format!("--{name} must be at least 1")));
    }
    Ok(())
}

/// `v` with `digits` significant digits; NaN and infinities as literal tokens.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        // rounding can carry into a new leading digit, e.g. 9.999995 → 10.00000
        let rounded: f64 = s.parse().unwrap_or(v);
        if rounded != 0.0 && rounded.abs().log10().floor() as i32 != exp {
            return format_sig(rounded, digits);
        }
        s
    } else {
        format!("{v:.prec$e}", prec = digits - 1)
    }
}

fn cell(v: f64) -> String {
    format_sig(v, 6)
}

pub fn write_trajectory(out: &mut dyn Write, t: &Trajectory) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let (n, m, d) = (t.states.ncols(), t.measurements.ncols(), t.controls.ncols());
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=m).map(|i| format!("z_{i}")));
    header.extend((1..=d).map(|i| format!("u_{i}")));
    w.write_record(&header)?;
    for k in 1..=t.horizon() {
        let mut row = vec![k.to_string()];
        // full round-trip precision so the file can be fed back in
        row.extend(t.states.row(k - 1).iter().map(|v| v.to_string()));
        row.extend(t.measurements.row(k - 1).iter().map(|v| v.to_string()));
        row.extend(t.controls.row(k - 1).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    positive("steps", a.steps)?;
    let model = load_model(&a.model)?;
    let t = simulate_with(&model, a.steps, None, a.seed, a.initial_state.into()).map_err(input)?;
    let mut out = open_output(&a.out)?;
    write_trajectory(&mut out, &t).map_err(internal)?;
    out.flush().map_err(internal)
}

#[derive(Debug, Serialize)]
pub struct RunRow {
    pub filter: FilterKind,
    pub rmse: Vec<f64>,
    pub mre_percent: Vec<Option<f64>>,
    pub rmse_norm: f64,
    pub cpu_seconds: f64,
    pub failed_runs: usize,
    pub failure: Option<FilterFailure>,
}

#[derive(Debug, Serialize)]
pub struct RunDocument {
    pub model: String,
    pub runs: usize,
    pub steps: usize,
    pub seed: u64,
    pub initial_state: InitialState,
    pub filters: Vec<RunRow>,
}

impl RunDocument {
    pub fn new(model: &str, initial_state: InitialState, report: &MonteCarloReport) -> Self {
        let filters = report
            .filters
            .iter()
            .map(|s| RunRow {
                filter: s.filter,
                rmse: s.errors.rmse.clone(),
                mre_percent: s.errors.mre_percent.clone(),
                rmse_norm: s.errors.rmse_norm,
                cpu_seconds: s.mean_seconds,
                failed_runs: s.failed_runs,
                failure: s.errors.failed,
            })
            .collect();
        Self { model: model.into(), runs: report.runs, steps: report.horizon, seed: report.base_seed, initial_state, filters }
    }
}

pub fn write_run_csv(out: &mut dyn Write, doc: &RunDocument) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = doc.filters.first().map_or(0, |r| r.rmse.len());
    let mut header = vec!["filter".to_string()];
    header.extend((1..=n).map(|i| format!("rmse_x{i}")));
    header.extend((1..=n).map(|i| format!("mre_x{i}")));
    header.extend(["cpu_seconds", "failed_runs", "failure"].map(String::from));
    w.write_record(&header)?;
    for r in &doc.filters {
        let mut row = vec![r.filter.name().to_string()];
        row.extend(r.rmse.iter().map(|v| cell(*v)));
        row.extend(r.mre_percent.iter().map(|v| v.map(cell).unwrap_or_default()));
        row.push(cell(r.cpu_seconds));
        row.push(r.failed_runs.to_string());
        row.push(r.failure.map(|f| f.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    positive("runs", a.runs)?;
    positive("steps", a.steps)?;
    let model = load_model(&a.model)?;
    let filters = FilterKind::parse_list(&a.filters).map_err(input)?;
    let config = RunConfig::new(model, filters, a.runs, a.steps, a.seed)
        .with_initial_state(a.initial_state.into())
        .with_timing(true);
    let report = bench::monte_carlo(&config).map_err(internal)?;
    let doc = RunDocument::new(&a.model, config.initial_state, &report);
    let mut out = open_output(&a.out)?;
    match a.format {
        Format::Csv => write_run_csv(&mut out, &doc).map_err(internal)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &doc).map_err(internal)?;
            writeln!(out).map_err(internal)?;
        }
    }
    out.flush().map_err(internal)
}

/// Parses `1e-1,1e-3` or a decade range `1e-1..1e-14`. Values must be
/// positive and strictly descending.
pub fn parse_deltas(s: &str) -> Result<Vec<f64>, Error> {
    let number = |t: &str| -> Result<f64, Error> {
        t.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("`{}` is not a number", t.trim())))
    };
    let deltas = if let Some((hi, lo)) = s.split_once("..") {
        let (hi, lo) = (number(hi)?, number(lo)?);
        if !(hi > 0.0 && lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidInput(format!("range `{s}` must run from the larger to the smaller positive value")));
        }
        let decades = (hi / lo).log10();
        if (decades - decades.round()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("range `{s}` must span whole decades")));
        }
        let (top, count) = (hi.log10().round() as i32, decades.round() as i32);
        (0..=count).map(|i| 10f64.powi(top - i)).collect()
    } else {
        s.split(',').filter(|t| !t.trim().is_empty()).map(number).collect::<Result<Vec<_>, _>>()?
    };
    if deltas.is_empty() {
        return Err(Error::InvalidInput("no δ values given".into()));
    }
    if let Some(bad) = deltas.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::InvalidInput(format!("δ must be positive, got {bad}")));
    }
    if deltas.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidInput("δ values must be strictly descending".into()));
    }
    Ok(deltas)
}

/// Table cell for one sweep entry: the norm, or the failure token.
pub fn sweep_token(c: &bench::SweepCell) -> String {
    match c.failure {
        Some(class) => class.token().to_string(),
        None => cell(c.rmse_norm),
    }
}

pub fn write_sweep_csv(out: &mut dyn Write, report: &SweepReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["filter".to_string()];
    header.extend(report.deltas.iter().map(|d| format!("{d:e}")));
    w.write_record(&header)?;
    for &kind in &report.filters {
        let mut row = vec![kind.name().to_string()];
        row.extend(report.row(kind).into_iter().map(sweep_token));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    positive("runs", a.runs)?;
    positive("steps", a.steps)?;
    let deltas = parse_deltas(&a.deltas).map_err(input)?;
    let filters = FilterKind::parse_list(&a.filters).map_err(input)?;
    // the model is rebuilt per δ; this one only seeds the config
    let seed_model = crate::model::example2(deltas[0]).map_err(input)?;
    let config =
        RunConfig::new(seed_model, filters, a.runs, a.steps, a.seed).with_initial_state(a.initial_state.into());
    let report = bench::sweep(&deltas, &config).map_err(internal)?;
    let mut out = open_output(&a.out)?;
    match a.format {
        Format::Csv => write_sweep_csv(&mut out, &report).map_err(internal)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &report).map_err(internal)?;
            writeln!(out).map_err(internal)?;
        }
    }
    out.flush().map_err(internal)
}

/// Runs `kind` over `t` and returns every step report.
pub fn step_reports(kind: FilterKind, model: &StateSpaceModel, t: &Trajectory) -> Result<Vec<StepReport>, CliError> {
    let mut filter = Filter::new(kind, model).map_err(input)?;
    (1..=t.horizon())
        .map(|k| {
            filter
                .step(model, k, &t.control(k), &t.measurement(k))
                .map_err(|f| input(format!("{kind} failed: {f}")))
        })
        .collect()
}

fn cmd_loglik(a: &LoglikArgs) -> Result<(), CliError> {
    positive("steps", a.steps)?;
    let kind: FilterKind = a.filter.parse().map_err(input)?;
    if a.method == Method::Svd && kind != FilterKind::SvdKf {
        return Err(input(format!("--method svd needs the SVD innovation factors of svd-kf, not {kind}")));
    }
    let model = load_model(&a.model)?;
    let t = simulate_with(&model, a.steps, None, a.seed, a.initial_state.into()).map_err(input)?;
    let reports = step_reports(kind, &model, &t)?;
    let value = match a.method {
        Method::Conventional => loglik_conventional(&reports),
        Method::Svd => loglik_svd(&reports),
    }
    .map_err(input)?;
    println!("{}", format_sig(value, 12));
    Ok(())
}

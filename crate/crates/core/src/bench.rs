//! Monte-Carlo comparison and ill-conditioning sweep.
//!
//! Every run draws one trajectory from its own seed and hands that same
//! trajectory to each selected filter. Runs are independent and may execute
//! on a rayon pool; results are collected in run order so reports are
//! reproducible regardless of thread count. Set `FK_THREADS` to cap the pool
//! (`0` or unset means one thread per core).

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{FailureClass, Filter, FilterFailure, FilterKind};
use crate::metrics::{ErrorReport, MRE_ZERO_FLOOR};
use crate::model::{example2, run_seed, simulate_with, InitialState, StateSpaceModel, Trajectory};

/// The ill-conditioning grid `10⁻¹ … 10⁻¹⁴`.
pub fn default_deltas() -> Vec<f64> {
    (1..=14).map(|e| 10f64.powi(-e)).collect()
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: StateSpaceModel,
    pub filters: Vec<FilterKind>,
    pub runs: usize,
    pub horizon: usize,
    pub base_seed: u64,
    pub initial_state: InitialState,
    /// Runs sequentially so per-filter wall-clock means are not skewed by
    /// contention between threads.
    pub timing: bool,
}

impl RunConfig {
    pub fn new(model: StateSpaceModel, filters: Vec<FilterKind>, runs: usize, horizon: usize, base_seed: u64) -> Self {
        Self { model, filters, runs, horizon, base_seed, initial_state: InitialState::Sampled, timing: false }
    }

    pub fn with_initial_state(mut self, initial_state: InitialState) -> Self {
        self.initial_state = initial_state;
        self
    }

    pub fn with_timing(mut self, timing: bool) -> Self {
        self.timing = timing;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidInput("runs must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        if self.filters.is_empty() {
            return Err(Error::InvalidInput("no filters selected".into()));
        }
        self.model.validate()
    }
}

/// One filter's pass over one trajectory.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub kind: FilterKind,
    /// `K × n`; row `k−1` is `x̂_{k|k}`, NaN from the failing step on.
    pub estimates: DMatrix<f64>,
    pub failure: Option<FilterFailure>,
    pub elapsed: Duration,
    pub diagonal_reciprocals: u64,
    /// Sum of the per-step log-likelihood increments.
    pub loglik: f64,
    pub trajectory_hash: u64,
}

/// Runs `kind` over the whole trajectory, recording rather than propagating
/// filter failures.
pub fn run_filter(kind: FilterKind, model: &StateSpaceModel, trajectory: &Trajectory) -> Result<FilterRun> {
    let trajectory_hash = trajectory.content_hash();
    let horizon = trajectory.horizon();
    let mut estimates = DMatrix::from_element(horizon, model.state_dim(), f64::NAN);
    let mut filter = Filter::new(kind, model)?;
    let mut loglik = 0.0;
    let start = Instant::now();
    for k in 1..=horizon {
        match filter.step(model, k, &trajectory.control(k), &trajectory.measurement(k)) {
            Ok(report) => {
                loglik += report.loglik_increment;
                estimates.set_row(k - 1, &filter.state().x_hat.transpose());
            }
            Err(_) => {
                loglik = f64::NAN;
                break;
            }
        }
    }
    let elapsed = start.elapsed();
    Ok(FilterRun {
        kind,
        estimates,
        failure: filter.failure(),
        elapsed,
        diagonal_reciprocals: filter.diagonal_reciprocals(),
        loglik,
        trajectory_hash,
    })
}

/// Trajectory `j` of a configuration and every filter's pass over it.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: usize,
    pub trajectory: Trajectory,
    pub filters: Vec<FilterRun>,
}

pub fn run_once(config: &RunConfig, run: usize) -> Result<RunOutcome> {
    let seed = run_seed(config.base_seed, run as u64);
    let trajectory = simulate_with(&config.model, config.horizon, None, seed, config.initial_state)?;
    let filters = config
        .filters
        .iter()
        .map(|&kind| run_filter(kind, &config.model, &trajectory))
        .collect::<Result<Vec<_>>>()?;
    let hash = trajectory.content_hash();
    if filters.iter().any(|f| f.trajectory_hash != hash) {
        return Err(Error::InvalidInput(format!("run {run}: filters saw different trajectories")));
    }
    Ok(RunOutcome { run, trajectory, filters })
}

/// Thread count from `FK_THREADS`; `None` lets rayon decide.
pub fn thread_limit() -> Option<usize> {
    std::env::var("FK_THREADS").ok()?.trim().parse::<usize>().ok().filter(|&n| n > 0)
}

fn all_runs(config: &RunConfig) -> Result<Vec<RunOutcome>> {
    if config.timing {
        return (0..config.runs).map(|j| run_once(config, j)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_limit().unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| (0..config.runs).into_par_iter().map(|j| run_once(config, j)).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterSummary {
    pub filter: FilterKind,
    pub errors: ErrorReport,
    /// Worst failure class over all runs.
    pub failure_class: Option<FailureClass>,
    pub failed_runs: usize,
    pub mean_seconds: f64,
    pub diagonal_reciprocals: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub horizon: usize,
    pub base_seed: u64,
    pub filters: Vec<FilterSummary>,
}

impl MonteCarloReport {
    pub fn summary(&self, kind: FilterKind) -> Option<&FilterSummary> {
        self.filters.iter().find(|s| s.filter == kind)
    }
}

/// Per-filter error and timing summary over `config.runs` runs.
pub fn monte_carlo(config: &RunConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let outcomes = all_runs(config)?;
    summarize(config, &outcomes)
}

/// Aggregates already computed runs; `outcomes` must be in run order.
pub fn summarize(config: &RunConfig, outcomes: &[RunOutcome]) -> Result<MonteCarloReport> {
    let truth: Vec<DMatrix<f64>> = outcomes.iter().map(|o| o.trajectory.states.clone()).collect();
    let mut filters = Vec::with_capacity(config.filters.len());
    for (slot, &kind) in config.filters.iter().enumerate() {
        let runs: Vec<&FilterRun> = outcomes.iter().map(|o| &o.filters[slot]).collect();
        let estimates: Vec<DMatrix<f64>> = runs.iter().map(|r| r.estimates.clone()).collect();
        let first_failure = runs.iter().find_map(|r| r.failure);
        let errors = ErrorReport::from_runs(&truth, &estimates, first_failure, MRE_ZERO_FLOOR)?;
        let failure_class = runs.iter().filter_map(|r| r.failure.map(|f| f.cause.class())).max();
        let total: Duration = runs.iter().map(|r| r.elapsed).sum();
        filters.push(FilterSummary {
            filter: kind,
            errors,
            failure_class,
            failed_runs: runs.iter().filter(|r| r.failure.is_some()).count(),
            mean_seconds: total.as_secs_f64() / runs.len() as f64,
            diagonal_reciprocals: runs.iter().map(|r| r.diagonal_reciprocals).sum(),
        });
    }
    Ok(MonteCarloReport { runs: config.runs, horizon: config.horizon, base_seed: config.base_seed, filters })
}

/// One `(δ, filter)` entry of the sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub delta: f64,
    pub filter: FilterKind,
    pub rmse_norm: f64,
    pub failure: Option<FailureClass>,
}

impl SweepCell {
    pub fn is_finite(&self) -> bool {
        self.failure.is_none() && self.rmse_norm.is_finite()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub deltas: Vec<f64>,
    pub filters: Vec<FilterKind>,
    pub cells: Vec<SweepCell>,
    /// Mean wall-clock seconds per filter pass, averaged over every δ.
    pub mean_seconds: Vec<(FilterKind, f64)>,
}

impl SweepReport {
    pub fn cell(&self, delta: f64, kind: FilterKind) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.delta == delta && c.filter == kind)
    }

    /// Cells of one filter in δ order.
    pub fn row(&self, kind: FilterKind) -> Vec<&SweepCell> {
        self.deltas.iter().filter_map(|&d| self.cell(d, kind)).collect()
    }

    /// Largest δ at which `kind` produced a non-finite cell.
    pub fn first_failure(&self, kind: FilterKind) -> Option<f64> {
        self.row(kind).into_iter().find(|c| !c.is_finite()).map(|c| c.delta)
    }
}

/// Runs the Monte-Carlo comparison on the ill-conditioned model at each δ.
///
/// `config.model` is ignored; each δ builds its own model.
pub fn sweep(deltas: &[f64], config: &RunConfig) -> Result<SweepReport> {
    if deltas.is_empty() {
        return Err(Error::InvalidInput("no δ values given".into()));
    }
    if let Some(bad) = deltas.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::InvalidInput(format!("δ must be positive, got {bad}")));
    }
    let mut cells = Vec::with_capacity(deltas.len() * config.filters.len());
    let mut seconds = vec![0.0; config.filters.len()];
    for &delta in deltas {
        let cfg = RunConfig { model: example2(delta)?, ..config.clone() };
        let report = monte_carlo(&cfg)?;
        for (slot, s) in report.filters.iter().enumerate() {
            seconds[slot] += s.mean_seconds;
            cells.push(SweepCell { delta, filter: s.filter, rmse_norm: s.errors.rmse_norm, failure: s.failure_class });
        }
    }
    let mean_seconds =
        config.filters.iter().zip(seconds).map(|(&k, s)| (k, s / deltas.len() as f64)).collect();
    Ok(SweepReport { deltas: deltas.to_vec(), filters: config.filters.clone(), cells, mean_seconds })
}

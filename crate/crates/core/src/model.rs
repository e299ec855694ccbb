//! Linear Gaussian state-space models and trajectory simulation.
//!
//! ```text
//! x_k = F x_{k-1} + B u_{k-1} + G w_{k-1},   w ~ N(0, Θ)
//! z_k = H x_k + v_k,                         v ~ N(0, R)
//! x_0 ~ N(x̄_0, Π_0)
//! ```

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::arrays::{check_symmetric, psd_svd_factor};
use crate::error::{Error, Result};

/// A model matrix that may be overridden at a given step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelField {
    F,
    B,
    G,
    H,
    Theta,
    R,
}

impl ModelField {
    fn name(self) -> &'static str {
        match self {
            ModelField::F => "f",
            ModelField::B => "b",
            ModelField::G => "g",
            ModelField::H => "h",
            ModelField::Theta => "theta",
            ModelField::R => "r",
        }
    }
}

/// Replaces one matrix at step `k`.
///
/// Step `k` covers the transition `x_{k-1} → x_k` (so `F`, `B`, `G` and
/// `Θ` carry index `k-1` in the model equations) and the measurement `z_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub k: usize,
    pub field: ModelField,
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub f: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x0_mean: DVector<f64>,
    pub pi0: DMatrix<f64>,
    pub overrides: Vec<Override>,
}

/// The matrices in force at one step.
#[derive(Debug, Clone, Copy)]
pub struct StepMatrices<'a> {
    pub f: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
    pub g: &'a DMatrix<f64>,
    pub h: &'a DMatrix<f64>,
    pub theta: &'a DMatrix<f64>,
    pub r: &'a DMatrix<f64>,
}

impl StateSpaceModel {
    /// Builds and validates a time-invariant model.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        f: DMatrix<f64>,
        b: DMatrix<f64>,
        g: DMatrix<f64>,
        h: DMatrix<f64>,
        theta: DMatrix<f64>,
        r: DMatrix<f64>,
        x0_mean: DVector<f64>,
        pi0: DMatrix<f64>,
    ) -> Result<Self> {
        let model = Self { f, b, g, h, theta, r, x0_mean, pi0, overrides: Vec::new() };
        model.validate()?;
        Ok(model)
    }

    pub fn with_overrides(mut self, overrides: Vec<Override>) -> Result<Self> {
        self.overrides = overrides;
        self.validate()?;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn noise_dim(&self) -> usize {
        self.g.ncols()
    }

    /// True when no override touches `Θ`, `G` or `R`, so noise factors can be
    /// computed once.
    pub fn has_constant_noise(&self) -> bool {
        !self
            .overrides
            .iter()
            .any(|o| matches!(o.field, ModelField::Theta | ModelField::R | ModelField::G))
    }

    pub fn at(&self, k: usize) -> StepMatrices<'_> {
        let mut step = StepMatrices {
            f: &self.f,
            b: &self.b,
            g: &self.g,
            h: &self.h,
            theta: &self.theta,
            r: &self.r,
        };
        for o in self.overrides.iter().filter(|o| o.k == k) {
            match o.field {
                ModelField::F => step.f = &o.matrix,
                ModelField::B => step.b = &o.matrix,
                ModelField::G => step.g = &o.matrix,
                ModelField::H => step.h = &o.matrix,
                ModelField::Theta => step.theta = &o.matrix,
                ModelField::R => step.r = &o.matrix,
            }
        }
        step
    }

    /// Checks dimensions, symmetry and semidefiniteness of every matrix,
    /// including overrides. `R` only needs to be semidefinite here; filters
    /// that invert it check definiteness themselves.
    pub fn validate(&self) -> Result<()> {
        let n = self.f.nrows();
        let m = self.h.nrows();
        let d = self.b.ncols();
        let p = self.g.ncols();
        let expect = |name: &str, mat: &DMatrix<f64>, rows: usize, cols: usize| -> Result<()> {
            if mat.shape() != (rows, cols) {
                return Err(Error::InvalidModel(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} holds non-finite entries")));
            }
            Ok(())
        };
        if n == 0 || m == 0 {
            return Err(Error::InvalidModel("state and measurement dimensions must be positive".into()));
        }
        expect("f", &self.f, n, n)?;
        expect("b", &self.b, n, d)?;
        expect("g", &self.g, n, p)?;
        expect("h", &self.h, m, n)?;
        expect("theta", &self.theta, p, p)?;
        expect("r", &self.r, m, m)?;
        expect("pi0", &self.pi0, n, n)?;
        if self.x0_mean.len() != n || self.x0_mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!("x0_mean must be a finite {n}-vector")));
        }
        for (name, mat) in [("theta", &self.theta), ("r", &self.r), ("pi0", &self.pi0)] {
            check_psd(name, mat)?;
        }
        for o in &self.overrides {
            let (rows, cols) = match o.field {
                ModelField::F => (n, n),
                ModelField::B => (n, d),
                ModelField::G => (n, p),
                ModelField::H => (m, n),
                ModelField::Theta => (p, p),
                ModelField::R => (m, m),
            };
            let label = format!("override {} at k={}", o.field.name(), o.k);
            expect(&label, &o.matrix, rows, cols)?;
            if matches!(o.field, ModelField::Theta | ModelField::R) {
                check_psd(&label, &o.matrix)?;
            }
        }
        Ok(())
    }

    /// Parses a model from its JSON document form.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Resolves `"example1"`, `"example2:<delta>"` or a path to a JSON model file.
    pub fn resolve(name: &str) -> Result<Self> {
        if let Ok(preset) = name.parse::<Preset>() {
            return preset.build();
        }
        if name.starts_with("example") {
            return Err(Error::InvalidInput(format!("unknown preset `{name}`")));
        }
        Self::load(name)
    }
}

fn check_psd(name: &str, mat: &DMatrix<f64>) -> Result<()> {
    check_symmetric(mat).map_err(|e| Error::InvalidModel(format!("{name}: {e}")))?;
    psd_svd_factor(mat).map_err(|e| Error::InvalidModel(format!("{name}: {e}")))?;
    Ok(())
}

/// Named models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    Example1,
    Example2 { delta: f64 },
}

impl Preset {
    pub fn build(self) -> Result<StateSpaceModel> {
        match self {
            Preset::Example1 => Ok(example1()),
            Preset::Example2 { delta } => example2(delta),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "example1" {
            return Ok(Preset::Example1);
        }
        if let Some(rest) = s.strip_prefix("example2:") {
            let delta: f64 = rest
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad delta in `{s}`")))?;
            return Ok(Preset::Example2 { delta });
        }
        Err(Error::InvalidInput(format!("unknown preset `{s}`")))
    }
}

fn satellite_transition() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 1.0, 0.5, 0.5, //
            0.0, 1.0, 1.0, 1.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 0.606,
        ],
    )
}

const SATELLITE_Q: f64 = 0.63e-2;

fn satellite_process_noise() -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 0.0, SATELLITE_Q]))
}

/// In-track motion of a satellite on a circular orbit, observed through its
/// first state component.
pub fn example1() -> StateSpaceModel {
    StateSpaceModel {
        f: satellite_transition(),
        b: DMatrix::zeros(4, 0),
        g: DMatrix::identity(4, 4),
        h: DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]),
        theta: satellite_process_noise(),
        r: DMatrix::identity(1, 1),
        x0_mean: DVector::zeros(4),
        pi0: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0, 1e-2])),
        overrides: Vec::new(),
    }
}

/// The satellite dynamics with two nearly collinear measurements. As `delta`
/// approaches machine precision the innovation covariance becomes singular
/// in floating point.
pub fn example2(delta: f64) -> Result<StateSpaceModel> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(StateSpaceModel {
        h: DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0 + delta]),
        r: DMatrix::identity(2, 2) * (delta * delta),
        pi0: DMatrix::identity(4, 4),
        ..example1()
    })
}

/// The JSON document form of a model: row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub f: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub g: Option<Vec<Vec<f64>>>,
    pub h: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub x0_mean: Vec<f64>,
    pub pi0: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<OverrideFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverrideFile {
    pub k: usize,
    pub field: ModelField,
    pub matrix: Vec<Vec<f64>>,
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], empty_cols: usize) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, empty_cols));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidModel(format!("{name}: ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TryFrom<ModelFile> for StateSpaceModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let f = matrix_from_rows("f", &file.f, 0)?;
        let n = f.nrows();
        let b = match &file.b {
            Some(rows) if !rows.is_empty() => matrix_from_rows("b", rows, 0)?,
            _ => DMatrix::zeros(n, 0),
        };
        let g = match &file.g {
            Some(rows) => matrix_from_rows("g", rows, 0)?,
            None => DMatrix::identity(n, n),
        };
        let overrides = file
            .overrides
            .iter()
            .map(|o| {
                Ok(Override {
                    k: o.k,
                    field: o.field,
                    matrix: matrix_from_rows(o.field.name(), &o.matrix, 0)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = StateSpaceModel {
            f,
            b,
            g,
            h: matrix_from_rows("h", &file.h, n)?,
            theta: matrix_from_rows("theta", &file.theta, 0)?,
            r: matrix_from_rows("r", &file.r, 0)?,
            x0_mean: DVector::from_vec(file.x0_mean),
            pi0: matrix_from_rows("pi0", &file.pi0, 0)?,
            overrides,
        };
        model.validate()?;
        Ok(model)
    }
}

impl From<&StateSpaceModel> for ModelFile {
    fn from(m: &StateSpaceModel) -> Self {
        ModelFile {
            f: matrix_to_rows(&m.f),
            b: Some(matrix_to_rows(&m.b)),
            g: Some(matrix_to_rows(&m.g)),
            h: matrix_to_rows(&m.h),
            theta: matrix_to_rows(&m.theta),
            r: matrix_to_rows(&m.r),
            x0_mean: m.x0_mean.iter().copied().collect(),
            pi0: matrix_to_rows(&m.pi0),
            overrides: m
                .overrides
                .iter()
                .map(|o| OverrideFile { k: o.k, field: o.field, matrix: matrix_to_rows(&o.matrix) })
                .collect(),
        }
    }
}

/// One simulated realization. Row `k-1` of `states` and `measurements`
/// holds `x_k` and `z_k`; row `k-1` of `controls` holds `u_{k-1}`, the input
/// that drives `x_{k-1} → x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_state: DVector<f64>,
    pub states: DMatrix<f64>,
    pub measurements: DMatrix<f64>,
    pub controls: DMatrix<f64>,
    pub seed: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.nrows()
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.row(k - 1).transpose()
    }

    pub fn measurement(&self, k: usize) -> DVector<f64> {
        self.measurements.row(k - 1).transpose()
    }

    pub fn control(&self, k: usize) -> DVector<f64> {
        self.controls.row(k - 1).transpose()
    }

    /// Hash of every stored value, bit for bit.
    pub fn content_hash(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        self.seed.hash(&mut hasher);
        for m in [&self.states, &self.measurements, &self.controls] {
            m.shape().hash(&mut hasher);
            for v in m.iter() {
                v.to_bits().hash(&mut hasher);
            }
        }
        for v in self.initial_state.iter() {
            v.to_bits().hash(&mut hasher);
        }
        hasher.finish()
    }
}

/// Random stream roles within one simulation seed.
#[derive(Debug, Clone, Copy)]
enum Stream {
    InitialState = 0,
    ProcessNoise = 1,
    MeasurementNoise = 2,
}

fn stream(seed: u64, role: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(role as u64);
    rng
}

fn gaussian(rng: &mut ChaCha20Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

/// `Q D^{1/2}`, a factor `S` with `S Sᵀ` equal to the covariance.
fn sampling_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (q, d_sqrt) = psd_svd_factor(cov).map_err(|e| Error::InvalidModel(e.to_string()))?;
    Ok(q * DMatrix::from_diagonal(&d_sqrt))
}

/// Where the true trajectory starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// `x₀ ~ N(x̄₀, Π₀)`.
    #[default]
    Sampled,
    /// `x₀ = x̄₀`; the filters still start from `(x̄₀, Π₀)`.
    Mean,
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sampled" => Ok(InitialState::Sampled),
            "mean" => Ok(InitialState::Mean),
            other => Err(Error::InvalidInput(format!("unknown initial state mode `{other}` (expected sampled or mean)"))),
        }
    }
}

/// Draws one trajectory of `horizon` steps with `x₀ ~ N(x̄₀, Π₀)`.
///
/// Each seed owns three ChaCha20 streams (initial state, process noise,
/// measurement noise), so changing one dimension never shifts the draws of
/// another. `controls` defaults to zero.
pub fn simulate(
    model: &StateSpaceModel,
    horizon: usize,
    controls: Option<&DMatrix<f64>>,
    seed: u64,
) -> Result<Trajectory> {
    simulate_with(model, horizon, controls, seed, InitialState::Sampled)
}

/// [`simulate`] with a choice of how the true initial state is drawn.
///
/// The noise streams do not depend on `initial`, so both modes see the same
/// process and measurement noise for a given seed.
pub fn simulate_with(
    model: &StateSpaceModel,
    horizon: usize,
    controls: Option<&DMatrix<f64>>,
    seed: u64,
    initial: InitialState,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    model.validate()?;
    let n = model.state_dim();
    let m = model.measurement_dim();
    let d = model.control_dim();
    let controls = match controls {
        Some(c) if c.shape() == (horizon, d) => c.clone(),
        Some(c) => {
            return Err(Error::Dimension(format!(
                "controls are {}x{}, expected {horizon}x{d}",
                c.nrows(),
                c.ncols()
            )))
        }
        None => DMatrix::zeros(horizon, d),
    };

    let mut x0_rng = stream(seed, Stream::InitialState);
    let mut w_rng = stream(seed, Stream::ProcessNoise);
    let mut v_rng = stream(seed, Stream::MeasurementNoise);

    let x0 = match initial {
        InitialState::Sampled => &model.x0_mean + sampling_factor(&model.pi0)? * gaussian(&mut x0_rng, n),
        InitialState::Mean => model.x0_mean.clone(),
    };

    let cached = if model.has_constant_noise() {
        Some((sampling_factor(&model.theta)?, sampling_factor(&model.r)?))
    } else {
        None
    };

    let mut states = DMatrix::zeros(horizon, n);
    let mut measurements = DMatrix::zeros(horizon, m);
    let mut x = x0.clone();
    for k in 1..=horizon {
        let step = model.at(k);
        let owned;
        let (w_factor, v_factor) = match &cached {
            Some((w, v)) => (w, v),
            None => {
                owned = (sampling_factor(step.theta)?, sampling_factor(step.r)?);
                (&owned.0, &owned.1)
            }
        };
        let u = controls.row(k - 1).transpose();
        let w = w_factor * gaussian(&mut w_rng, step.theta.nrows());
        x = step.f * &x + step.b * u + step.g * w;
        let v = v_factor * gaussian(&mut v_rng, m);
        let z = step.h * &x + v;
        states.set_row(k - 1, &x.transpose());
        measurements.set_row(k - 1, &z.transpose());
    }
    Ok(Trajectory { initial_state: x0, states, measurements, controls, seed })
}

/// Seed of Monte-Carlo run `run` derived from `base`: the `run`-th output of
/// a SplitMix64 sequence started at `base`.
pub fn run_seed(base: u64, run: u64) -> u64 {
    let mut z = base.wrapping_add((run.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

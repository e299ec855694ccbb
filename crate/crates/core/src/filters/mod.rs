//! Five algebraically equivalent Kalman filter implementations.
//!
//! | kind       | covariance kept as          | posterior covariance form |
//! |------------|-----------------------------|---------------------------|
//! | `kf`       | full `P`                    | `(I − KH)P`               |
//! | `srkf`     | upper Cholesky `S`, `SᵀS=P` | QR array update           |
//! | `udkf`     | `U D Uᵀ`                    | Thornton MWGS + Bierman   |
//! | `svd-srkf` | `Q D^{1/2}`                 | information form via SVD  |
//! | `svd-kf`   | `Q D^{1/2}`                 | Joseph form via SVD       |
//!
//! Each module exposes its time and measurement updates as free functions
//! over [`FilterState`]. [`Filter`] wraps them with noise-factor caching and
//! the terminal failure status a benchmark needs: a filter that produces a
//! non-finite value stops and remembers why, it never panics.

pub mod conventional;
pub mod loglik;
pub mod square_root;
pub mod svd_kf;
pub mod svd_srkf;
pub mod ud;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arrays::{symmetrize, UdPair};
use crate::error::{Error, Result};
use crate::model::{StateSpaceModel, StepMatrices};

pub use loglik::{loglik_conventional, loglik_svd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterKind {
    #[serde(rename = "kf")]
    Kf,
    #[serde(rename = "srkf")]
    Srkf,
    #[serde(rename = "udkf")]
    Udkf,
    #[serde(rename = "svd-srkf")]
    SvdSrkf,
    #[serde(rename = "svd-kf")]
    SvdKf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 5] =
        [FilterKind::Kf, FilterKind::Srkf, FilterKind::Udkf, FilterKind::SvdSrkf, FilterKind::SvdKf];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Kf => "kf",
            FilterKind::Srkf => "srkf",
            FilterKind::Udkf => "udkf",
            FilterKind::SvdSrkf => "svd-srkf",
            FilterKind::SvdKf => "svd-kf",
        }
    }

    /// Parses a comma-separated list, or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<FilterKind>> {
        if s.trim() == "all" {
            return Ok(Self::ALL.to_vec());
        }
        let mut kinds = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let kind: FilterKind = part.parse()?;
            if !kinds.contains(&kind) {
                kinds.push(kind);
            }
        }
        if kinds.is_empty() {
            return Err(Error::InvalidInput("empty filter list".into()));
        }
        Ok(kinds)
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "kf" => Ok(FilterKind::Kf),
            "srkf" | "sr-kf" => Ok(FilterKind::Srkf),
            "udkf" | "ud-kf" => Ok(FilterKind::Udkf),
            "svd-srkf" | "svdsrkf" => Ok(FilterKind::SvdSrkf),
            "svd-kf" | "svdkf" => Ok(FilterKind::SvdKf),
            other => Err(Error::InvalidInput(format!("unknown filter `{other}`"))),
        }
    }
}

/// How a filter stores its error covariance.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceRepr {
    Full(DMatrix<f64>),
    /// Upper-triangular `S` with `SᵀS = P`.
    Chol(DMatrix<f64>),
    Ud(UdPair),
    /// `P = Q diag(d_sqrt)² Qᵀ`.
    Svd { q: DMatrix<f64>, d_sqrt: DVector<f64> },
}

impl CovarianceRepr {
    pub fn dim(&self) -> usize {
        match self {
            CovarianceRepr::Full(p) | CovarianceRepr::Chol(p) => p.nrows(),
            CovarianceRepr::Ud(ud) => ud.d.len(),
            CovarianceRepr::Svd { d_sqrt, .. } => d_sqrt.len(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            CovarianceRepr::Full(p) | CovarianceRepr::Chol(p) => p.iter().all(|v| v.is_finite()),
            CovarianceRepr::Ud(ud) => ud.u.iter().chain(ud.d.iter()).all(|v| v.is_finite()),
            CovarianceRepr::Svd { q, d_sqrt } => q.iter().chain(d_sqrt.iter()).all(|v| v.is_finite()),
        }
    }

    fn has_nan(&self) -> bool {
        match self {
            CovarianceRepr::Full(p) | CovarianceRepr::Chol(p) => p.iter().any(|v| v.is_nan()),
            CovarianceRepr::Ud(ud) => ud.u.iter().chain(ud.d.iter()).any(|v| v.is_nan()),
            CovarianceRepr::Svd { q, d_sqrt } => q.iter().chain(d_sqrt.iter()).any(|v| v.is_nan()),
        }
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        reconstruct_covariance(self)
    }
}

/// Multiplies the factors back into a symmetric matrix.
pub fn reconstruct_covariance(cov: &CovarianceRepr) -> DMatrix<f64> {
    match cov {
        CovarianceRepr::Full(p) => symmetrize(p),
        CovarianceRepr::Chol(s) => symmetrize(&(s.transpose() * s)),
        CovarianceRepr::Ud(ud) => ud.reconstruct(),
        CovarianceRepr::Svd { q, d_sqrt } => {
            let scaled = q * DMatrix::from_diagonal(d_sqrt);
            symmetrize(&(&scaled * scaled.transpose()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Prior,
    Posterior,
}

/// Estimate and covariance after the last completed update at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub cov: CovarianceRepr,
    pub k: usize,
    pub stage: Stage,
}

impl FilterState {
    pub fn new(x_hat: DVector<f64>, cov: CovarianceRepr) -> Self {
        Self { x_hat, cov, k: 0, stage: Stage::Posterior }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.cov.reconstruct()
    }

    fn check_finite(&self) -> std::result::Result<(), FailureCause> {
        if self.x_hat.iter().all(|v| v.is_finite()) && self.cov.is_finite() {
            return Ok(());
        }
        if self.x_hat.iter().any(|v| v.is_nan()) || self.cov.has_nan() {
            Err(FailureCause::NaN)
        } else {
            Err(FailureCause::Inf)
        }
    }
}

/// Outputs of one measurement update.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub k: usize,
    /// `e_k = z_k − H x̂_{k|k−1}`.
    pub innovation: DVector<f64>,
    /// `ē_k = Q_{R_e}ᵀ e_k`; SVD-KF only.
    pub normalized_innovation: Option<DVector<f64>>,
    pub innovation_cov: CovarianceRepr,
    pub gain: DMatrix<f64>,
    /// `K̄_k = P_{k|k−1} Hᵀ Q_{R_e}`; SVD-KF only.
    pub normalized_gain: Option<DMatrix<f64>>,
    /// This step's contribution to the log-likelihood, constant included.
    pub loglik_increment: f64,
}

/// Why a filter stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureCause {
    NaN,
    Inf,
    /// The conventional filter could not invert `R_e`.
    SingularInnovationCov,
    /// A diagonal entry of `D_P^{1/2}` is too small to invert.
    DiagonalInversionUnderflow,
    /// A diagonal entry of `D_{R_e}` is zero.
    InnovationCovSingular,
    /// A Cholesky, UD or SVD factorization of a noise covariance or pre-array failed.
    FactorizationFailure,
}

/// Coarse failure classes reported in sweep tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureClass {
    NaN,
    Inf,
    FactorizationFailure,
}

impl FailureCause {
    pub fn class(self) -> FailureClass {
        match self {
            FailureCause::NaN | FailureCause::SingularInnovationCov | FailureCause::InnovationCovSingular => {
                FailureClass::NaN
            }
            FailureCause::Inf | FailureCause::DiagonalInversionUnderflow => FailureClass::Inf,
            FailureCause::FactorizationFailure => FailureClass::FactorizationFailure,
        }
    }
}

impl FailureClass {
    pub fn token(self) -> &'static str {
        match self {
            FailureClass::NaN => "NaN",
            FailureClass::Inf => "Inf",
            FailureClass::FactorizationFailure => "FAIL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterFailure {
    pub cause: FailureCause,
    pub step: usize,
}

impl fmt::Display for FilterFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at step {}", self.cause, self.step)
    }
}

/// Maps a kernel error on a filter-built array to a failure cause.
pub(crate) fn kernel_failure(err: &Error, data: Option<&DMatrix<f64>>) -> FailureCause {
    match err {
        Error::InvalidInput(_) => match data {
            Some(m) if m.iter().any(|v| v.is_nan()) => FailureCause::NaN,
            Some(_) => FailureCause::Inf,
            None => FailureCause::NaN,
        },
        _ => FailureCause::FactorizationFailure,
    }
}

pub(crate) fn non_finite_cause<'a>(values: impl IntoIterator<Item = &'a f64>) -> Option<FailureCause> {
    let mut cause = None;
    for v in values {
        if v.is_nan() {
            return Some(FailureCause::NaN);
        }
        if v.is_infinite() {
            cause = Some(FailureCause::Inf);
        }
    }
    cause
}

/// One filter implementation behind a uniform stepping interface.
pub trait KalmanFilter: Send {
    fn kind(&self) -> FilterKind;

    fn state(&self) -> &FilterState;

    /// Time update from `k−1` to `k` with control `u_{k−1}`.
    fn predict(&mut self, step: &StepMatrices<'_>, u: &DVector<f64>) -> std::result::Result<(), FailureCause>;

    /// Measurement update with `z_k`.
    fn correct(&mut self, step: &StepMatrices<'_>, z: &DVector<f64>) -> std::result::Result<StepReport, FailureCause>;

    /// Number of reciprocals taken of the covariance's own diagonal factor.
    fn diagonal_reciprocals(&self) -> u64 {
        0
    }
}

/// Builds the implementation for `kind`, initialized at `(x̄₀, Π₀)`.
pub fn build(kind: FilterKind, model: &StateSpaceModel) -> Result<Box<dyn KalmanFilter>> {
    Ok(match kind {
        FilterKind::Kf => Box::new(conventional::ConventionalKf::new(model)?),
        FilterKind::Srkf => Box::new(square_root::SquareRootKf::new(model)?),
        FilterKind::Udkf => Box::new(ud::UdKf::new(model)?),
        FilterKind::SvdSrkf => Box::new(svd_srkf::SvdSrkf::new(model)?),
        FilterKind::SvdKf => Box::new(svd_kf::SvdKf::new(model)?),
    })
}

/// A filter plus its terminal failure status.
pub struct Filter {
    inner: Box<dyn KalmanFilter>,
    failure: Option<FilterFailure>,
}

impl Filter {
    pub fn new(kind: FilterKind, model: &StateSpaceModel) -> Result<Self> {
        Ok(Self { inner: build(kind, model)?, failure: None })
    }

    pub fn from_impl(inner: Box<dyn KalmanFilter>) -> Self {
        Self { inner, failure: None }
    }

    pub fn kind(&self) -> FilterKind {
        self.inner.kind()
    }

    pub fn state(&self) -> &FilterState {
        self.inner.state()
    }

    pub fn failure(&self) -> Option<FilterFailure> {
        self.failure
    }

    pub fn diagonal_reciprocals(&self) -> u64 {
        self.inner.diagonal_reciprocals()
    }

    /// Runs the time and measurement updates of step `k ≥ 1`.
    ///
    /// After the first failure every later call returns that same failure.
    pub fn step(
        &mut self,
        model: &StateSpaceModel,
        k: usize,
        u: &DVector<f64>,
        z: &DVector<f64>,
    ) -> std::result::Result<StepReport, FilterFailure> {
        if let Some(failure) = self.failure {
            return Err(failure);
        }
        let matrices = model.at(k);
        let outcome = self
            .inner
            .predict(&matrices, u)
            .and_then(|()| self.inner.correct(&matrices, z))
            .and_then(|report| {
                self.inner.state().check_finite()?;
                Ok(report)
            });
        outcome.map_err(|cause| {
            let failure = FilterFailure { cause, step: k };
            self.failure = Some(failure);
            failure
        })
    }
}

/// `F x̂ + B u`.
pub(crate) fn predict_state(step: &StepMatrices<'_>, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    if step.b.ncols() == 0 {
        step.f * x
    } else {
        step.f * x + step.b * u
    }
}

/// `−½ m ln 2π`.
pub(crate) fn gaussian_constant(m: usize) -> f64 {
    -0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln()
}

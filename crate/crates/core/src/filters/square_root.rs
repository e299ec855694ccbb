//! Cholesky square-root filter in array form.
//!
//! Covariances are carried as upper-triangular `S` with `SᵀS = P`. Both
//! updates triangularize a pre-array with Householder QR:
//!
//! ```text
//! time update:         [ S Fᵀ      ]  →  S⁻
//!                      [ Θ^{1/2} Gᵀ]
//!
//! measurement update:  [ R^{1/2}  0 ]  →  [ R_e^{1/2}  K̄ᵀ ]
//!                      [ S⁻ Hᵀ   S⁻ ]     [ 0         S⁺ ]
//! ```
//!
//! with `K = K̄ R_e^{-1/2}` applied through a triangular solve.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use super::{
    gaussian_constant, kernel_failure, predict_state, CovarianceRepr, FailureCause, FilterKind, FilterState,
    KalmanFilter, Stage, StepReport,
};
use crate::arrays::{cholesky_upper, qr_triangularize, PreArray};
use crate::error::Result;
use crate::model::{StateSpaceModel, StepMatrices};

/// Upper Cholesky factors of `Θ` and `R`.
#[derive(Debug, Clone)]
pub struct NoiseRoots {
    pub theta: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl NoiseRoots {
    pub fn new(theta: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Self> {
        Ok(Self { theta: cholesky_upper(theta)?, r: cholesky_upper(r)? })
    }
}

fn factor(cov: &CovarianceRepr) -> std::result::Result<DMatrix<f64>, FailureCause> {
    match cov {
        CovarianceRepr::Chol(s) => Ok(s.clone()),
        other => cholesky_upper(&other.reconstruct()).map_err(|_| FailureCause::FactorizationFailure),
    }
}

fn triangularize(data: DMatrix<f64>) -> std::result::Result<DMatrix<f64>, FailureCause> {
    let pre = PreArray::new(data.clone()).map_err(|e| kernel_failure(&e, Some(&data)))?;
    qr_triangularize(pre).map_err(|e| kernel_failure(&e, None))
}

pub fn time_update(
    state: &FilterState,
    step: &StepMatrices<'_>,
    theta_root: &DMatrix<f64>,
    u: &DVector<f64>,
) -> std::result::Result<FilterState, FailureCause> {
    let s = factor(&state.cov)?;
    let n = s.nrows();
    let p = theta_root.nrows();
    let mut pre = DMatrix::zeros(n + p, n);
    pre.rows_mut(0, n).copy_from(&(&s * step.f.transpose()));
    pre.rows_mut(n, p).copy_from(&(theta_root * step.g.transpose()));
    let prior = triangularize(pre)?;
    Ok(FilterState {
        x_hat: predict_state(step, &state.x_hat, u),
        cov: CovarianceRepr::Chol(prior),
        k: state.k + 1,
        stage: Stage::Prior,
    })
}

pub fn measurement_update(
    state: &FilterState,
    step: &StepMatrices<'_>,
    r_root: &DMatrix<f64>,
    z: &DVector<f64>,
) -> std::result::Result<(FilterState, StepReport), FailureCause> {
    let s = factor(&state.cov)?;
    let n = s.nrows();
    let m = r_root.nrows();
    let h = step.h;

    let mut pre = DMatrix::zeros(m + n, m + n);
    pre.view_mut((0, 0), (m, m)).copy_from(r_root);
    pre.view_mut((m, 0), (n, m)).copy_from(&(&s * h.transpose()));
    pre.view_mut((m, m), (n, n)).copy_from(&s);
    let post = triangularize(pre)?;

    let re_root = post.view((0, 0), (m, m)).clone_owned();
    let normalized_gain = post.view((0, m), (m, n)).transpose();
    let posterior = post.view((m, m), (n, n)).clone_owned();

    let innovation = z - h * &state.x_hat;
    // w = R_e^{-T/2} e
    let whitened = re_root
        .transpose()
        .solve_lower_triangular(&innovation)
        .ok_or(FailureCause::SingularInnovationCov)?;
    if let Some(cause) = super::non_finite_cause(whitened.iter()) {
        return Err(cause);
    }
    let x_hat = &state.x_hat + &normalized_gain * &whitened;
    let gain = re_root
        .solve_upper_triangular(&normalized_gain.transpose())
        .map(|t| t.transpose())
        .ok_or(FailureCause::SingularInnovationCov)?;

    let log_det: f64 = re_root.diagonal().iter().map(|d| 2.0 * d.abs().ln()).sum();
    let loglik_increment = gaussian_constant(m) - 0.5 * (log_det + whitened.norm_squared());

    let report = StepReport {
        k: state.k,
        innovation,
        normalized_innovation: None,
        innovation_cov: CovarianceRepr::Chol(re_root),
        gain,
        normalized_gain: None,
        loglik_increment,
    };
    let next = FilterState { x_hat, cov: CovarianceRepr::Chol(posterior), k: state.k, stage: Stage::Posterior };
    Ok((next, report))
}

/// One full time-plus-measurement step.
pub fn step(
    state: &FilterState,
    matrices: &StepMatrices<'_>,
    roots: &NoiseRoots,
    u: &DVector<f64>,
    z: &DVector<f64>,
) -> std::result::Result<(FilterState, StepReport), FailureCause> {
    let prior = time_update(state, matrices, &roots.theta, u)?;
    measurement_update(&prior, matrices, &roots.r, z)
}

pub struct SquareRootKf {
    state: FilterState,
    fixed_roots: Option<NoiseRoots>,
}

impl SquareRootKf {
    pub fn new(model: &StateSpaceModel) -> Result<Self> {
        let s0 = cholesky_upper(&model.pi0)?;
        let fixed_roots = if model.has_constant_noise() { Some(NoiseRoots::new(&model.theta, &model.r)?) } else { None };
        Ok(Self { state: FilterState::new(model.x0_mean.clone(), CovarianceRepr::Chol(s0)), fixed_roots })
    }

    fn roots(&self, step: &StepMatrices<'_>) -> std::result::Result<Cow<'_, NoiseRoots>, FailureCause> {
        match &self.fixed_roots {
            Some(r) => Ok(Cow::Borrowed(r)),
            None => NoiseRoots::new(step.theta, step.r).map(Cow::Owned).map_err(|_| FailureCause::FactorizationFailure),
        }
    }
}

impl KalmanFilter for SquareRootKf {
    fn kind(&self) -> FilterKind {
        FilterKind::Srkf
    }

    fn state(&self) -> &FilterState {
        &self.state
    }

    fn predict(&mut self, step: &StepMatrices<'_>, u: &DVector<f64>) -> std::result::Result<(), FailureCause> {
        let roots = self.roots(step)?;
        let next = time_update(&self.state, step, &roots.theta, u)?;
        self.state = next;
        Ok(())
    }

    fn correct(&mut self, step: &StepMatrices<'_>, z: &DVector<f64>) -> std::result::Result<StepReport, FailureCause> {
        let roots = self.roots(step)?;
        let (next, report) = measurement_update(&self.state, step, &roots.r, z)?;
        self.state = next;
        Ok(report)
    }
}

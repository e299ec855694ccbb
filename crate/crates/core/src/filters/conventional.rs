//! The conventional Kalman filter on the full covariance matrix.
//!
//! The posterior covariance is `(I − KH)P` with no symmetrization, so the
//! filter loses positive definiteness exactly the way a textbook
//! implementation does when `R_e` becomes ill-conditioned.

use nalgebra::{DMatrix, DVector};

use super::{
    gaussian_constant, predict_state, CovarianceRepr, FailureCause, FilterKind, FilterState, KalmanFilter, Stage,
    StepReport,
};
use crate::error::Result;
use crate::model::{StateSpaceModel, StepMatrices};

fn full(cov: &CovarianceRepr) -> DMatrix<f64> {
    match cov {
        CovarianceRepr::Full(p) => p.clone(),
        other => other.reconstruct(),
    }
}

/// `x̂ ← F x̂ + B u`, `P ← F P Fᵀ + G Θ Gᵀ`.
pub fn time_update(state: &FilterState, step: &StepMatrices<'_>, u: &DVector<f64>) -> FilterState {
    let p = full(&state.cov);
    let prior = step.f * p * step.f.transpose() + step.g * step.theta * step.g.transpose();
    FilterState {
        x_hat: predict_state(step, &state.x_hat, u),
        cov: CovarianceRepr::Full(prior),
        k: state.k + 1,
        stage: Stage::Prior,
    }
}

/// `R_e = HPHᵀ + R`, `K = PHᵀR_e⁻¹`, `x̂ ← x̂ + K e`, `P ← (I − KH)P`.
pub fn measurement_update(
    state: &FilterState,
    step: &StepMatrices<'_>,
    z: &DVector<f64>,
) -> std::result::Result<(FilterState, StepReport), FailureCause> {
    let p = full(&state.cov);
    let h = step.h;
    let innovation_cov = h * &p * h.transpose() + step.r;
    let innovation = z - h * &state.x_hat;
    if let Some(cause) = super::non_finite_cause(innovation_cov.iter()) {
        return Err(cause);
    }
    let inverse = innovation_cov.clone().try_inverse().ok_or(FailureCause::SingularInnovationCov)?;
    let gain = &p * h.transpose() * &inverse;
    let x_hat = &state.x_hat + &gain * &innovation;
    let n = p.nrows();
    let posterior = (DMatrix::identity(n, n) - &gain * h) * p;

    let m = innovation.len();
    let quad = innovation.dot(&(&inverse * &innovation));
    let loglik_increment = gaussian_constant(m) - 0.5 * (innovation_cov.determinant().ln() + quad);

    let report = StepReport {
        k: state.k,
        innovation,
        normalized_innovation: None,
        innovation_cov: CovarianceRepr::Full(innovation_cov),
        gain,
        normalized_gain: None,
        loglik_increment,
    };
    let next = FilterState { x_hat, cov: CovarianceRepr::Full(posterior), k: state.k, stage: Stage::Posterior };
    Ok((next, report))
}

/// `K = P⁻Hᵀ(HP⁻Hᵀ + R)⁻¹`.
pub fn gain_from_prior(prior: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let re = h * prior * h.transpose() + r;
    Some(prior * h.transpose() * re.try_inverse()?)
}

/// `K = P⁺HᵀR⁻¹`.
pub fn gain_from_posterior(posterior: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Some(posterior * h.transpose() * r.clone().try_inverse()?)
}

/// `P⁺ = (I − KH)P⁻`.
pub fn covariance_standard_form(prior: &DMatrix<f64>, gain: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = prior.nrows();
    (DMatrix::identity(n, n) - gain * h) * prior
}

/// `P⁺ = (P⁻⁻¹ + HᵀR⁻¹H)⁻¹`.
pub fn covariance_information_form(prior: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let info = prior.clone().try_inverse()? + h.transpose() * r.clone().try_inverse()? * h;
    info.try_inverse()
}

/// `P⁺ = (I − KH)P⁻(I − KH)ᵀ + KRKᵀ`.
pub fn covariance_joseph_form(
    prior: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = prior.nrows();
    let a = DMatrix::identity(n, n) - gain * h;
    &a * prior * a.transpose() + gain * r * gain.transpose()
}

pub struct ConventionalKf {
    state: FilterState,
}

impl ConventionalKf {
    pub fn new(model: &StateSpaceModel) -> Result<Self> {
        Ok(Self::from_state(FilterState::new(model.x0_mean.clone(), CovarianceRepr::Full(model.pi0.clone()))))
    }

    pub fn from_state(state: FilterState) -> Self {
        Self { state }
    }
}

impl KalmanFilter for ConventionalKf {
    fn kind(&self) -> FilterKind {
        FilterKind::Kf
    }

    fn state(&self) -> &FilterState {
        &self.state
    }

    fn predict(&mut self, step: &StepMatrices<'_>, u: &DVector<f64>) -> std::result::Result<(), FailureCause> {
        self.state = time_update(&self.state, step, u);
        Ok(())
    }

    fn correct(&mut self, step: &StepMatrices<'_>, z: &DVector<f64>) -> std::result::Result<StepReport, FailureCause> {
        let (next, report) = measurement_update(&self.state, step, z)?;
        self.state = next;
        Ok(report)
    }
}

//! SVD filter with a Joseph-form covariance update.
//!
//! Keeps `P = Q D Qᵀ` through `(Q, D^{1/2})`. Three SVD array updates run per
//! step:
//!
//! ```text
//! time update:     [ D^{1/2} Qᵀ Fᵀ       ]  = W [ D⁻^{1/2} ; 0 ] Q⁻ᵀ
//!                  [ D_Θ^{1/2} Q_Θᵀ Gᵀ   ]
//!
//! innovation:      [ D_R^{1/2} Q_Rᵀ      ]  = W [ D_Re^{1/2} ; 0 ] Q_Reᵀ
//!                  [ D⁻^{1/2} Q⁻ᵀ Hᵀ     ]
//!
//! K̄ = P⁻ Hᵀ Q_Re,   K = K̄ D_Re⁻¹ Q_Reᵀ
//!
//! Joseph update:   [ D⁻^{1/2} Q⁻ᵀ (I − KH)ᵀ ]  = W [ D⁺^{1/2} ; 0 ] Q⁺ᵀ
//!                  [ D_R^{1/2} Q_Rᵀ Kᵀ      ]
//!
//! ē = Q_Reᵀ e,   x̂⁺ = x̂⁻ + K̄ D_Re⁻¹ ē
//! ```
//!
//! The covariance diagonal `D^{1/2}` only ever multiplies; the one division
//! is by `D_Re`, the innovation covariance's singular values. Noise
//! covariances may be singular because they enter through their SVD factors.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use super::svd_srkf::{factor_pre_array, svd_factors, ReciprocalAudit};
use super::{
    gaussian_constant, predict_state, CovarianceRepr, FailureCause, FilterKind, FilterState, KalmanFilter, Stage,
    StepReport,
};
use crate::arrays::{cholesky_upper, psd_svd_factor};
use crate::error::Result;
use crate::model::{StateSpaceModel, StepMatrices};

/// How the noise covariances are split into array blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseFactorization {
    /// `D^{1/2} Qᵀ` from the SVD; works for any semidefinite covariance.
    #[default]
    Svd,
    /// Upper Cholesky factor in place of `D^{1/2} Qᵀ`.
    Cholesky,
}

/// Row blocks `A` with `AᵀA = Θ` and `AᵀA = R`.
#[derive(Debug, Clone)]
pub struct NoiseBlocks {
    pub theta: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl NoiseBlocks {
    pub fn new(theta: &DMatrix<f64>, r: &DMatrix<f64>, how: NoiseFactorization) -> Result<Self> {
        let block = |m: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            match how {
                NoiseFactorization::Svd => {
                    let (q, d_sqrt) = psd_svd_factor(m)?;
                    Ok(DMatrix::from_diagonal(&d_sqrt) * q.transpose())
                }
                NoiseFactorization::Cholesky => cholesky_upper(m),
            }
        };
        Ok(Self { theta: block(theta)?, r: block(r)? })
    }
}

pub fn time_update(
    state: &FilterState,
    step: &StepMatrices<'_>,
    theta_block: &DMatrix<f64>,
    u: &DVector<f64>,
) -> std::result::Result<FilterState, FailureCause> {
    let (q, d_sqrt) = svd_factors(&state.cov)?;
    let n = q.nrows();
    let p = theta_block.nrows();
    let mut pre = DMatrix::zeros(n + p, n);
    pre.rows_mut(0, n).copy_from(&(DMatrix::from_diagonal(&d_sqrt) * q.transpose() * step.f.transpose()));
    pre.rows_mut(n, p).copy_from(&(theta_block * step.g.transpose()));
    let post = factor_pre_array(pre)?;
    Ok(FilterState {
        x_hat: predict_state(step, &state.x_hat, u),
        cov: CovarianceRepr::Svd { q: post.v, d_sqrt: post.singular_values },
        k: state.k + 1,
        stage: Stage::Prior,
    })
}

/// `1 / σ²` for the innovation covariance's singular values `D_Re = σ²`.
fn innovation_precisions(re_sqrt: &DVector<f64>) -> std::result::Result<DVector<f64>, FailureCause> {
    let mut out = DVector::zeros(re_sqrt.len());
    for (i, s) in re_sqrt.iter().enumerate() {
        let inv = 1.0 / (s * s);
        if !inv.is_finite() {
            return Err(FailureCause::InnovationCovSingular);
        }
        out[i] = inv;
    }
    Ok(out)
}

pub fn measurement_update(
    state: &FilterState,
    step: &StepMatrices<'_>,
    r_block: &DMatrix<f64>,
    z: &DVector<f64>,
) -> std::result::Result<(FilterState, StepReport), FailureCause> {
    let (q, d_sqrt) = svd_factors(&state.cov)?;
    let n = q.nrows();
    let h = step.h;
    let m = h.nrows();
    let mr = r_block.nrows();
    let root = DMatrix::from_diagonal(&d_sqrt) * q.transpose();

    let mut pre = DMatrix::zeros(mr + n, m);
    pre.rows_mut(0, mr).copy_from(r_block);
    pre.rows_mut(mr, n).copy_from(&(&root * h.transpose()));
    let innovation_post = factor_pre_array(pre)?;
    let q_re = innovation_post.v;
    let re_sqrt = innovation_post.singular_values;

    // P⁻ Hᵀ = (D^{1/2}Qᵀ)ᵀ (D^{1/2}Qᵀ Hᵀ)
    let normalized_gain = root.transpose() * (&root * h.transpose()) * &q_re;
    let precisions = innovation_precisions(&re_sqrt)?;
    let gain = &normalized_gain * DMatrix::from_diagonal(&precisions) * q_re.transpose();

    let closed_loop = DMatrix::identity(n, n) - &gain * h;
    let mut pre = DMatrix::zeros(n + mr, n);
    pre.rows_mut(0, n).copy_from(&(&root * closed_loop.transpose()));
    pre.rows_mut(n, mr).copy_from(&(r_block * gain.transpose()));
    let joseph_post = factor_pre_array(pre)?;

    let innovation = z - h * &state.x_hat;
    let normalized_innovation = q_re.transpose() * &innovation;
    let x_hat = &state.x_hat + &normalized_gain * normalized_innovation.component_mul(&precisions);

    let log_det: f64 = re_sqrt.iter().map(|s| 2.0 * s.ln()).sum();
    let quad = normalized_innovation.component_mul(&normalized_innovation).dot(&precisions);
    let loglik_increment = gaussian_constant(m) - 0.5 * (log_det + quad);

    let report = StepReport {
        k: state.k,
        innovation,
        normalized_innovation: Some(normalized_innovation),
        innovation_cov: CovarianceRepr::Svd { q: q_re, d_sqrt: re_sqrt },
        gain,
        normalized_gain: Some(normalized_gain),
        loglik_increment,
    };
    let next = FilterState {
        x_hat,
        cov: CovarianceRepr::Svd { q: joseph_post.v, d_sqrt: joseph_post.singular_values },
        k: state.k,
        stage: Stage::Posterior,
    };
    Ok((next, report))
}

pub fn step(
    state: &FilterState,
    matrices: &StepMatrices<'_>,
    noise: &NoiseBlocks,
    u: &DVector<f64>,
    z: &DVector<f64>,
) -> std::result::Result<(FilterState, StepReport), FailureCause> {
    let prior = time_update(state, matrices, &noise.theta, u)?;
    measurement_update(&prior, matrices, &noise.r, z)
}

pub struct SvdKf {
    state: FilterState,
    factorization: NoiseFactorization,
    fixed_noise: Option<NoiseBlocks>,
    // Never invoked: the recursion has no reciprocal of D_P.
    audit: ReciprocalAudit,
}

impl SvdKf {
    pub fn new(model: &StateSpaceModel) -> Result<Self> {
        Self::with_factorization(model, NoiseFactorization::Svd)
    }

    pub fn with_factorization(model: &StateSpaceModel, factorization: NoiseFactorization) -> Result<Self> {
        let (q, d_sqrt) = psd_svd_factor(&model.pi0)?;
        let fixed_noise = if model.has_constant_noise() {
            Some(NoiseBlocks::new(&model.theta, &model.r, factorization)?)
        } else {
            None
        };
        Ok(Self {
            state: FilterState::new(model.x0_mean.clone(), CovarianceRepr::Svd { q, d_sqrt }),
            factorization,
            fixed_noise,
            audit: ReciprocalAudit::default(),
        })
    }

    fn noise(&self, step: &StepMatrices<'_>) -> std::result::Result<Cow<'_, NoiseBlocks>, FailureCause> {
        match &self.fixed_noise {
            Some(n) => Ok(Cow::Borrowed(n)),
            None => NoiseBlocks::new(step.theta, step.r, self.factorization)
                .map(Cow::Owned)
                .map_err(|_| FailureCause::FactorizationFailure),
        }
    }
}

impl KalmanFilter for SvdKf {
    fn kind(&self) -> FilterKind {
        FilterKind::SvdKf
    }

    fn state(&self) -> &FilterState {
        &self.state
    }

    fn predict(&mut self, step: &StepMatrices<'_>, u: &DVector<f64>) -> std::result::Result<(), FailureCause> {
        let noise = self.noise(step)?;
        let next = time_update(&self.state, step, &noise.theta, u)?;
        self.state = next;
        Ok(())
    }

    fn correct(&mut self, step: &StepMatrices<'_>, z: &DVector<f64>) -> std::result::Result<StepReport, FailureCause> {
        let noise = self.noise(step)?;
        let (next, report) = measurement_update(&self.state, step, &noise.r, z)?;
        self.state = next;
        Ok(report)
    }

    fn diagonal_reciprocals(&self) -> u64 {
        self.audit.count()
    }
}

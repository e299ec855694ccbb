//! SVD square-root filter in information form.
//!
//! Keeps `P = Q D Qᵀ` through `(Q, D^{1/2})` and updates:
//!
//! ```text
//! time update:         [ D^{1/2} Qᵀ Fᵀ ]  = W [ D⁻^{1/2} ; 0 ] Vᵀ,   Q⁻ = V
//!                      [ Θ^{1/2} Gᵀ    ]
//!
//! measurement update:  [ R^{-T/2} H Q⁻ ]  = W [ D⁺^{-1/2} ; 0 ] Vᵀ,  Q⁺ = Q⁻ V
//!                      [ D⁻^{-1/2}     ]
//!
//! K = Q⁺ D⁺ Q⁺ᵀ Hᵀ R⁻¹
//! ```
//!
//! Every step takes the reciprocal of `D⁻^{1/2}` and of the post-array
//! diagonal. Once the covariance approaches singularity these divisions
//! overflow; the filter reports that instead of clamping it.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use super::{
    gaussian_constant, non_finite_cause, predict_state, CovarianceRepr, FailureCause, FilterKind, FilterState,
    KalmanFilter, Stage, StepReport,
};
use crate::arrays::{cholesky_upper, psd_svd_factor, svd_array_update, PreArray, SvdPostArray};
use crate::error::{Error, Result};
use crate::model::{StateSpaceModel, StepMatrices};

/// Cholesky-based noise quantities: `Θ^{1/2}`, `R^{-T/2}` and `R⁻¹`.
#[derive(Debug, Clone)]
pub struct NoiseRoots {
    pub theta_root: DMatrix<f64>,
    pub r_inv_root_t: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
}

impl NoiseRoots {
    pub fn new(theta: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Self> {
        let r_root = cholesky_upper(r)?;
        let m = r.nrows();
        let r_inv_root_t = r_root
            .transpose()
            .solve_lower_triangular(&DMatrix::identity(m, m))
            .filter(|inv| inv.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::FactorizationFailure("R is singular".into()))?;
        let r_inv = r_inv_root_t.transpose() * &r_inv_root_t;
        Ok(Self { theta_root: cholesky_upper(theta)?, r_inv_root_t, r_inv })
    }
}

/// Counts reciprocals taken of covariance diagonal factors.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ReciprocalAudit {
    count: u64,
}

impl ReciprocalAudit {
    pub fn count(&self) -> u64 {
        self.count
    }

    /// Elementwise `1 / d`. A zero or subnormal entry is an underflow
    /// failure; an infinite result is an overflow failure.
    pub fn invert(&mut self, d: &DVector<f64>) -> std::result::Result<DVector<f64>, FailureCause> {
        let mut out = DVector::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            self.count += 1;
            if v.is_nan() {
                return Err(FailureCause::NaN);
            }
            if v.abs() < f64::MIN_POSITIVE {
                return Err(FailureCause::DiagonalInversionUnderflow);
            }
            let inv = 1.0 / v;
            if !inv.is_finite() {
                return Err(FailureCause::Inf);
            }
            out[i] = inv;
        }
        Ok(out)
    }
}

pub(crate) fn svd_factors(cov: &CovarianceRepr) -> std::result::Result<(DMatrix<f64>, DVector<f64>), FailureCause> {
    match cov {
        CovarianceRepr::Svd { q, d_sqrt } => Ok((q.clone(), d_sqrt.clone())),
        other => psd_svd_factor(&other.reconstruct()).map_err(|_| FailureCause::FactorizationFailure),
    }
}

pub(crate) fn factor_pre_array(data: DMatrix<f64>) -> std::result::Result<SvdPostArray, FailureCause> {
    if let Some(cause) = non_finite_cause(data.iter()) {
        return Err(cause);
    }
    let pre = PreArray::new(data).map_err(|_| FailureCause::FactorizationFailure)?;
    svd_array_update(pre).map_err(|_| FailureCause::FactorizationFailure)
}

pub fn time_update(
    state: &FilterState,
    step: &StepMatrices<'_>,
    theta_root: &DMatrix<f64>,
    u: &DVector<f64>,
) -> std::result::Result<FilterState, FailureCause> {
    let (q, d_sqrt) = svd_factors(&state.cov)?;
    let n = q.nrows();
    let p = theta_root.nrows();
    let mut pre = DMatrix::zeros(n + p, n);
    pre.rows_mut(0, n).copy_from(&(DMatrix::from_diagonal(&d_sqrt) * q.transpose() * step.f.transpose()));
    pre.rows_mut(n, p).copy_from(&(theta_root * step.g.transpose()));
    let post = factor_pre_array(pre)?;
    Ok(FilterState {
        x_hat: predict_state(step, &state.x_hat, u),
        cov: CovarianceRepr::Svd { q: post.v, d_sqrt: post.singular_values },
        k: state.k + 1,
        stage: Stage::Prior,
    })
}

pub fn measurement_update(
    state: &FilterState,
    step: &StepMatrices<'_>,
    noise: &NoiseRoots,
    audit: &mut ReciprocalAudit,
    z: &DVector<f64>,
) -> std::result::Result<(FilterState, StepReport), FailureCause> {
    let (q, d_sqrt) = svd_factors(&state.cov)?;
    let n = q.nrows();
    let h = step.h;
    let m = h.nrows();

    let d_inv_sqrt = audit.invert(&d_sqrt)?;
    let mut pre = DMatrix::zeros(m + n, n);
    pre.rows_mut(0, m).copy_from(&(&noise.r_inv_root_t * h * &q));
    pre.rows_mut(m, n).copy_from(&DMatrix::from_diagonal(&d_inv_sqrt));
    let post = factor_pre_array(pre)?;

    let posterior_d_sqrt = audit.invert(&post.singular_values)?;
    let posterior_q = &q * &post.v;
    // K = (Q⁺D⁺^{1/2}) (Q⁺D⁺^{1/2})ᵀ Hᵀ R⁻¹
    let scaled = &posterior_q * DMatrix::from_diagonal(&posterior_d_sqrt);
    let gain = &scaled * (scaled.transpose() * h.transpose() * &noise.r_inv);

    let innovation = z - h * &state.x_hat;
    let x_hat = &state.x_hat + &gain * &innovation;

    // R_e is not part of this recursion; it is rebuilt for diagnostics only.
    let projected = h * &q * DMatrix::from_diagonal(&d_sqrt);
    let innovation_cov = &projected * projected.transpose() + step.r;
    let loglik_increment = match innovation_cov.clone().cholesky() {
        Some(chol) => {
            let l = chol.l();
            let log_det: f64 = l.diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            let whitened = l.solve_lower_triangular(&innovation).unwrap_or_else(|| DVector::from_element(m, f64::NAN));
            gaussian_constant(m) - 0.5 * (log_det + whitened.norm_squared())
        }
        None => f64::NAN,
    };

    let report = StepReport {
        k: state.k,
        innovation,
        normalized_innovation: None,
        innovation_cov: CovarianceRepr::Full(innovation_cov),
        gain,
        normalized_gain: None,
        loglik_increment,
    };
    let next = FilterState {
        x_hat,
        cov: CovarianceRepr::Svd { q: posterior_q, d_sqrt: posterior_d_sqrt },
        k: state.k,
        stage: Stage::Posterior,
    };
    Ok((next, report))
}

pub fn step(
    state: &FilterState,
    matrices: &StepMatrices<'_>,
    noise: &NoiseRoots,
    audit: &mut ReciprocalAudit,
    u: &DVector<f64>,
    z: &DVector<f64>,
) -> std::result::Result<(FilterState, StepReport), FailureCause> {
    let prior = time_update(state, matrices, &noise.theta_root, u)?;
    measurement_update(&prior, matrices, noise, audit, z)
}

pub struct SvdSrkf {
    state: FilterState,
    fixed_noise: Option<NoiseRoots>,
    audit: ReciprocalAudit,
}

impl SvdSrkf {
    pub fn new(model: &StateSpaceModel) -> Result<Self> {
        let (q, d_sqrt) = psd_svd_factor(&model.pi0)?;
        let fixed_noise = if model.has_constant_noise() { Some(NoiseRoots::new(&model.theta, &model.r)?) } else { None };
        Ok(Self {
            state: FilterState::new(model.x0_mean.clone(), CovarianceRepr::Svd { q, d_sqrt }),
            fixed_noise,
            audit: ReciprocalAudit::default(),
        })
    }

    fn noise(&self, step: &StepMatrices<'_>) -> std::result::Result<Cow<'_, NoiseRoots>, FailureCause> {
        match &self.fixed_noise {
            Some(n) => Ok(Cow::Borrowed(n)),
            None => NoiseRoots::new(step.theta, step.r).map(Cow::Owned).map_err(|_| FailureCause::FactorizationFailure),
        }
    }
}

impl KalmanFilter for SvdSrkf {
    fn kind(&self) -> FilterKind {
        FilterKind::SvdSrkf
    }

    fn state(&self) -> &FilterState {
        &self.state
    }

    fn predict(&mut self, step: &StepMatrices<'_>, u: &DVector<f64>) -> std::result::Result<(), FailureCause> {
        let noise = self.noise(step)?;
        let next = time_update(&self.state, step, &noise.theta_root, u)?;
        self.state = next;
        Ok(())
    }

    fn correct(&mut self, step: &StepMatrices<'_>, z: &DVector<f64>) -> std::result::Result<StepReport, FailureCause> {
        let owned;
        let noise = match &self.fixed_noise {
            Some(n) => n,
            None => {
                owned = NoiseRoots::new(step.theta, step.r).map_err(|_| FailureCause::FactorizationFailure)?;
                &owned
            }
        };
        let (next, report) = measurement_update(&self.state, step, noise, &mut self.audit, z)?;
        self.state = next;
        Ok(report)
    }

    fn diagonal_reciprocals(&self) -> u64 {
        self.audit.count()
    }
}

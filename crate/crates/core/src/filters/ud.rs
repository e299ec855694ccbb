//! UD filter: Thornton time update and Bierman measurement update.
//!
//! The time update re-factors `[F U | G U_Θ] diag(D, D_Θ) [F U | G U_Θ]ᵀ`
//! with modified weighted Gram-Schmidt. The measurement update decorrelates
//! `z` with the unit upper factor of `R = U_R D_R U_Rᵀ` and then processes
//! the components one scalar at a time.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use super::{
    gaussian_constant, kernel_failure, predict_state, CovarianceRepr, FailureCause, FilterKind, FilterState,
    KalmanFilter, Stage, StepReport,
};
use crate::arrays::{mwgs, ud_factorize, UdPair};
use crate::error::Result;
use crate::model::{StateSpaceModel, StepMatrices};

/// UD factors of `Θ`, and of `R` with the inverse of its unit factor.
#[derive(Debug, Clone)]
pub struct NoiseUd {
    pub theta: UdPair,
    pub r: UdPair,
    pub r_unit_inverse: DMatrix<f64>,
}

impl NoiseUd {
    pub fn new(theta: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Self> {
        let r_ud = ud_factorize(r)?;
        let m = r.nrows();
        let r_unit_inverse = r_ud
            .u
            .solve_upper_triangular(&DMatrix::identity(m, m))
            .expect("unit triangular matrices are invertible");
        Ok(Self { theta: ud_factorize(theta)?, r: r_ud, r_unit_inverse })
    }
}

fn factor(cov: &CovarianceRepr) -> std::result::Result<UdPair, FailureCause> {
    match cov {
        CovarianceRepr::Ud(ud) => Ok(ud.clone()),
        other => ud_factorize(&other.reconstruct()).map_err(|_| FailureCause::FactorizationFailure),
    }
}

pub fn time_update(
    state: &FilterState,
    step: &StepMatrices<'_>,
    theta: &UdPair,
    u: &DVector<f64>,
) -> std::result::Result<FilterState, FailureCause> {
    let ud = factor(&state.cov)?;
    let n = ud.d.len();
    let p = theta.d.len();
    let mut basis = DMatrix::zeros(n, n + p);
    basis.columns_mut(0, n).copy_from(&(step.f * &ud.u));
    basis.columns_mut(n, p).copy_from(&(step.g * &theta.u));
    let mut weights = DVector::zeros(n + p);
    weights.rows_mut(0, n).copy_from(&ud.d);
    weights.rows_mut(n, p).copy_from(&theta.d);
    if let Some(cause) = super::non_finite_cause(basis.iter().chain(weights.iter())) {
        return Err(cause);
    }
    let prior = mwgs(&basis, &weights).map_err(|e| kernel_failure(&e, Some(&basis)))?;
    Ok(FilterState {
        x_hat: predict_state(step, &state.x_hat, u),
        cov: CovarianceRepr::Ud(prior),
        k: state.k + 1,
        stage: Stage::Prior,
    })
}

/// Scalar update of `(x, U, D)` with measurement row `h`, variance `r` and
/// value `z`. Returns the innovation and its variance.
pub fn bierman_update(x: &mut DVector<f64>, ud: &mut UdPair, h: &DVector<f64>, r: f64, z: f64) -> (f64, f64) {
    let n = x.len();
    let innovation = z - h.dot(x);
    let f = ud.u.transpose() * h;
    let v = f.component_mul(&ud.d);
    let mut alpha = r;
    let mut b = DVector::zeros(n);
    for j in 0..n {
        let alpha_prev = alpha;
        alpha += f[j] * v[j];
        ud.d[j] *= alpha_prev / alpha;
        b[j] = v[j];
        let lambda = -f[j] / alpha_prev;
        for i in 0..j {
            let beta = ud.u[(i, j)];
            ud.u[(i, j)] = beta + b[i] * lambda;
            b[i] += beta * v[j];
        }
    }
    *x += b * (innovation / alpha);
    (innovation, alpha)
}

pub fn measurement_update(
    state: &FilterState,
    step: &StepMatrices<'_>,
    noise: &NoiseUd,
    z: &DVector<f64>,
) -> std::result::Result<(FilterState, StepReport), FailureCause> {
    let prior = factor(&state.cov)?;
    if noise.r.d.iter().any(|d| *d <= 0.0) {
        return Err(FailureCause::FactorizationFailure);
    }
    let h = step.h;
    let m = h.nrows();
    let prior_cov = prior.reconstruct();
    let innovation = z - h * &state.x_hat;

    let decorrelated_h = &noise.r_unit_inverse * h;
    let decorrelated_z = &noise.r_unit_inverse * z;

    let mut x = state.x_hat.clone();
    let mut ud = prior;
    let mut log_det = 0.0;
    let mut quad = 0.0;
    for i in 0..m {
        let row = decorrelated_h.row(i).transpose();
        let (e, alpha) = bierman_update(&mut x, &mut ud, &row, noise.r.d[i], decorrelated_z[i]);
        log_det += alpha.ln();
        quad += e * e / alpha;
    }

    let posterior_cov = ud.reconstruct();
    // K = P⁺ Hᵀ R⁻¹ with R⁻¹ = U_R⁻ᵀ D_R⁻¹ U_R⁻¹
    let ht_r_inv =
        decorrelated_h.transpose() * DMatrix::from_diagonal(&noise.r.d.map(|d| 1.0 / d)) * &noise.r_unit_inverse;
    let gain = &posterior_cov * ht_r_inv;

    let report = StepReport {
        k: state.k,
        innovation,
        normalized_innovation: None,
        innovation_cov: CovarianceRepr::Full(h * prior_cov * h.transpose() + step.r),
        gain,
        normalized_gain: None,
        loglik_increment: gaussian_constant(m) - 0.5 * (log_det + quad),
    };
    let next = FilterState { x_hat: x, cov: CovarianceRepr::Ud(ud), k: state.k, stage: Stage::Posterior };
    Ok((next, report))
}

pub fn step(
    state: &FilterState,
    matrices: &StepMatrices<'_>,
    noise: &NoiseUd,
    u: &DVector<f64>,
    z: &DVector<f64>,
) -> std::result::Result<(FilterState, StepReport), FailureCause> {
    let prior = time_update(state, matrices, &noise.theta, u)?;
    measurement_update(&prior, matrices, noise, z)
}

pub struct UdKf {
    state: FilterState,
    fixed_noise: Option<NoiseUd>,
}

impl UdKf {
    pub fn new(model: &StateSpaceModel) -> Result<Self> {
        let p0 = ud_factorize(&model.pi0)?;
        let fixed_noise = if model.has_constant_noise() { Some(NoiseUd::new(&model.theta, &model.r)?) } else { None };
        Ok(Self { state: FilterState::new(model.x0_mean.clone(), CovarianceRepr::Ud(p0)), fixed_noise })
    }

    fn noise(&self, step: &StepMatrices<'_>) -> std::result::Result<Cow<'_, NoiseUd>, FailureCause> {
        match &self.fixed_noise {
            Some(n) => Ok(Cow::Borrowed(n)),
            None => NoiseUd::new(step.theta, step.r).map(Cow::Owned).map_err(|_| FailureCause::FactorizationFailure),
        }
    }
}

impl KalmanFilter for UdKf {
    fn kind(&self) -> FilterKind {
        FilterKind::Udkf
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
        let (next, report) = measurement_update(&self.state, step, &noise, z)?;
        self.state = next;
        Ok(report)
    }
}

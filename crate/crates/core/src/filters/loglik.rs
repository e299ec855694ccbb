//! Innovation-form log-likelihood.
//!
//! Both evaluators use the constant `−(Km/2) ln 2π`. The first works on any
//! filter's innovation covariance; the second needs the SVD filter's
//! `(Q_{R_e}, D_{R_e}^{1/2}, ē)` and never forms `R_e⁻¹`.

use nalgebra::{DMatrix, DVector};

use super::{CovarianceRepr, StepReport};
use crate::error::{Error, Result};

/// `(ln det R_e, eᵀ R_e⁻¹ e)` through a Cholesky factor of `R_e`.
pub fn conventional_terms(innovation_cov: &DMatrix<f64>, e: &DVector<f64>) -> Option<(f64, f64)> {
    let chol = innovation_cov.clone().cholesky()?;
    let l = chol.l();
    let log_det: f64 = l.diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let w = l.solve_lower_triangular(e)?;
    Some((log_det, w.norm_squared()))
}

/// `(ln det D_{R_e}, ēᵀ D_{R_e}⁻¹ ē)`, or `None` if a singular value is zero.
pub fn svd_terms(re_sqrt: &DVector<f64>, e_bar: &DVector<f64>) -> Option<(f64, f64)> {
    let mut log_det = 0.0;
    let mut quad = 0.0;
    for (s, e) in re_sqrt.iter().zip(e_bar.iter()) {
        let var = s * s;
        if !var.is_finite() || var <= 0.0 {
            return None;
        }
        log_det += var.ln();
        quad += e * e / var;
    }
    Some((log_det, quad))
}

fn constant(reports: &[StepReport]) -> f64 {
    let total: usize = reports.iter().map(|r| r.innovation.len()).sum();
    -0.5 * total as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// `ℒ = −(Km/2) ln 2π − ½ Σ (ln det R_{e,k} + e_kᵀ R_{e,k}⁻¹ e_k)`.
pub fn loglik_conventional(reports: &[StepReport]) -> Result<f64> {
    let mut sum = 0.0;
    for report in reports {
        let re = report.innovation_cov.reconstruct();
        let (log_det, quad) = conventional_terms(&re, &report.innovation)
            .ok_or(Error::SingularInnovationCovariance { step: report.k })?;
        sum += log_det + quad;
    }
    Ok(constant(reports) - 0.5 * sum)
}

/// `ℒ = −(Km/2) ln 2π − ½ Σ (ln det D_{R_e,k} + ē_kᵀ D_{R_e,k}⁻¹ ē_k)`.
pub fn loglik_svd(reports: &[StepReport]) -> Result<f64> {
    let mut sum = 0.0;
    for report in reports {
        let CovarianceRepr::Svd { d_sqrt, .. } = &report.innovation_cov else {
            return Err(Error::InvalidInput(format!("step {} has no SVD innovation covariance", report.k)));
        };
        let e_bar = report
            .normalized_innovation
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(format!("step {} has no normalized innovation", report.k)))?;
        let (log_det, quad) = svd_terms(d_sqrt, e_bar).ok_or(Error::SingularInnovationCovariance { step: report.k })?;
        sum += log_det + quad;
    }
    Ok(constant(reports) - 0.5 * sum)
}

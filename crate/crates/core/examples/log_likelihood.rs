//! Log-likelihood of a measurement record, two ways.
//!
//! The conventional form needs `det R_e` and `R_e⁻¹`; the SVD filter gives
//! the same value from the singular values of `R_e` and the rotated
//! innovations `ē = Q_{R_e}ᵀ e`, with no inverse of a full matrix. The
//! example also shows the per-step quantities that make this possible.
//!
//! ```bash
//! cargo run --example log_likelihood
//! ```

use svdkf::filters::{loglik_conventional, loglik_svd, CovarianceRepr, Filter, FilterKind};
use svdkf::model::{example2, simulate};

fn main() -> svdkf::Result<()> {
    let model = example2(1e-4)?;
    let traj = simulate(&model, 60, None, 2024)?;

    let mut filter = Filter::new(FilterKind::SvdKf, &model)?;
    let mut reports = Vec::new();
    for k in 1..=traj.horizon() {
        let report = filter
            .step(&model, k, &traj.control(k), &traj.measurement(k))
            .map_err(|f| svdkf::Error::InvalidInput(f.to_string()))?;
        reports.push(report);
    }

    let last = reports.last().expect("at least one step");
    if let CovarianceRepr::Svd { d_sqrt, .. } = &last.innovation_cov {
        let e_bar = last.normalized_innovation.as_ref().expect("svd-kf reports ē");
        println!("step {}: singular values of R_e^(1/2) = {:?}", last.k, d_sqrt.as_slice());
        println!("          |e| = {:.6e}, |ē| = {:.6e}", last.innovation.norm(), e_bar.norm());
    }

    let conventional = loglik_conventional(&reports)?;
    let svd = loglik_svd(&reports)?;
    let summed: f64 = reports.iter().map(|r| r.loglik_increment).sum();
    println!("conventional form : {conventional:.12}");
    println!("SVD form          : {svd:.12}");
    println!("running sum       : {summed:.12}");
    println!("relative gap      : {:.2e}", (conventional - svd).abs() / conventional.abs());
    println!("reciprocals of D_P taken by svd-kf: {}", filter.diagonal_reciprocals());
    Ok(())
}

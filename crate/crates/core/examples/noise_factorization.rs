//! The SVD filter with singular noise covariances.
//!
//! The older SVD filter needs `R⁻¹`; the newer one only needs the SVD
//! factors of `Θ` and `R`, so a sensor with a perfectly noise-free channel is
//! still usable. Noise blocks can come from an SVD or a Cholesky
//! factor, and both give the same estimates when both exist.
//!
//! ```bash
//! cargo run --example noise_factorization
//! ```

use nalgebra::{DMatrix, DVector};
use svdkf::filters::svd_kf::{self, NoiseBlocks, NoiseFactorization};
use svdkf::filters::{CovarianceRepr, Filter, FilterKind, FilterState};
use svdkf::model::StateSpaceModel;

fn main() -> svdkf::Result<()> {
    let model = StateSpaceModel::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
        DMatrix::zeros(2, 0),
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2),
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.01])),
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0])),
        DVector::zeros(2),
        DMatrix::identity(2, 2),
    )?;
    let z = DVector::from_vec(vec![1.2, 0.4]);

    let noise = NoiseBlocks::new(&model.theta, &model.r, NoiseFactorization::Svd)?;
    let start = FilterState::new(model.x0_mean.clone(), CovarianceRepr::Svd {
        q: DMatrix::identity(2, 2),
        d_sqrt: DVector::from_element(2, 1.0),
    });
    let (post, report) = svd_kf::step(&start, &model.at(1), &noise, &DVector::zeros(0), &z)
        .map_err(|c| svdkf::Error::InvalidInput(format!("{c:?}")))?;
    println!("svd-kf with R = diag(0.5, 0): x̂ = {:?}", post.x_hat.as_slice());
    println!("P⁺ = {:.6}", post.covariance());
    println!("gain K = {:.6}", report.gain);

    match Filter::new(FilterKind::SvdSrkf, &model).map(|mut f| f.step(&model, 1, &DVector::zeros(0), &z)) {
        Ok(Ok(r)) => println!("svd-srkf also ran, K = {:.6}", r.gain),
        Ok(Err(failure)) => println!("svd-srkf: {failure}"),
        Err(e) => println!("svd-srkf could not start: {e}"),
    }

    let mut regular = model.clone();
    regular.r = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.2]));
    for how in [NoiseFactorization::Svd, NoiseFactorization::Cholesky] {
        let blocks = NoiseBlocks::new(&regular.theta, &regular.r, how)?;
        let (p, _) = svd_kf::step(&start, &regular.at(1), &blocks, &DVector::zeros(0), &z)
            .map_err(|c| svdkf::Error::InvalidInput(format!("{c:?}")))?;
        println!("{how:?} noise blocks: x̂ = {:?}", p.x_hat.as_slice());
    }
    Ok(())
}

//! Independent dense-algebra oracles and random instance generators.
//!
//! Nothing here calls into the filter implementations: the reference filter
//! is the textbook recursion written directly against nalgebra, so agreement
//! with it is evidence rather than tautology.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use svdkf::model::StateSpaceModel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Haar-ish orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, n, n).qr().q()
}

/// `Q diag(λ) Qᵀ` with `λ` log-uniform in `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, n);
    let lambda = DVector::from_fn(n, |_, _| (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp());
    let m = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// A random, well-conditioned model: stable-ish `F`, full-rank `H`, positive
/// definite `Θ`, `R`, `Π₀` with condition numbers at most 1e3.
pub fn random_model(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> StateSpaceModel {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_m.min(n));
    let f = DMatrix::identity(n, n) * 0.6 + gaussian_matrix(rng, n, n) * (0.4 / (n as f64).sqrt());
    let h = gaussian_matrix(rng, m, n);
    StateSpaceModel::new(
        f,
        DMatrix::zeros(n, 0),
        DMatrix::identity(n, n),
        h,
        random_spd(rng, n, 1e-2, 1.0),
        random_spd(rng, m, 1e-1, 1.0),
        gaussian_vector(rng, n),
        random_spd(rng, n, 1e-3, 1.0),
    )
    .expect("generated model is valid")
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// `F P Fᵀ + G Θ Gᵀ`.
pub fn oracle_prior(model: &StateSpaceModel, k: usize, p: &DMatrix<f64>) -> DMatrix<f64> {
    let s = model.at(k);
    s.f * p * s.f.transpose() + s.g * s.theta * s.g.transpose()
}

/// Gain from the prior covariance: `K = P⁻Hᵀ(HP⁻Hᵀ + R)⁻¹`.
pub fn oracle_gain_prior(p: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let re = h * p * h.transpose() + r;
    // solve Re Kᵀ = H P rather than forming the inverse
    re.lu().solve(&(h * p)).expect("R_e invertible").transpose()
}

/// Gain from the posterior covariance: `K = P⁺HᵀR⁻¹`.
pub fn oracle_gain_posterior(p_post: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    r.clone().lu().solve(&(h * p_post)).expect("R invertible").transpose()
}

/// Standard form `(I − KH)P⁻`.
pub fn oracle_posterior_standard(p: &DMatrix<f64>, k: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    (DMatrix::identity(n, n) - k * h) * p
}

/// Information form `(P⁻⁻¹ + HᵀR⁻¹H)⁻¹`.
pub fn oracle_posterior_information(p: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let p_inv = p.clone().try_inverse().expect("prior invertible");
    let r_inv = r.clone().try_inverse().expect("R invertible");
    (p_inv + h.transpose() * r_inv * h).try_inverse().expect("information invertible")
}

/// Joseph form `(I − KH)P⁻(I − KH)ᵀ + KRKᵀ`.
pub fn oracle_posterior_joseph(p: &DMatrix<f64>, k: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - k * h;
    &a * p * a.transpose() + k * r * k.transpose()
}

/// Output of the reference filter at one step.
pub struct OracleStep {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

/// The textbook Kalman recursion over `measurements` (row `k−1` is `z_k`),
/// with no control input.
pub fn oracle_filter(model: &StateSpaceModel, measurements: &DMatrix<f64>) -> Vec<OracleStep> {
    let mut x = model.x0_mean.clone();
    let mut p = model.pi0.clone();
    let mut out = Vec::new();
    for k in 1..=measurements.nrows() {
        let s = model.at(k);
        x = s.f * &x;
        p = oracle_prior(model, k, &p);
        let z = measurements.row(k - 1).transpose();
        let e = &z - s.h * &x;
        let re = s.h * &p * s.h.transpose() + s.r;
        let gain = oracle_gain_prior(&p, s.h, s.r);
        x += &gain * &e;
        p = oracle_posterior_standard(&p, &gain, s.h);
        out.push(OracleStep { x: x.clone(), p: p.clone(), innovation: e, innovation_cov: re });
    }
    out
}

/// `−(Km/2) ln 2π − ½ Σ (ln det R_e + eᵀR_e⁻¹e)` by LU determinant and solve.
pub fn oracle_loglik(steps: &[OracleStep]) -> f64 {
    let mut total = 0.0;
    for s in steps {
        let m = s.innovation.len() as f64;
        let lu = s.innovation_cov.clone().lu();
        let quad = s.innovation.dot(&lu.solve(&s.innovation).expect("R_e invertible"));
        total += -0.5 * m * (2.0 * std::f64::consts::PI).ln() - 0.5 * (lu.determinant().ln() + quad);
    }
    total
}

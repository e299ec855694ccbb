//! Factorization kernels shared by the filters.
//!
//! Every factored filter follows the same pattern: stack the quantities that
//! are available at the current step into a pre-array `A`, factor it with an
//! orthogonal transformation, and read the updated factors off the post-array.
//! The kernels here only guarantee the Gram identity `AᵀA = (post)ᵀ(post)`;
//! which factor means what is decided by the filter that built `A`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Orthogonality tolerance for SVD factors.
pub const TAU_ORTH: f64 = 1e-10;
/// Relative tolerance for Gram-matrix reconstructions.
pub const TAU_RECON: f64 = 1e-10;
/// Symmetry tolerance, relative to the matrix norm.
pub const TAU_SYM: f64 = 1e-12;
/// Pivot clamp for semidefinite factorizations, relative to the largest diagonal entry.
pub const TAU_PSD: f64 = 1e-12;

const SVD_MAX_ITERATIONS: usize = 10_000;

/// A stacked matrix with at least as many rows as columns and finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PreArray(DMatrix<f64>);

impl PreArray {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < data.ncols() {
            return Err(Error::InvalidInput(format!(
                "pre-array must have rows >= cols, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::InvalidInput("pre-array has no columns".into()));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("pre-array holds non-finite entry {bad}")));
        }
        Ok(Self(data))
    }

    /// Stacks `blocks` vertically. All blocks must share a column count.
    pub fn stack(blocks: &[&DMatrix<f64>]) -> Result<Self> {
        let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
        if blocks.iter().any(|b| b.ncols() != cols) {
            return Err(Error::Dimension("pre-array blocks differ in column count".into()));
        }
        let rows = blocks.iter().map(|b| b.nrows()).sum();
        let mut data = DMatrix::zeros(rows, cols);
        let mut offset = 0;
        for block in blocks {
            data.rows_mut(offset, block.nrows()).copy_from(block);
            offset += block.nrows();
        }
        Self::new(data)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// SVD factors of a pre-array `A = W [Σ; 0] Vᵀ`.
///
/// `singular_values` is sorted descending. `w` holds only the leading
/// `cols` columns of the left factor and is computed on request; no filter
/// reads it.
#[derive(Debug, Clone)]
pub struct SvdPostArray {
    pub w: Option<DMatrix<f64>>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdPostArray {
    /// `V Σ² Vᵀ`, which equals `AᵀA`.
    pub fn gram(&self) -> DMatrix<f64> {
        let scaled = &self.v * DMatrix::from_diagonal(&self.singular_values.map(|s| s * s));
        scaled * self.v.transpose()
    }
}

/// Factors the pre-array, returning the diagonal block and the right factor.
pub fn svd_array_update(pre: PreArray) -> Result<SvdPostArray> {
    factor_svd(pre, false)
}

/// As [`svd_array_update`], also returning the thin left factor.
pub fn svd_array_update_with_left(pre: PreArray) -> Result<SvdPostArray> {
    factor_svd(pre, true)
}

fn factor_svd(pre: PreArray, compute_left: bool) -> Result<SvdPostArray> {
    let svd = SVD::try_new(pre.0, compute_left, true, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or_else(|| Error::FactorizationFailure("SVD did not converge".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::FactorizationFailure("SVD returned no right factor".into()))?;
    Ok(SvdPostArray {
        w: svd.u,
        singular_values: svd.singular_values,
        v: v_t.transpose(),
    })
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Fails unless `m` is square and symmetric within `TAU_SYM · ‖m‖`.
pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(bad) = m.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("matrix holds non-finite entry {bad}")));
    }
    let tolerance = TAU_SYM * max_abs(m);
    let asymmetry = max_abs(&(m - m.transpose()));
    if asymmetry > tolerance {
        return Err(Error::NotSymmetric { asymmetry, tolerance });
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Upper-triangular `S` with `SᵀS = m` for a symmetric positive semidefinite `m`.
///
/// Pivots within `±TAU_PSD · max diag` are clamped to zero and their row of
/// `S` is zeroed; the factor is then not unique, but `SᵀS` still equals `m`.
pub fn cholesky_upper(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m)?;
    let n = m.nrows();
    let max_diag = m.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(*v));
    let clamp = TAU_PSD * max_diag;
    let mut s = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for i in 0..j {
            pivot -= s[(i, j)] * s[(i, j)];
        }
        if pivot < -clamp {
            return Err(Error::NotPositiveSemidefinite { index: j, value: pivot });
        }
        if pivot <= clamp {
            continue;
        }
        let root = pivot.sqrt();
        s[(j, j)] = root;
        for k in j + 1..n {
            let mut acc = m[(j, k)];
            for i in 0..j {
                acc -= s[(i, j)] * s[(i, k)];
            }
            s[(j, k)] = acc / root;
        }
    }
    Ok(s)
}

/// Upper-triangular `R` with nonnegative diagonal and `RᵀR = AᵀA`.
pub fn qr_triangularize(pre: PreArray) -> Result<DMatrix<f64>> {
    let mut r = pre.0.qr().unpack_r();
    for i in 0..r.nrows() {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
        }
    }
    Ok(r)
}

/// Unit upper-triangular `u` and nonnegative diagonal `d` with `P = U diag(d) Uᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct UdPair {
    pub u: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl UdPair {
    pub fn identity(n: usize) -> Self {
        Self { u: DMatrix::identity(n, n), d: DVector::from_element(n, 1.0) }
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let ud = &self.u * DMatrix::from_diagonal(&self.d);
        symmetrize(&(ud * self.u.transpose()))
    }
}

/// Modified weighted Gram-Schmidt: factors `basis · diag(weights) · basisᵀ`
/// into `U D Uᵀ`.
///
/// Rows of `basis` are orthogonalized bottom-up in the weighted inner
/// product. A row whose weighted norm vanishes yields a zero entry of `D`
/// and a zero column above the diagonal of `U`.
pub fn mwgs(basis: &DMatrix<f64>, weights: &DVector<f64>) -> Result<UdPair> {
    let (n, k) = basis.shape();
    if weights.len() != k {
        return Err(Error::Dimension(format!(
            "mwgs: basis has {k} columns but {} weights",
            weights.len()
        )));
    }
    if k < n {
        return Err(Error::Dimension(format!("mwgs: basis is {n}x{k}, need k >= n")));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidInput(format!("mwgs: weight {w} is not a finite nonnegative number")));
    }
    if basis.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("mwgs: basis holds non-finite entries".into()));
    }

    let mut rows = basis.clone();
    let mut u = DMatrix::<f64>::identity(n, n);
    let mut d = DVector::<f64>::zeros(n);
    for j in (0..n).rev() {
        let weighted: DVector<f64> = rows.row(j).transpose().component_mul(weights);
        let dj = rows.row(j).transpose().dot(&weighted);
        d[j] = dj;
        if dj <= 0.0 {
            continue;
        }
        for i in 0..j {
            let uij = rows.row(i).transpose().dot(&weighted) / dj;
            u[(i, j)] = uij;
            let pivot_row = rows.row(j).clone_owned();
            let mut row_i = rows.row_mut(i);
            row_i -= pivot_row * uij;
        }
    }
    Ok(UdPair { u, d })
}

/// `U D Uᵀ` factorization of a symmetric positive semidefinite matrix.
pub fn ud_factorize(m: &DMatrix<f64>) -> Result<UdPair> {
    check_symmetric(m)?;
    let n = m.nrows();
    let max_diag = m.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(*v));
    let clamp = TAU_PSD * max_diag;
    let mut u = DMatrix::<f64>::identity(n, n);
    let mut d = DVector::<f64>::zeros(n);
    for j in (0..n).rev() {
        let mut dj = m[(j, j)];
        for k in j + 1..n {
            dj -= d[k] * u[(j, k)] * u[(j, k)];
        }
        if dj < -clamp {
            return Err(Error::NotPositiveSemidefinite { index: j, value: dj });
        }
        if dj <= clamp {
            continue;
        }
        d[j] = dj;
        for i in 0..j {
            let mut acc = m[(i, j)];
            for k in j + 1..n {
                acc -= d[k] * u[(i, k)] * u[(j, k)];
            }
            u[(i, j)] = acc / dj;
        }
    }
    Ok(UdPair { u, d })
}

/// SVD factors `(Q, D^{1/2})` of a symmetric positive semidefinite matrix, `m = Q D Qᵀ`.
///
/// Eigenvalues within `-TAU_PSD · max diag` of zero are clamped to zero so
/// rank-deficient covariances factor without special handling. The diagonal
/// is sorted descending.
pub fn psd_svd_factor(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_symmetric(m)?;
    let n = m.nrows();
    let max_diag = m.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let clamp = TAU_PSD * max_diag.max(f64::MIN_POSITIVE);
    let eigen = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or_else(|| Error::FactorizationFailure("symmetric eigendecomposition did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let mut q = DMatrix::zeros(n, n);
    let mut d_sqrt = DVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let lambda = eigen.eigenvalues[src];
        if lambda < -clamp {
            return Err(Error::NotPositiveSemidefinite { index: src, value: lambda });
        }
        d_sqrt[dst] = lambda.max(0.0).sqrt();
        q.set_column(dst, &eigen.eigenvectors.column(src));
    }
    Ok((q, d_sqrt))
}

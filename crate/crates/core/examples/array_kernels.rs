//! The orthogonal-transformation kernels behind the factored filters.
//!
//! Each kernel takes a stacked pre-array `A` and returns factors of `AᵀA`
//! without ever forming it:
//!
//! * SVD: `AᵀA = V Σ² Vᵀ`
//! * QR: `AᵀA = RᵀR` with `R` upper triangular
//! * weighted Gram-Schmidt: `B W Bᵀ = U D Uᵀ` with `U` unit upper triangular
//!
//! ```bash
//! cargo run --example array_kernels
//! ```

use nalgebra::{DMatrix, DVector};
use svdkf::arrays::{mwgs, qr_triangularize, svd_array_update, PreArray};

fn main() -> svdkf::Result<()> {
    let a = DMatrix::from_row_slice(5, 3, &[
        2.0, -1.0, 0.5,
        0.0, 1.5, 1.0,
        1.0, 0.0, -2.0,
        0.3, 0.3, 0.3,
        -1.0, 2.0, 0.0,
    ]);
    let gram = a.transpose() * &a;

    let svd = svd_array_update(PreArray::new(a.clone())?)?;
    println!("singular values: {:?}", svd.singular_values.as_slice());
    println!("‖AᵀA − VΣ²Vᵀ‖ = {:.2e}", (&gram - svd.gram()).norm());
    let v = &svd.v;
    println!("‖VᵀV − I‖     = {:.2e}", (v.transpose() * v - DMatrix::identity(3, 3)).norm());

    let r = qr_triangularize(PreArray::new(a.clone())?)?;
    println!("\nR = {r:.4}");
    println!("‖AᵀA − RᵀR‖ = {:.2e}", (&gram - r.transpose() * &r).norm());

    let b = DMatrix::from_row_slice(3, 4, &[1.0, 0.5, 0.0, 2.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.5, 1.0]);
    let w = DVector::from_vec(vec![1.0, 0.5, 2.0, 0.1]);
    let ud = mwgs(&b, &w)?;
    let target = &b * DMatrix::from_diagonal(&w) * b.transpose();
    println!("\nU = {:.4}D = {:?}", ud.u, ud.d.as_slice());
    println!("‖BWBᵀ − UDUᵀ‖ = {:.2e}", (target - ud.reconstruct()).norm());
    Ok(())
}

//! Estimation error metrics over Monte-Carlo runs.
//!
//! Runs are `K × n` matrices (row `k−1` is step `k`). A NaN anywhere in a
//! run's estimates poisons the matching RMSE component, which is how a
//! diverged filter shows up in the tables.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterFailure;

/// Components whose mean absolute true value is below this are left out of MRE.
pub const MRE_ZERO_FLOOR: f64 = 1e-6;

/// Per-component root mean square error over all runs and steps.
pub fn rmse(truth: &[DMatrix<f64>], estimates: &[DMatrix<f64>]) -> Result<DVector<f64>> {
    check_shapes(truth, estimates)?;
    let n = truth[0].ncols();
    let mut sum = DVector::<f64>::zeros(n);
    let mut count = 0usize;
    for (t, e) in truth.iter().zip(estimates) {
        for (i, (tc, ec)) in t.column_iter().zip(e.column_iter()).enumerate() {
            sum[i] += (tc - ec).norm_squared();
        }
        count += t.nrows();
    }
    Ok(sum.map(|s| (s / count as f64).sqrt()))
}

/// Mean relative error in percent at the final step; `truth` and `estimates` are `M × n`.
///
/// `None` marks components whose true value is essentially zero.
pub fn mre(truth: &DMatrix<f64>, estimates: &DMatrix<f64>, zero_floor: f64) -> Result<Vec<Option<f64>>> {
    if truth.shape() != estimates.shape() || truth.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "mre: truth is {:?}, estimates are {:?}",
            truth.shape(),
            estimates.shape()
        )));
    }
    let runs = truth.nrows() as f64;
    Ok((0..truth.ncols())
        .map(|i| {
            let t = truth.column(i);
            let mean_abs = t.iter().map(|v| v.abs()).sum::<f64>() / runs;
            if mean_abs < zero_floor {
                return None;
            }
            let e = estimates.column(i);
            let total: f64 = t.iter().zip(e.iter()).map(|(t, e)| (t - e).abs() / t.abs()).sum();
            Some(100.0 * total / runs)
        })
        .collect())
}

fn check_shapes(truth: &[DMatrix<f64>], estimates: &[DMatrix<f64>]) -> Result<()> {
    if truth.is_empty() || truth.len() != estimates.len() {
        return Err(Error::Dimension(format!(
            "rmse: {} truth runs but {} estimate runs",
            truth.len(),
            estimates.len()
        )));
    }
    let shape = truth[0].shape();
    if shape.0 == 0 || shape.1 == 0 {
        return Err(Error::Dimension("rmse: empty run".into()));
    }
    for (t, e) in truth.iter().zip(estimates) {
        if t.shape() != shape || e.shape() != shape {
            return Err(Error::Dimension(format!("rmse: expected {shape:?}, got {:?} and {:?}", t.shape(), e.shape())));
        }
    }
    Ok(())
}

/// Error summary for one filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rmse: Vec<f64>,
    pub mre_percent: Vec<Option<f64>>,
    pub rmse_norm: f64,
    /// First failure seen in any run.
    pub failed: Option<FilterFailure>,
}

impl ErrorReport {
    /// Builds the report from per-run `K × n` truth and estimate histories.
    pub fn from_runs(
        truth: &[DMatrix<f64>],
        estimates: &[DMatrix<f64>],
        failed: Option<FilterFailure>,
        zero_floor: f64,
    ) -> Result<Self> {
        let rmse = rmse(truth, estimates)?;
        let last = |runs: &[DMatrix<f64>]| {
            let n = runs[0].ncols();
            let k = runs[0].nrows() - 1;
            DMatrix::from_fn(runs.len(), n, |j, i| runs[j][(k, i)])
        };
        let mre_percent = mre(&last(truth), &last(estimates), zero_floor)?;
        Ok(Self { rmse_norm: rmse.norm(), rmse: rmse.iter().copied().collect(), mre_percent, failed })
    }

    pub fn is_finite(&self) -> bool {
        self.rmse_norm.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn exact_estimates_give_zero() {
        let t = vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])];
        assert_eq!(rmse(&t, &t).unwrap(), DVector::zeros(2));
        assert_eq!(mre(&t[0], &t[0], MRE_ZERO_FLOOR).unwrap(), vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn two_step_hand_value() {
        let t = vec![DMatrix::from_row_slice(2, 1, &[0.0, 0.0])];
        let e = vec![DMatrix::from_row_slice(2, 1, &[3.0, 4.0])];
        assert_relative_eq!(rmse(&t, &e).unwrap()[0], (25.0f64 / 2.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn two_run_relative_error() {
        let t = DMatrix::from_row_slice(2, 1, &[2.0, 4.0]);
        let e = DMatrix::from_row_slice(2, 1, &[1.0, 5.0]);
        assert_relative_eq!(mre(&t, &e, MRE_ZERO_FLOOR).unwrap()[0].unwrap(), 37.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_truth_is_suppressed() {
        let t = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let e = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.2, 1.0]);
        let out = mre(&t, &e, MRE_ZERO_FLOOR).unwrap();
        assert_eq!(out[0], None);
        assert_eq!(out[1], Some(0.0));
    }

    #[test]
    fn nan_poisons_component() {
        let t = vec![DMatrix::zeros(2, 2)];
        let e = vec![DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0])];
        let r = rmse(&t, &e).unwrap();
        assert!(r[0].is_nan());
        assert_relative_eq!(r[1], 0.5f64.sqrt());
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let t = vec![DMatrix::zeros(2, 2)];
        let e = vec![DMatrix::zeros(3, 2)];
        assert!(rmse(&t, &e).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    fn runs() -> impl Strategy<Value = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
        (1usize..4, 1usize..5, 1usize..4).prop_flat_map(|(m, k, n)| {
            let run = prop::collection::vec(-10.0f64..10.0, k * n).prop_map(move |v| DMatrix::from_vec(k, n, v));
            (prop::collection::vec(run.clone(), m), prop::collection::vec(run, m))
        })
    }

    proptest! {
        #[test]
        fn rmse_ignores_run_order((t, e) in runs()) {
            let a = rmse(&t, &e).unwrap();
            let (mut tr, mut er) = (t.clone(), e.clone());
            tr.reverse();
            er.reverse();
            let b = rmse(&tr, &er).unwrap();
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + t.len() as f64));
        }

        #[test]
        fn rmse_ignores_step_order((t, e) in runs()) {
            let a = rmse(&t, &e).unwrap();
            let flip = |m: &DMatrix<f64>| {
                let k = m.nrows();
                DMatrix::from_fn(k, m.ncols(), |r, c| m[(k - 1 - r, c)])
            };
            let tr: Vec<_> = t.iter().map(flip).collect();
            let er: Vec<_> = e.iter().map(flip).collect();
            let b = rmse(&tr, &er).unwrap();
            prop_assert!((a - b).norm() <= 1e-12);
        }

        #[test]
        fn rmse_scales_and_mre_does_not((t, e) in runs(), a in 0.1f64..10.0) {
            let base = rmse(&t, &e).unwrap();
            let ts: Vec<_> = t.iter().map(|m| m * a).collect();
            let es: Vec<_> = e.iter().map(|m| m * a).collect();
            let scaled = rmse(&ts, &es).unwrap();
            prop_assert!((scaled - &base * a).norm() <= 1e-10 * (1.0 + a * base.norm()));

            let m1 = mre(&t[0], &e[0], MRE_ZERO_FLOOR).unwrap();
            let m2 = mre(&ts[0], &es[0], MRE_ZERO_FLOOR * a).unwrap();
            for (x, y) in m1.iter().zip(&m2) {
                match (x, y) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs())),
                    (None, None) => {}
                    _ => prop_assert!(false, "suppression changed under scaling"),
                }
            }
        }

        #[test]
        fn report_norm_matches_components((t, e) in runs()) {
            let r = ErrorReport::from_runs(&t, &e, None, MRE_ZERO_FLOOR).unwrap();
            prop_assert!(r.rmse.iter().all(|v| *v >= 0.0));
            let norm = r.rmse.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((r.rmse_norm - norm).abs() <= 1e-12 * (1.0 + norm));
        }
    }
}

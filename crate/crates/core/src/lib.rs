//! Kalman filtering with conventional, square-root, UD and SVD-based
//! covariance propagation, plus the simulation and benchmarking harness used
//! to compare them.
//!
//! ```no_run
//! use svdkf::filters::{Filter, FilterKind};
//! use svdkf::model::{example1, simulate};
//!
//! let model = example1();
//! let traj = simulate(&model, 100, None, 7).unwrap();
//! let mut filter = Filter::new(FilterKind::SvdKf, &model).unwrap();
//! for k in 1..=traj.horizon() {
//!     filter.step(&model, k, &traj.control(k), &traj.measurement(k)).unwrap();
//! }
//! println!("{}", filter.state().x_hat);
//! ```

pub mod arrays;
pub mod bench;
pub mod cli;
pub mod error;
pub mod filters;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};

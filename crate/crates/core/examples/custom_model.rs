//! Defining a model in JSON, including a time-varying measurement noise.
//!
//! Any field may be overridden at a given step `k`; the override applies to
//! the transition into `x_k` and to the measurement `z_k`. The same JSON can
//! be saved to a file and passed to the command line with `--model path`.
//!
//! ```bash
//! cargo run --example custom_model
//! ```

use svdkf::bench::run_filter;
use svdkf::filters::FilterKind;
use svdkf::model::{simulate, StateSpaceModel};

const MODEL: &str = r#"{
    "f": [[1.0, 0.1], [0.0, 1.0]],
    "b": [[0.005], [0.1]],
    "h": [[1.0, 0.0]],
    "theta": [[0.0, 0.0], [0.0, 0.01]],
    "r": [[0.25]],
    "x0_mean": [0.0, 1.0],
    "pi0": [[1.0, 0.0], [0.0, 0.5]],
    "overrides": [
        {"k": 20, "field": "r", "matrix": [[25.0]]},
        {"k": 21, "field": "r", "matrix": [[25.0]]}
    ]
}"#;

fn main() -> svdkf::Result<()> {
    let model = StateSpaceModel::from_json_str(MODEL)?;
    println!("n = {}, m = {}, d = {}, constant noise: {}", model.state_dim(), model.measurement_dim(), model.control_dim(), model.has_constant_noise());

    let horizon = 40;
    let controls = nalgebra::DMatrix::from_fn(horizon, 1, |k, _| if k < 10 { 1.0 } else { 0.0 });
    let traj = simulate(&model, horizon, Some(&controls), 5)?;

    for kind in FilterKind::ALL {
        let run = run_filter(kind, &model, &traj)?;
        let last = run.estimates.row(horizon - 1);
        println!("{:<9} x̂_K = [{:+.5}, {:+.5}]  log-likelihood {:.6}", kind.name(), last[0], last[1], run.loglik);
    }
    let truth = traj.state(horizon);
    println!("{:<9} x_K = [{:+.5}, {:+.5}]", "truth", truth[0], truth[1]);
    println!("\nround-tripped JSON:\n{}", model.to_json_string()?);
    Ok(())
}

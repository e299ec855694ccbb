//! Monte-Carlo comparison of all five filters on the satellite model.
//!
//! Every run simulates one trajectory and passes it to each filter, so the
//! error rows should agree to roundoff while the timing column differs.
//!
//! ```bash
//! cargo run --release --example satellite_comparison -- 500
//! ```

use svdkf::bench::{monte_carlo, RunConfig};
use svdkf::filters::FilterKind;
use svdkf::model::{example1, InitialState};

fn main() -> svdkf::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let config = RunConfig::new(example1(), FilterKind::ALL.to_vec(), runs, 100, 1)
        .with_initial_state(InitialState::Mean)
        .with_timing(true);
    let report = monte_carlo(&config)?;

    println!("{runs} runs, K = 100\n");
    println!("{:<9} {:>30} {:>30} {:>11}", "filter", "RMSE x1..x4", "MRE % x1..x4", "seconds");
    for s in &report.filters {
        let rmse: Vec<String> = s.errors.rmse.iter().map(|v| format!("{v:.4}")).collect();
        let mre: Vec<String> =
            s.errors.mre_percent.iter().map(|v| v.map_or("-".to_string(), |v| format!("{v:.3}"))).collect();
        println!("{:<9} {:>30} {:>30} {:>11.6}", s.filter.name(), rmse.join(" "), mre.join(" "), s.mean_seconds);
    }

    let kf = &report.filters[0].errors.rmse;
    let spread = report
        .filters
        .iter()
        .flat_map(|s| s.errors.rmse.iter().zip(kf).map(|(a, b)| (a - b).abs() / b))
        .fold(0.0_f64, f64::max);
    println!("\nlargest relative RMSE difference from kf: {spread:.2e}");
    Ok(())
}

//! Robustness of the five filters as the measurement scheme degenerates.
//!
//! The two sensors of `example2(δ)` differ by `δ` in one coefficient and have
//! noise variance `δ²`. As `δ` nears the unit roundoff, `HPHᵀ + R` becomes
//! numerically singular: the conventional filter breaks first, the older SVD
//! filter next, while the array-form filters keep going.
//!
//! ```bash
//! cargo run --release --example ill_conditioned_sweep -- 100
//! ```

use svdkf::bench::{default_deltas, sweep, RunConfig};
use svdkf::cli::sweep_token;
use svdkf::filters::FilterKind;
use svdkf::model::{example2, InitialState};

fn main() -> svdkf::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let deltas = default_deltas();
    let config = RunConfig::new(example2(0.1)?, FilterKind::ALL.to_vec(), runs, 100, 1)
        .with_initial_state(InitialState::Mean);
    let report = sweep(&deltas, &config)?;

    print!("{:<9}", "δ");
    for d in &deltas {
        print!(" {:>10}", format!("{d:e}"));
    }
    println!();
    for &kind in &report.filters {
        print!("{:<9}", kind.name());
        for c in report.row(kind) {
            print!(" {:>10}", sweep_token(c));
        }
        println!();
    }
    println!();
    for &kind in &report.filters {
        match report.first_failure(kind) {
            Some(d) => println!("{:<9} first breaks at δ = {d:e}", kind.name()),
            None => println!("{:<9} finite over the whole grid", kind.name()),
        }
    }
    Ok(())
}

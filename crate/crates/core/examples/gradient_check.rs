//! Runs the built-in verification battery: finite-difference gradient checks,
//! trajectory-law sampling, estimator bias and variance, and the edit-distance
//! oracle. Prints the same table as `nat check`.
//!
//! ```text
//! cargo run --release --example gradient_check -- [seed]
//! ```

use nat_core::cli::check::{format_table, run_checks, CheckOptions};

fn main() {
    let seed = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed"));
    let results = run_checks(&CheckOptions {
        seed,
        inject_fault: false,
    });
    print!("{}", format_table(&results));
    if results.iter().any(|r| !r.passed) {
        std::process::exit(1);
    }
}

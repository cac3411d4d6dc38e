//! Runs the simulate, fit, estimate pipeline over several network sizes and
//! prints a CSV table of estimates, confidence intervals and oracle values.
//!
//! ```text
//! cargo run --release --example table_experiment -- 200 400
//! ```

use netcausal::pipeline::{run_experiment, write_table_csv, ExperimentSpec};

fn main() -> netcausal::Result<()> {
    let sizes: Vec<usize> = std::env::args().skip(1).map(|s| s.parse().expect("sizes must be integers")).collect();
    let sizes = if sizes.is_empty() { vec![200, 400] } else { sizes };
    let mut rows = Vec::new();
    for n in sizes {
        let report = run_experiment(&ExperimentSpec::table1(n))?;
        let (de, ie) = report.covers();
        eprintln!("n = {n}: DE covered {de}, IE covered {ie}, {:.1}s", report.timing.total_sec);
        rows.extend(report.rows());
    }
    write_table_csv(&rows, std::io::stdout())
}

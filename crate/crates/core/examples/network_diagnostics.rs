//! Builds each network family and prints its spectral diagnostics.
//!
//! ```text
//! cargo run --release --example network_diagnostics -- 400
//! ```

use netcausal::network::{complete_graph, diagnostics, erdos_renyi, gaussian_sk, graphon, regular_graph};
use netcausal::pipeline::{substream, Stage};

fn main() -> netcausal::Result<()> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse().expect("n must be an integer")).unwrap_or(200);
    let beta = 0.3;
    let mut rng = substream(1, Stage::Network, 0);
    let nets = vec![
        ("complete", complete_graph(n, beta)?),
        ("regular d=10", regular_graph(n, 10, beta, &mut rng)?),
        ("erdos-renyi p=0.05", erdos_renyi(n, 0.05, beta, &mut rng)?),
        ("graphon xy", graphon(n, |x, y| x * y, 0.2, beta, &mut rng)?),
        ("gaussian", gaussian_sk(n, beta, &mut rng)?),
    ];
    println!("{:<20} {:>8} {:>12} {:>10} {:>10}", "family", "||A||", "tr(A^2)/n", "mean-field", "high-temp");
    for (name, a) in &nets {
        let d = diagnostics(a);
        println!(
            "{name:<20} {:>8.4} {:>12.3e} {:>10} {:>10}",
            d.op_norm, d.trace_sq_over_n, d.mean_field_flag, d.high_temp_flag
        );
    }
    Ok(())
}

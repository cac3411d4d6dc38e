//! Tilted moments of the built-in base measures.
//!
//! ```text
//! cargo run --example measure_tilts
//! ```

use netcausal::measure::{BaseMeasure, TiltParams};

fn main() {
    let measures = [
        ("rademacher", BaseMeasure::rademacher()),
        ("uniform", BaseMeasure::uniform()),
        ("three-point", BaseMeasure::discrete(&[(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]).unwrap()),
    ];
    println!("{:<12} {:>8} {:>8} {:>10} {:>10} {:>10}", "measure", "lambda1", "lambda2", "alpha", "mean", "var");
    for (name, mu) in &measures {
        for (l1, l2) in [(0.0, 0.0), (1.0, 0.0), (1.0, 2.0), (-3.0, 0.5)] {
            let m = mu.tilt(TiltParams::new(l1, l2));
            println!("{name:<12} {l1:>8.2} {l2:>8.2} {:>10.5} {:>10.5} {:>10.5}", m.log_norm, m.mean, m.var);
        }
    }
    // the Rademacher tilt is tanh of the linear part
    let mu = BaseMeasure::rademacher();
    let gap = (mu.alpha_prime(TiltParams::linear(0.7)) - 0.7f64.tanh()).abs();
    println!("\n|alpha'(0.7) - tanh(0.7)| = {gap:.1e}");
}

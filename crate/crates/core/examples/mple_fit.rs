//! Simulates a dataset, then recovers the outcome and propensity parameters by
//! maximum pseudo-likelihood.
//!
//! ```text
//! cargo run --release --example mple_fit
//! ```

use netcausal::mple::{fit_outcome, fit_propensity, FitOptions};
use netcausal::pipeline::{simulate_dataset, ExperimentSpec, Network};
use netcausal::ModelParams;

fn main() -> netcausal::Result<()> {
    let mut spec = ExperimentSpec::table1(800).with_seed(21);
    spec.params.gamma = vec![0.5];
    let net = Network::generate(&spec.network, spec.n, spec.seed)?;
    let data = simulate_dataset(&spec, &net)?;

    let init = ModelParams::new(0.0, vec![0.0], vec![0.0]);
    let opts = FitOptions::default();
    let fit = fit_outcome(&data, &net.a, &spec.mu, &init, &opts)?;
    println!(
        "outcome:    tau = {:.3} (true {}), theta = {:.3} (true {})",
        fit.params.tau, spec.params.tau, fit.params.theta[0], spec.params.theta[0]
    );
    println!(
        "            {} iterations, projected gradient {:.1e}, min Hessian eigenvalue {:.3}",
        fit.iterations, fit.projected_grad_norm, fit.min_hessian_eig
    );
    let prop = fit_propensity(&data.t, &data.x, &net.a, &init, &opts)?;
    println!("propensity: gamma = {:.3} (true {})", prop.params.gamma[0], spec.params.gamma[0]);
    Ok(())
}

//! AMP estimates on a Gaussian coupling matrix, with the TAP residual compared
//! to the residual of the independent-site means.
//!
//! ```text
//! cargo run --release --example amp_effects
//! ```

use netcausal::amp::{estimate_effects_amp, tap_residual, AmpFixedPoints, DEFAULT_MC_SAMPLES};
use netcausal::model::{sample_allocation, sample_covariates};
use netcausal::network::gaussian_ensemble;
use netcausal::{Allocation, BaseMeasure, CovariateDist};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> netcausal::Result<()> {
    let (n, beta, tau, theta) = (1000, 0.3, 0.5, [2.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = gaussian_ensemble(n, &mut rng)?;
    let mu = BaseMeasure::rademacher();
    let cov = CovariateDist::default();
    let x = sample_covariates(n, 1, &cov, &mut rng)?;
    let t_bar = sample_allocation(n, 0.5, &mut rng);

    let fps = AmpFixedPoints::solve(&mu, tau, &theta, &cov, beta, DEFAULT_MC_SAMPLES, 1e-10, &mut rng)?;
    println!("treated fixed point: q = {:.4}, sigma2 = {:.4}", fps.treated.q, fps.treated.sigma2);
    println!("control fixed point: q = {:.4}, sigma2 = {:.4}", fps.control.q, fps.control.sigma2);

    let est = estimate_effects_amp(&g, &mu, tau, &theta, &t_bar, &x, beta, &fps, 30, Allocation::default())?;
    println!("DE = {:.4}, IE = {:.4}", est.effects.de, est.effects.ie);

    let h: Vec<f64> = (0..n).map(|i| tau * t_bar[i] + theta[0] * x.row(i)[0]).collect();
    let naive: Vec<f64> = h.iter().map(|v| v.tanh()).collect();
    let sigma2 = fps.treated.sigma2;
    println!("TAP residual, AMP:          {:.2e}", tap_residual(&g, &mu, &h, beta, sigma2, &est.treated.m));
    println!("TAP residual, independent:  {:.2e}", tap_residual(&g, &mu, &h, beta, sigma2, &naive));
    Ok(())
}

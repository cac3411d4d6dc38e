//! Compares Gibbs-sampled outcome means with exact enumeration on a small graph.
//!
//! ```text
//! cargo run --release --example gibbs_vs_enumeration
//! ```

use netcausal::model::{brute_force_means, chain_means, GibbsChain, GibbsSchedule};
use netcausal::validate::small_instance;
use netcausal::{BaseMeasure, OutcomeModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> netcausal::Result<()> {
    let (a, t, x) = small_instance();
    let mu = BaseMeasure::rademacher();
    let model = OutcomeModel::new(&a, 0.5, vec![2.0], &mu)?;
    let exact = brute_force_means(&model, &t, &x)?;
    let mut chain = GibbsChain::for_outcome(&model, &t, &x)?;
    let est = chain_means(&mut chain, GibbsSchedule::new(101_000, 1_000)?, 100, &mut ChaCha8Rng::seed_from_u64(7));
    println!("log Z = {:.6}", exact.log_z);
    println!("{:>4} {:>10} {:>10} {:>8}", "site", "exact", "gibbs", "z");
    for i in 0..a.n() {
        let z = (est.mean[i] - exact.means[i]) / est.std_err[i];
        println!("{i:>4} {:>10.5} {:>10.5} {z:>8.2}", exact.means[i], est.mean[i]);
    }
    Ok(())
}

//! Mean-field estimates of the direct and indirect effects on a complete graph,
//! for a uniform and a skewed treatment allocation.
//!
//! ```text
//! cargo run --release --example meanfield_effects
//! ```

use netcausal::meanfield::{estimate_effects_mf, MeanFieldOptions};
use netcausal::model::{sample_allocation, sample_covariates};
use netcausal::network::complete_graph;
use netcausal::{Allocation, BaseMeasure, CovariateDist, OutcomeModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> netcausal::Result<()> {
    let n = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = complete_graph(n, 0.3)?;
    let mu = BaseMeasure::rademacher();
    let model = OutcomeModel::new(&a, 0.5, vec![2.0], &mu)?;
    let x = sample_covariates(n, 1, &CovariateDist::default(), &mut rng)?;
    let t_bar = sample_allocation(n, 0.5, &mut rng);
    for p in [0.5, 0.3] {
        let e = estimate_effects_mf(&model, &t_bar, &x, &MeanFieldOptions::default(), Allocation::new(p)?)?;
        println!(
            "p = {p}: DE = {:.4}, IE = {:.4} ({} + {} iterations)",
            e.effects.de, e.effects.ie, e.state.treated.iter, e.state.control.iter
        );
    }
    Ok(())
}

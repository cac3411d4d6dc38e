//! Quick self-checks against exact oracles, run by `netcausal validate`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::amp::{AmpFixedPoints, FixedPointProblem, McSample, Variant, solve_fixed_point_with};
use crate::estimand::Allocation;
use crate::meanfield::{estimate_effects_mf, mf_iterate, MeanFieldOptions};
use crate::measure::{BaseMeasure, TiltParams};
use crate::model::{brute_force_means, chain_means, Covariates, CovariateDist, GibbsChain, GibbsSchedule, OutcomeModel};
use crate::network::{complete_graph, gaussian_ensemble, InteractionMatrix};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Fixed eight-site instance: complete graph, `β = 0.3`, `τ = 0.5`, `θ = 2`.
pub fn small_instance() -> (InteractionMatrix, Vec<f64>, Covariates) {
    let a = complete_graph(8, 0.3).expect("valid preset");
    let t = vec![1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0];
    let x = Covariates::from_column(vec![0.1, -0.4, 0.8, -0.9, 0.3, 0.0, -0.2, 0.6]).expect("in range");
    (a, t, x)
}

fn gibbs_vs_enumeration(sweeps: usize) -> Check {
    let (a, t, x) = small_instance();
    let mu = BaseMeasure::rademacher();
    let model = OutcomeModel::new(&a, 0.5, vec![2.0], &mu).expect("valid model");
    let exact = brute_force_means(&model, &t, &x).expect("small instance");
    let mut chain = GibbsChain::for_outcome(&model, &t, &x).expect("shapes match");
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let est = chain_means(&mut chain, GibbsSchedule::new(sweeps + 1000, 1000).expect("valid"), 50, &mut rng);
    let worst = (0..8)
        .map(|i| (est.mean[i] - exact.means[i]).abs() / est.std_err[i])
        .fold(0.0, f64::max);
    check("gibbs-vs-enumeration", worst <= 3.0, format!("max |z| = {worst:.2} over 8 sites"))
}

fn mean_field_fixed_point() -> Check {
    let (a, t, x) = small_instance();
    let mu = BaseMeasure::rademacher();
    let model = OutcomeModel::new(&a, 0.5, vec![2.0], &mu).expect("valid model");
    let opts = MeanFieldOptions {
        max_iter: 200,
        ..MeanFieldOptions::default()
    };
    let run = mf_iterate(&model, &t, &x, &opts).expect("finite");
    let au = a.matvec(&run.u);
    let field = model.external_field(&t, &x).expect("shapes match");
    let err = (0..8)
        .map(|i| (run.u[i] - mu.alpha_prime(TiltParams::linear(au[i] + field[i]))).abs())
        .fold(0.0, f64::max);
    check(
        "mean-field-fixed-point",
        run.converged && err <= 1e-8,
        format!("{} iterations, residual {:.1e}, max equation error {err:.1e}", run.iter, run.residual),
    )
}

fn tilt_derivatives() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for mu in [BaseMeasure::rademacher(), BaseMeasure::uniform()] {
        for _ in 0..100 {
            let l1 = rng.random_range(-5.0..5.0);
            let l2 = rng.random_range(0.0..5.0);
            let f = |x: f64| mu.alpha(TiltParams::new(x, l2));
            let g = |x: f64| mu.alpha_prime(TiltParams::new(x, l2));
            let d1 = (f(l1 + h) - f(l1 - h)) / (2.0 * h);
            let d2 = (g(l1 + h) - g(l1 - h)) / (2.0 * h);
            let m = mu.tilt(TiltParams::new(l1, l2));
            worst = worst.max((d1 - m.mean).abs()).max((d2 - m.var).abs());
        }
    }
    check("tilt-derivatives", worst <= 1e-6, format!("max finite-difference error {worst:.1e}"))
}

fn fixed_point_uniqueness() -> Check {
    let mu = BaseMeasure::rademacher();
    let sample = McSample::draw(1000, &[2.0], &CovariateDist::default(), &mut ChaCha8Rng::seed_from_u64(3))
        .expect("valid sample");
    let p = FixedPointProblem {
        mu: &mu,
        tau: 0.5,
        beta: 0.3,
        variant: Variant::TreatedRandom,
    };
    let a = solve_fixed_point_with(&p, &sample, (1.0, 0.0), 1e-13);
    let b = solve_fixed_point_with(&p, &sample, (0.2, 0.5), 1e-13);
    match (a, b) {
        (Ok(a), Ok(b)) => {
            let gap = (a.q - b.q).abs().max((a.sigma2 - b.sigma2).abs());
            check(
                "fixed-point-uniqueness",
                a.converged && b.converged && gap <= 1e-10,
                format!("q = {:.6}, sigma2 = {:.6}, gap {gap:.1e}", a.q, a.sigma2),
            )
        }
        _ => check("fixed-point-uniqueness", false, "solver failed".into()),
    }
}

fn degenerate_identities() -> Check {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = gaussian_ensemble(n, &mut rng).expect("valid");
    let zero = InteractionMatrix::zeros(n);
    let t = crate::model::sample_allocation(n, 0.5, &mut rng);
    let x = crate::model::sample_covariates(n, 1, &CovariateDist::default(), &mut rng).expect("valid");
    let mu = BaseMeasure::uniform();
    let cov = CovariateDist::default();
    let alloc = Allocation::default();
    let opts = MeanFieldOptions::default();

    let null = OutcomeModel::new(&zero, 0.0, vec![0.0], &mu).expect("valid");
    let mf0 = estimate_effects_mf(&null, &t, &Covariates::zeros(n, 1), &opts, alloc).expect("finite");
    let fps0 = AmpFixedPoints::solve(&mu, 0.0, &[0.0], &cov, 0.3, 1000, 1e-12, &mut rng).expect("finite");
    let amp0 = crate::amp::estimate_effects_amp(&g, &mu, 0.0, &[0.0], &t, &Covariates::zeros(n, 1), 0.3, &fps0, 20, alloc)
        .expect("finite");
    let zeros = [mf0.effects.de, mf0.effects.ie, amp0.effects.de, amp0.effects.ie]
        .iter()
        .all(|&v| v == 0.0);

    let model = OutcomeModel::new(&zero, 0.5, vec![2.0], &mu).expect("valid");
    let mf = estimate_effects_mf(&model, &t, &x, &opts, alloc).expect("finite");
    let fps = AmpFixedPoints::solve(&mu, 0.5, &[2.0], &cov, 0.0, 1000, 1e-12, &mut rng).expect("finite");
    let amp = crate::amp::estimate_effects_amp(&g, &mu, 0.5, &[2.0], &t, &x, 0.0, &fps, 20, alloc).expect("finite");
    let same = amp.treated.m == mf.state.treated.u && amp.control.m == mf.state.control.u && amp.effects == mf.effects;
    check(
        "degenerate-identities",
        zeros && same,
        format!("null effects zero: {zeros}, beta = 0 AMP equals mean-field: {same}"),
    )
}

/// Runs every check; `sweeps` sets the Gibbs budget of the sampler check.
pub fn run_all(sweeps: usize) -> Vec<Check> {
    vec![
        gibbs_vs_enumeration(sweeps),
        mean_field_fixed_point(),
        tilt_derivatives(),
        fixed_point_uniqueness(),
        degenerate_identities(),
    ]
}

#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;
use netcausal::amp::{
    amp_iterate, solve_fixed_point_with, AmpFixedPoints, FixedPointProblem, McSample, Variant,
};
use netcausal::estimand::effects_from_means;
use netcausal::meanfield::{estimate_effects_mf, mf_iterate, MeanFieldOptions};
use netcausal::measure::{BaseMeasure, TiltParams};
use netcausal::model::{
    brute_force_means, enumerate_means, sample_allocation, sample_covariates, CovariateDist, Covariates,
    Dataset, ModelParams, OutcomeModel,
};
use netcausal::mple::{fit_outcome, pl_objective, FitOptions};
use netcausal::network::{
    complete_graph, erdos_renyi, gaussian_ensemble, gaussian_sk, graphon, operator_norm, regular_graph,
    InteractionMatrix,
};
use netcausal::pipeline::{quantile_ci, run_experiment, ExperimentSpec};
use netcausal::Allocation;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn measures() -> [BaseMeasure; 3] {
    [
        BaseMeasure::rademacher(),
        BaseMeasure::uniform(),
        BaseMeasure::discrete(&[(-1.0, 0.2), (0.3, 0.5), (0.9, 0.3)]).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tilt_moments_in_range(l1 in -50.0f64..50.0, l2 in 0.0f64..20.0) {
        for mu in measures() {
            let lam = TiltParams::new(l1, l2);
            let m = mu.alpha_prime(lam);
            let v = mu.alpha_second(lam);
            prop_assert!((-1.0..=1.0).contains(&m));
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn alpha_is_midpoint_convex(a in -8.0f64..8.0, b in -8.0f64..8.0, l2 in 0.0f64..4.0) {
        for mu in measures() {
            let f = |x: f64| mu.alpha(TiltParams::new(x, l2));
            prop_assert!(f(0.5 * (a + b)) <= 0.5 * f(a) + 0.5 * f(b) + 1e-10);
        }
    }

    #[test]
    fn derivative_consistency(l1 in -5.0f64..5.0, l2 in 0.0f64..4.0) {
        let h = 1e-4;
        for mu in measures() {
            let f = |x: f64| mu.alpha(TiltParams::new(x, l2));
            let g = |x: f64| mu.alpha_prime(TiltParams::new(x, l2));
            let lam = TiltParams::new(l1, l2);
            prop_assert!(((f(l1 + h) - f(l1 - h)) / (2.0 * h) - mu.alpha_prime(lam)).abs() <= 1e-6);
            prop_assert!(((g(l1 + h) - g(l1 - h)) / (2.0 * h) - mu.alpha_second(lam)).abs() <= 1e-6);
        }
    }

    #[test]
    fn quantile_ci_is_permutation_invariant(mut v in prop::collection::vec(-3.0f64..3.0, 1..60), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let a = quantile_ci(&v, 0.05).unwrap();
        v.shuffle(&mut rng(seed));
        prop_assert_eq!(a, quantile_ci(&v, 0.05).unwrap());
    }

    #[test]
    fn ci_grows_as_zeta_shrinks(v in prop::collection::vec(-3.0f64..3.0, 1..60), z1 in 0.01f64..0.99, z2 in 0.01f64..0.99) {
        let (small, large) = if z1 < z2 { (z1, z2) } else { (z2, z1) };
        let wide = quantile_ci(&v, small).unwrap();
        let narrow = quantile_ci(&v, large).unwrap();
        prop_assert!(wide.0 <= narrow.0 && narrow.1 <= wide.1);
        prop_assert!(narrow.0 <= narrow.1);
    }

    #[test]
    fn constructors_satisfy_invariants(n in 4usize..40, beta in 0.0f64..1.0, seed in any::<u64>(), p in 0.01f64..1.0) {
        let mut r = rng(seed);
        let d = 2 * (1 + n / 8).min(n / 2 - 1).max(1);
        let mats = [
            complete_graph(n, beta).unwrap(),
            regular_graph(n, d, beta, &mut r).unwrap(),
            erdos_renyi(n, p, beta, &mut r).unwrap(),
            graphon(n, |x, y| x * y, 0.5, beta, &mut r).unwrap(),
            gaussian_sk(n, beta, &mut r).unwrap(),
        ];
        for a in &mats {
            prop_assert!(a.check_invariants().is_ok());
            for i in 0..n {
                prop_assert_eq!(a.get(i, i), 0.0);
                for j in 0..n {
                    prop_assert_eq!(a.get(i, j), a.get(j, i));
                }
            }
        }
    }

    #[test]
    fn effects_are_bounded(n in 2usize..30, seed in any::<u64>(), tau in -1.0f64..1.0, theta in -5.0f64..5.0) {
        let mut r = rng(seed);
        let a = complete_graph(n, 0.3).unwrap();
        let mu = BaseMeasure::uniform();
        let model = OutcomeModel::new(&a, tau, vec![theta], &mu).unwrap();
        let t = sample_allocation(n, 0.5, &mut r);
        let x = sample_covariates(n, 1, &CovariateDist::default(), &mut r).unwrap();
        let e = estimate_effects_mf(&model, &t, &x, &MeanFieldOptions::default(), Allocation::default()).unwrap();
        prop_assert!(e.effects.de.abs() <= 2.0 && e.effects.ie.abs() <= 2.0);
    }

    #[test]
    fn mean_field_is_permutation_equivariant(n in 3usize..20, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut r = rng(seed);
        let a = gaussian_sk(n, 0.3, &mut r).unwrap();
        let mu = BaseMeasure::rademacher();
        let t = sample_allocation(n, 0.5, &mut r);
        let x = sample_covariates(n, 1, &CovariateDist::default(), &mut r).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let ap = a.permuted(&perm);
        let mut tp = vec![0.0; n];
        for i in 0..n {
            tp[perm[i]] = t[i];
        }
        let xp = x.permuted(&perm);
        let opts = MeanFieldOptions { tol: 1e-13, ..MeanFieldOptions::default() };
        let m1 = OutcomeModel::new(&a, 0.5, vec![2.0], &mu).unwrap();
        let m2 = OutcomeModel::new(&ap, 0.5, vec![2.0], &mu).unwrap();
        let e1 = estimate_effects_mf(&m1, &t, &x, &opts, Allocation::default()).unwrap();
        let e2 = estimate_effects_mf(&m2, &tp, &xp, &opts, Allocation::default()).unwrap();
        for i in 0..n {
            prop_assert!((e1.state.treated.u[i] - e2.state.treated.u[perm[i]]).abs() < 1e-10);
        }
        prop_assert!((e1.effects.de - e2.effects.de).abs() < 1e-10);
        prop_assert!((e1.effects.ie - e2.effects.ie).abs() < 1e-10);
    }

    #[test]
    fn enumerated_means_strictly_inside(n in 1usize..7, seed in any::<u64>(), scale in 0.0f64..5.0) {
        let mut r = rng(seed);
        let a = gaussian_sk(n.max(2), 0.5, &mut r).unwrap();
        let h: Vec<f64> = (0..a.n()).map(|_| r.random_range(-scale..scale)).collect();
        let e = enumerate_means(&a, &BaseMeasure::rademacher(), &h).unwrap();
        prop_assert!(e.means.iter().all(|m| m.abs() < 1.0));
    }

    #[test]
    fn ferromagnetic_means_increase_with_tau(n in 2usize..7, seed in any::<u64>(), tau in -1.0f64..0.9) {
        let mut r = rng(seed);
        let a = erdos_renyi(n, 0.7, 0.5, &mut r).unwrap();
        let mu = BaseMeasure::rademacher();
        let x = sample_covariates(n, 1, &CovariateDist::default(), &mut r).unwrap();
        let t = vec![1.0; n];
        let lo = brute_force_means(&OutcomeModel::new(&a, tau, vec![1.0], &mu).unwrap(), &t, &x).unwrap();
        let hi = brute_force_means(&OutcomeModel::new(&a, tau + 0.1, vec![1.0], &mu).unwrap(), &t, &x).unwrap();
        for i in 0..n {
            prop_assert!(hi.means[i] >= lo.means[i] - 1e-12);
        }
    }

    #[test]
    fn fitted_parameters_stay_in_box(seed in any::<u64>(), b in 0.05f64..1.0, m in 0.1f64..5.0) {
        let mut r = rng(seed);
        let n = 60;
        let a = complete_graph(n, 0.3).unwrap();
        let x = sample_covariates(n, 1, &CovariateDist::default(), &mut r).unwrap();
        let t = sample_allocation(n, 0.5, &mut r);
        let y: Vec<f64> = (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let data = Dataset::new(y, t, x).unwrap();
        let init = ModelParams::new(0.0, vec![0.0], vec![]).with_bounds(b, m);
        let fit = fit_outcome(&data, &a, &BaseMeasure::rademacher(), &init, &FitOptions::default()).unwrap();
        prop_assert!(fit.params.tau.abs() <= b);
        prop_assert!(fit.params.theta[0].abs() <= m);
    }

    #[test]
    fn amp_outputs_stay_bounded(seed in any::<u64>(), beta in 0.0f64..0.5) {
        let mut r = rng(seed);
        let n = 60;
        let g = gaussian_ensemble(n, &mut r).unwrap();
        let mu = BaseMeasure::uniform();
        let t = sample_allocation(n, 0.5, &mut r);
        let x = sample_covariates(n, 1, &CovariateDist::default(), &mut r).unwrap();
        let fps = AmpFixedPoints::solve(&mu, 0.5, &[2.0], &CovariateDist::default(), beta, 200, 1e-12, &mut r).unwrap();
        let st = amp_iterate(&g, &mu, 0.5, &[2.0], &t, &x, beta, &fps.treated, 25).unwrap();
        prop_assert!(st.onsager >= 0.0 && st.onsager_max <= beta + 1e-15);
        prop_assert!(st.m.iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert!((0.0..=1.0).contains(&fps.treated.q) && (0.0..=1.0).contains(&fps.treated.sigma2));
    }
}

#[test]
fn tilt_sampling_law_of_large_numbers() {
    let mut r = rng(1);
    let draws = 100_000;
    for mu in measures() {
        for lam in [TiltParams::new(0.0, 0.0), TiltParams::new(0.7, 1.5), TiltParams::new(-2.0, 0.3)] {
            let s: Vec<f64> = (0..draws).map(|_| mu.tilt_sample(lam, &mut r)).collect();
            let mean = s.iter().sum::<f64>() / draws as f64;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / draws as f64;
            let sd = mu.alpha_second(lam).sqrt();
            assert!((mean - mu.alpha_prime(lam)).abs() <= 3.0 * sd / (draws as f64).sqrt());
            // variance of the sample variance is at most E[(x − m)⁴] ≤ 4·var
            assert!((var - mu.alpha_second(lam)).abs() <= 3.0 * (4.0 * mu.alpha_second(lam) / draws as f64).sqrt());
        }
    }
}

#[test]
fn erdos_renyi_with_p_one_is_complete() {
    for n in [2, 7, 50] {
        let a = erdos_renyi(n, 1.0, 0.3, &mut rng(n as u64)).unwrap();
        assert_eq!(a.to_dense(), complete_graph(n, 0.3).unwrap().to_dense());
    }
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let m = v.iter().sum::<f64>() / k;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
    (m, (var / k).sqrt())
}

#[test]
fn trace_formulas_match_families() {
    let (n, beta) = (200, 0.3);
    let nf = n as f64;
    let complete = complete_graph(n, beta).unwrap().trace_sq() / nf;
    assert!((complete - beta * beta * (nf - 1.0) / (nf * nf)).abs() < 1e-14);
    let regular = regular_graph(n, 10, beta, &mut rng(1)).unwrap().trace_sq() / nf;
    assert!((regular - beta * beta / 10.0).abs() < 1e-14);

    let p = 0.1;
    let er: Vec<f64> = (0..20)
        .map(|s| erdos_renyi(n, p, beta, &mut rng(s)).unwrap().trace_sq() / nf)
        .collect();
    let (m, se) = mean_and_se(&er);
    let want = beta * beta * (nf - 1.0) / (nf * nf * p);
    assert!((m - want).abs() <= 3.0 * se, "{m} vs {want} (se {se})");

    let gauss: Vec<f64> = (0..20)
        .map(|s| gaussian_sk(n, beta, &mut rng(s)).unwrap().trace_sq() / nf)
        .collect();
    let (m, se) = mean_and_se(&gauss);
    let want = beta * beta * (nf - 1.0) / nf;
    assert!((m - want).abs() <= 3.0 * se, "{m} vs {want} (se {se})");

    // W(x, y) = xy with rho = 1/2: entries β/(nρ) with probability ρ·U_iU_j
    let gr: Vec<f64> = (0..20)
        .map(|s| graphon(n, |x, y| x * y, 0.5, beta, &mut rng(s)).unwrap().trace_sq() / nf)
        .collect();
    let (m, se) = mean_and_se(&gr);
    let want = (nf - 1.0) * 0.5 / 4.0 * (beta / (nf * 0.5)).powi(2);
    assert!((m - want).abs() <= 3.0 * se, "{m} vs {want} (se {se})");
}

// One systematic sweep as a 2ⁿ × 2ⁿ transition matrix on {±1}ⁿ.
fn sweep_kernel(a: &InteractionMatrix, h: &[f64]) -> DMatrix<f64> {
    let n = a.n();
    let s = 1usize << n;
    let spin = |c: usize, i: usize| if c >> i & 1 == 1 { 1.0 } else { -1.0 };
    let mut total = DMatrix::identity(s, s);
    for i in 0..n {
        let mut k = DMatrix::zeros(s, s);
        for c in 0..s {
            let field: f64 = (0..n).filter(|&j| j != i).map(|j| a.get(i, j) * spin(c, j)).sum::<f64>() + h[i];
            let up = 1.0 / (1.0 + (-2.0 * field).exp());
            k[(c, c | 1 << i)] += up;
            k[(c, c & !(1 << i))] += 1.0 - up;
        }
        total *= k;
    }
    total
}

#[test]
fn gibbs_kernel_preserves_enumerated_measure() {
    let mut r = rng(4);
    for n in 1..=4 {
        for _ in 0..5 {
            let a = if n == 1 { InteractionMatrix::zeros(1) } else { gaussian_sk(n, 0.8, &mut r).unwrap() };
            let h: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            let p = sweep_kernel(&a, &h);
            let s = 1usize << n;
            // stationary law: solve π(P − I) = 0 with Σπ = 1
            let mut sys = p.transpose() - DMatrix::identity(s, s);
            for c in 0..s {
                sys[(s - 1, c)] = 1.0;
            }
            let mut rhs = nalgebra::DVector::zeros(s);
            rhs[s - 1] = 1.0;
            let pi = sys.lu().solve(&rhs).unwrap();
            let mut exact = vec![0.0; n];
            for c in 0..s {
                for i in 0..n {
                    exact[i] += pi[c] * if c >> i & 1 == 1 { 1.0 } else { -1.0 };
                }
            }
            let e = enumerate_means(&a, &BaseMeasure::rademacher(), &h).unwrap();
            // compare full distributions through the Boltzmann weights
            let weights: Vec<f64> = (0..s)
                .map(|c| {
                    let y: Vec<f64> = (0..n).map(|i| if c >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                    let ay = a.matvec(&y);
                    let energy: f64 = (0..n).map(|i| 0.5 * y[i] * ay[i] + h[i] * y[i]).sum();
                    energy.exp()
                })
                .collect();
            let z: f64 = weights.iter().sum();
            for c in 0..s {
                assert!((pi[c] - weights[c] / z).abs() <= 1e-10);
            }
            for i in 0..n {
                assert!((exact[i] - e.means[i]).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn mean_field_contraction_certificate() {
    let mut r = rng(12);
    let mu = BaseMeasure::rademacher();
    for (k, a) in [
        complete_graph(100, 0.3).unwrap(),
        gaussian_sk(100, 0.15, &mut r).unwrap(),
        erdos_renyi(100, 0.2, 0.25, &mut r).unwrap(),
    ]
    .into_iter()
    .enumerate()
    {
        let norm = operator_norm(&a, 1e-10, 10_000).value;
        assert!(norm <= 0.3 + 1e-9, "case {k}: norm {norm}");
        let budget = ((1e-8f64).ln() / norm.ln()).ceil() as usize + 50;
        let t = sample_allocation(100, 0.5, &mut r);
        let x = sample_covariates(100, 1, &CovariateDist::default(), &mut r).unwrap();
        let model = OutcomeModel::new(&a, 0.5, vec![2.0], &mu).unwrap();
        let run = mf_iterate(&model, &t, &x, &MeanFieldOptions::default()).unwrap();
        assert!(run.converged && run.iter <= budget, "case {k}: {} iterations > {budget}", run.iter);
    }
}

#[test]
fn uniform_allocation_formula_is_exact() {
    let mut r = rng(13);
    let n = 40;
    let t = sample_allocation(n, 0.5, &mut r);
    let u: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let ut: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let e = effects_from_means(&t, &u, &ut, Allocation::new(0.5).unwrap());
    let de = 2.0 / n as f64 * t.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
    let ie = (u.iter().sum::<f64>() - ut.iter().sum::<f64>()) / n as f64 - 0.5 * de;
    assert_eq!(e.de.to_bits(), de.to_bits());
    assert_eq!(e.ie.to_bits(), ie.to_bits());
}

#[test]
fn fixed_point_is_stationary_and_continuous_in_beta() {
    let mu = BaseMeasure::rademacher();
    let sample = McSample::draw(1000, &[2.0], &CovariateDist::default(), &mut rng(14)).unwrap();
    let mut prev: Option<(f64, f64)> = None;
    for beta in [0.25, 0.3, 0.35] {
        let p = FixedPointProblem {
            mu: &mu,
            tau: 0.5,
            beta,
            variant: Variant::TreatedRandom,
        };
        let fp = solve_fixed_point_with(&p, &sample, (1.0, 0.0), 1e-12).unwrap();
        // restarting at the solution stops after one step
        let again = solve_fixed_point_with(&p, &sample, (fp.sigma2, fp.q), 1e-12).unwrap();
        assert_eq!(again.iterations, 1);
        if let Some((q, s)) = prev {
            assert!((fp.q - q).abs() <= 0.2 && (fp.sigma2 - s).abs() <= 0.2);
        }
        prev = Some((fp.q, fp.sigma2));
    }
}

#[test]
fn plug_in_stability() {
    let mut r = rng(15);
    let n = 200;
    let mu = BaseMeasure::rademacher();
    let a = complete_graph(n, 0.3).unwrap();
    let t = sample_allocation(n, 0.5, &mut r);
    let x = sample_covariates(n, 1, &CovariateDist::default(), &mut r).unwrap();
    let opts = MeanFieldOptions::default();
    let eval = |tau: f64, theta: f64| {
        let m = OutcomeModel::new(&a, tau, vec![theta], &mu).unwrap();
        estimate_effects_mf(&m, &t, &x, &opts, Allocation::default()).unwrap().effects
    };
    let base = eval(0.5, 2.0);
    for (dt, dth) in [(0.05, 0.0), (0.0, 0.05), (-0.05, 0.05), (0.03, -0.04)] {
        let e = eval(0.5 + dt, 2.0 + dth);
        let delta = f64::max(f64::abs(dt), f64::abs(dth));
        assert!((e.de - base.de).abs() / delta <= 10.0);
        assert!((e.ie - base.ie).abs() / delta <= 10.0);
    }
}

#[test]
fn objective_never_decreases_along_iterations() {
    let spec = ExperimentSpec::table1(150).with_seed(16);
    let net = netcausal::pipeline::Network::generate(&spec.network, 150, 16).unwrap();
    let data = netcausal::pipeline::simulate_dataset(&spec, &net).unwrap();
    let init = ModelParams::new(-1.0, vec![-5.0], vec![]);
    let mut last = pl_objective(&data, &net.a, &spec.mu, -1.0, &[-5.0]).unwrap();
    for k in 1..8 {
        let opts = FitOptions { tol: 1e-12, max_iter: k };
        let f = fit_outcome(&data, &net.a, &spec.mu, &init, &opts).unwrap();
        assert!(f.objective >= last);
        last = f.objective;
    }
}

#[test]
fn experiment_report_is_byte_identical() {
    let mut spec = ExperimentSpec::table1(100).with_seed(77);
    spec.estimator.replicates = 20;
    let a = run_experiment(&spec).unwrap();
    let b = run_experiment(&spec).unwrap();
    assert_eq!(a.body_json().unwrap(), b.body_json().unwrap());
}

#[test]
fn coverage_smoke_test() {
    let mut covered = 0;
    for s in 0..20u64 {
        let mut spec = ExperimentSpec::table1(200).with_seed(500 + s);
        spec.estimator.epsilon = 0.02;
        let r = run_experiment(&spec).unwrap();
        covered += usize::from(r.covers().0);
    }
    println!("DE coverage {covered}/20");
    assert!(covered >= 15, "DE truth covered in {covered}/20 runs");
}

#[test]
fn fitted_and_true_effects_agree_at_scale() {
    let mut gaps: Vec<f64> = (0..5u64)
        .map(|s| {
            let r = run_experiment(&ExperimentSpec::table1(800).with_seed(900 + s)).unwrap();
            (r.body.estimate.de_avg - r.body.truth.de_avg).abs()
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    println!("|DE(fitted) - DE(true)| median {:.4}", gaps[2]);
    assert!(gaps[2] <= 0.1);
}

#[test]
fn treatment_sampler_matches_enumeration() {
    use netcausal::model::{brute_force_treatment_means, GibbsChain, PropensityModel, chain_means, GibbsSchedule};
    let n = 6;
    let m = complete_graph(n, 0.3).unwrap();
    let x = Covariates::from_column(vec![0.5, -0.5, 0.2, 0.9, -0.1, 0.0]).unwrap();
    let model = PropensityModel::new(&m, vec![0.8]).unwrap();
    let exact = brute_force_treatment_means(&model, &x).unwrap();
    let coin = BaseMeasure::rademacher();
    let mut chain = GibbsChain::for_treatment(&model, &x, &coin).unwrap();
    chain.set_state(&[1.0; 6]);
    let est = chain_means(&mut chain, GibbsSchedule::new(51_000, 1_000).unwrap(), 50, &mut rng(17));
    for i in 0..n {
        assert!((est.mean[i] - exact.means[i]).abs() <= 3.0 * est.std_err[i], "site {i}");
    }
}

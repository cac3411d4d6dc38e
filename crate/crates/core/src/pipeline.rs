//! End-to-end experiments: simulate an observed dataset, fit the outcome
//! model by pseudo-likelihood, plug the fit into the mean-field or AMP
//! estimator over `k` Monte-Carlo draws of `(T̄, X̄)`, and compare against the
//! same draws evaluated at the true parameters.
//!
//! Every random quantity comes from its own ChaCha8 substream of one master
//! seed, keyed by a stage tag and an index, so replicates can run in any
//! order and the report stays byte-identical.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amp::{estimate_effects_amp, AmpFixedPoints, DEFAULT_MC_SAMPLES};
use crate::error::{Error, Result};
use crate::estimand::Allocation;
use crate::meanfield::{estimate_effects_mf, MeanFieldOptions};
use crate::measure::BaseMeasure;
use crate::mple::{fit_outcome, FitOptions, FitResult};
use crate::model::{
    gibbs_sample_outcome, gibbs_sample_treatment, sample_allocation, sample_covariates, CovariateDist,
    Dataset, GibbsSchedule, ModelParams, OutcomeModel, PropensityModel,
};
use crate::network::{
    complete_graph, diagnostics, erdos_renyi, gaussian_ensemble, regular_graph, Diagnostics,
    InteractionMatrix,
};

/// Stage tags for seed substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Network = 1,
    Covariates = 2,
    Treatment = 3,
    Outcome = 4,
    Replicate = 5,
    FixedPoint = 6,
}

/// Independent generator for `(stage, index)` derived from `master`.
pub fn substream(master: u64, stage: Stage, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((stage as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    MeanField,
    Amp,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meanfield" => Ok(Algorithm::MeanField),
            "amp" => Ok(Algorithm::Amp),
            other => Err(Error::InvalidArgument(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Interaction graph to generate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NetworkSpec {
    Complete { beta: f64 },
    Regular { d: usize, beta: f64 },
    ErdosRenyi { p: f64, beta: f64 },
    /// `A = βG` with `G` the normalized Gaussian ensemble.
    Gaussian { beta: f64 },
}

impl NetworkSpec {
    pub fn beta(&self) -> f64 {
        match *self {
            NetworkSpec::Complete { beta }
            | NetworkSpec::Regular { beta, .. }
            | NetworkSpec::ErdosRenyi { beta, .. }
            | NetworkSpec::Gaussian { beta } => beta,
        }
    }
}

/// The generated interaction matrix; Gaussian networks also keep `G`.
#[derive(Debug, Clone)]
pub struct Network {
    pub a: InteractionMatrix,
    pub g: Option<InteractionMatrix>,
    pub beta: f64,
}

impl Network {
    pub fn generate(spec: &NetworkSpec, n: usize, master: u64) -> Result<Self> {
        let mut rng = substream(master, Stage::Network, 0);
        let beta = spec.beta();
        let (a, g) = match *spec {
            NetworkSpec::Complete { beta } => (complete_graph(n, beta)?, None),
            NetworkSpec::Regular { d, beta } => (regular_graph(n, d, beta, &mut rng)?, None),
            NetworkSpec::ErdosRenyi { p, beta } => (erdos_renyi(n, p, beta, &mut rng)?, None),
            NetworkSpec::Gaussian { beta } => {
                let g = gaussian_ensemble(n, &mut rng)?;
                (g.scaled(beta), Some(g))
            }
        };
        Ok(Network { a, g, beta })
    }

    /// Wraps a user-supplied matrix. Gaussian AMP input is recovered as
    /// `G = A/β` when `β > 0`.
    pub fn from_matrix(a: InteractionMatrix) -> Self {
        let beta = a.beta();
        let g = (a.family() == crate::network::Family::Gaussian && beta > 0.0).then(|| a.scaled(1.0 / beta));
        Network { a, g, beta }
    }
}

/// How replicates are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub algorithm: Algorithm,
    /// `M`: mean-field iteration cap or exact AMP iteration count.
    pub iterations: usize,
    /// `k`.
    pub replicates: usize,
    pub zeta: f64,
    /// CI fattening added on both sides.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub allocation: Allocation,
    pub covariates: CovariateDist,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Mean-field only; `false` forces exactly `iterations` steps.
    #[serde(default = "default_true")]
    pub early_stop: bool,
}

fn default_mc() -> usize {
    DEFAULT_MC_SAMPLES
}

fn default_tol() -> f64 {
    1e-8
}

fn default_true() -> bool {
    true
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            algorithm: Algorithm::MeanField,
            iterations: 500,
            replicates: 100,
            zeta: 0.05,
            epsilon: 0.0,
            allocation: Allocation::default(),
            covariates: CovariateDist::default(),
            mc_samples: DEFAULT_MC_SAMPLES,
            tol: 1e-8,
            early_stop: true,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("need at least one replicate".into()));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::InvalidArgument(format!("zeta must lie in (0, 1), got {}", self.zeta)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument("epsilon must be >= 0".into()));
        }
        if self.iterations == 0 || (self.algorithm == Algorithm::Amp && self.iterations < 3) {
            return Err(Error::InvalidArgument(format!("too few iterations: {}", self.iterations)));
        }
        Allocation::new(self.allocation.p)?;
        self.covariates.validate()
    }
}

/// Replicated effect estimates with their quantile intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub algo: Algorithm,
    pub oracle: bool,
    pub params: ModelParams,
    pub n: usize,
    pub iterations: usize,
    pub seed: u64,
    pub zeta: f64,
    pub epsilon: f64,
    pub de_replicates: Vec<f64>,
    pub ie_replicates: Vec<f64>,
    pub de_avg: f64,
    pub ie_avg: f64,
    pub ci_de: (f64, f64),
    pub ci_ie: (f64, f64),
    /// Replicates whose iteration did not reach the tolerance (mean-field only).
    pub nonconverged: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_points: Option<AmpFixedPoints>,
}

/// Empirical `q`-quantile of sorted data, interpolating linearly at rank
/// `(k − 1)q + 1`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let k = sorted.len();
    let pos = (k - 1) as f64 * q;
    let lo = pos.floor() as usize;
    if lo + 1 >= k {
        return sorted[k - 1];
    }
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// `(ζ/2, 1 − ζ/2)` empirical quantiles.
pub fn quantile_ci(samples: &[f64], zeta: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::InvalidArgument(format!("zeta must lie in (0, 1), got {zeta}")));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("samples contain NaN".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&s, zeta / 2.0), quantile_sorted(&s, 1.0 - zeta / 2.0)))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct Replicate {
    de: f64,
    ie: f64,
    converged: bool,
}

/// Runs `k` replicates of the configured algorithm at `params`.
///
/// Replicate `j` draws `(T̄, X̄)` from substream `j`, so two calls with the
/// same seed see the same draws whatever the parameters.
pub fn replicate_effects(
    net: &Network,
    mu: &BaseMeasure,
    params: &ModelParams,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<EffectEstimate> {
    cfg.validate()?;
    let n = net.a.n();
    let d = params.theta.len();
    let fixed_points = match cfg.algorithm {
        Algorithm::Amp => {
            if net.g.is_none() {
                return Err(Error::InvalidArgument(
                    "AMP needs a Gaussian network with β > 0".into(),
                ));
            }
            let mut rng = substream(seed, Stage::FixedPoint, 0);
            let fps = AmpFixedPoints::solve(
                mu,
                params.tau,
                &params.theta,
                &cfg.covariates,
                net.beta,
                cfg.mc_samples,
                cfg.tol,
                &mut rng,
            )?;
            if !fps.treated.converged || !fps.control.converged {
                return Err(Error::NotConverged(
                    "fixed-point system (low temperature?)".into(),
                ));
            }
            Some(fps)
        }
        Algorithm::MeanField => None,
    };
    let model = OutcomeModel::new(&net.a, params.tau, params.theta.clone(), mu)?;
    let mf_opts = MeanFieldOptions {
        max_iter: cfg.iterations,
        tol: cfg.tol,
        early_stop: cfg.early_stop,
        damping: 0.0,
    };
    let run_one = |j: usize| -> Result<Replicate> {
        let mut rng = substream(seed, Stage::Replicate, j as u64);
        let t_bar = sample_allocation(n, cfg.allocation.p, &mut rng);
        let x_bar = sample_covariates(n, d, &cfg.covariates, &mut rng)?;
        match &fixed_points {
            None => {
                let r = estimate_effects_mf(&model, &t_bar, &x_bar, &mf_opts, cfg.allocation)?;
                Ok(Replicate {
                    de: r.effects.de,
                    ie: r.effects.ie,
                    converged: r.state.treated.converged && r.state.control.converged,
                })
            }
            Some(fps) => {
                let g = net.g.as_ref().expect("checked above");
                let r = estimate_effects_amp(
                    g,
                    mu,
                    params.tau,
                    &params.theta,
                    &t_bar,
                    &x_bar,
                    net.beta,
                    fps,
                    cfg.iterations,
                    cfg.allocation,
                )?;
                Ok(Replicate {
                    de: r.effects.de,
                    ie: r.effects.ie,
                    converged: true,
                })
            }
        }
    };
    let reps: Vec<Replicate> = (0..cfg.replicates)
        .into_par_iter()
        .map(|j| {
            run_one(j).map_err(|e| Error::Replicate {
                index: j,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let de: Vec<f64> = reps.iter().map(|r| r.de).collect();
    let ie: Vec<f64> = reps.iter().map(|r| r.ie).collect();
    let fatten = |(lo, hi): (f64, f64)| (lo - cfg.epsilon, hi + cfg.epsilon);
    Ok(EffectEstimate {
        algo: cfg.algorithm,
        oracle: false,
        params: params.clone(),
        n,
        iterations: cfg.iterations,
        seed,
        zeta: cfg.zeta,
        epsilon: cfg.epsilon,
        de_avg: mean(&de),
        ie_avg: mean(&ie),
        ci_de: fatten(quantile_ci(&de, cfg.zeta)?),
        ci_ie: fatten(quantile_ci(&ie, cfg.zeta)?),
        de_replicates: de,
        ie_replicates: ie,
        nonconverged: reps.iter().filter(|r| !r.converged).count(),
        fixed_points,
    })
}

/// The replicates evaluated at the true parameters.
pub fn oracle_truth(
    net: &Network,
    mu: &BaseMeasure,
    truth: &ModelParams,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<EffectEstimate> {
    let mut est = replicate_effects(net, mu, truth, cfg, seed)?;
    est.oracle = true;
    Ok(est)
}

/// Full description of one table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub n: usize,
    pub network: NetworkSpec,
    pub mu: BaseMeasure,
    /// True `(τ, θ, γ)` and the box used for fitting.
    pub params: ModelParams,
    pub estimator: EstimatorConfig,
    pub gibbs: GibbsSchedule,
    #[serde(default)]
    pub fit: FitOptions,
    pub seed: u64,
}

impl ExperimentSpec {
    fn preset(n: usize, network: NetworkSpec, algorithm: Algorithm) -> Self {
        ExperimentSpec {
            n,
            network,
            mu: BaseMeasure::rademacher(),
            params: ModelParams::simulation_preset(),
            estimator: EstimatorConfig {
                algorithm,
                ..EstimatorConfig::default()
            },
            gibbs: GibbsSchedule {
                sweeps: 250,
                burn_in: 50,
            },
            fit: FitOptions::default(),
            seed: 1,
        }
    }

    /// Complete graph, `β = 0.3`, mean-field.
    pub fn table1(n: usize) -> Self {
        Self::preset(n, NetworkSpec::Complete { beta: 0.3 }, Algorithm::MeanField)
    }

    /// Erdős–Rényi on 200 nodes with edge probability `p`, `β = 0.3`, mean-field.
    pub fn table2(p: f64) -> Self {
        Self::preset(200, NetworkSpec::ErdosRenyi { p, beta: 0.3 }, Algorithm::MeanField)
    }

    /// Gaussian `A = 0.3·G`, AMP.
    pub fn table3(n: usize) -> Self {
        Self::preset(n, NetworkSpec::Gaussian { beta: 0.3 }, Algorithm::Amp)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument("need n >= 2".into()));
        }
        self.params.validate()?;
        if self.params.gamma.len() != self.params.theta.len() {
            return Err(Error::Dimension("gamma and theta must have the same length".into()));
        }
        GibbsSchedule::new(self.gibbs.sweeps, self.gibbs.burn_in)?;
        self.estimator.validate()
    }

    /// Network size for sweeps over `n`, edge probability for Erdős–Rényi.
    pub fn size_or_p(&self) -> f64 {
        match self.network {
            NetworkSpec::ErdosRenyi { p, .. } => p,
            _ => self.n as f64,
        }
    }
}

/// Draws the observed dataset: covariates, treatments from the propensity
/// model with `M = A`, then outcomes.
pub fn simulate_dataset(spec: &ExperimentSpec, net: &Network) -> Result<Dataset> {
    let n = spec.n;
    let d = spec.params.theta.len();
    let mut rng = substream(spec.seed, Stage::Covariates, 0);
    let x = sample_covariates(n, d, &spec.estimator.covariates, &mut rng)?;
    let prop = PropensityModel::new(&net.a, spec.params.gamma.clone())?;
    let t = gibbs_sample_treatment(&prop, &x, spec.gibbs, &mut substream(spec.seed, Stage::Treatment, 0))?;
    let model = OutcomeModel::from_params(&net.a, &spec.params, &spec.mu)?;
    let y = gibbs_sample_outcome(&model, &t, &x, spec.gibbs, &mut substream(spec.seed, Stage::Outcome, 0))?;
    Dataset::new(y, t, x)
}

/// Wall-clock seconds per stage; excluded from the deterministic body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub simulate_sec: f64,
    pub fit_sec: f64,
    pub estimate_sec: f64,
    pub truth_sec: f64,
    pub total_sec: f64,
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub size_or_p: f64,
    pub effect: String,
    pub truth: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub runtime_sec: f64,
}

/// Deterministic part of an experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub spec: ExperimentSpec,
    pub diagnostics: Diagnostics,
    pub fit: FitResult,
    pub estimate: EffectEstimate,
    pub truth: EffectEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    #[serde(flatten)]
    pub body: ReportBody,
    pub timing: Timing,
}

impl ExperimentReport {
    /// Rows for DE and IE; the runtime column is the fitted-estimator time.
    pub fn rows(&self) -> Vec<TableRow> {
        let b = &self.body;
        let x = b.spec.size_or_p();
        vec![
            TableRow {
                size_or_p: x,
                effect: "DE".into(),
                truth: b.truth.de_avg,
                ci_lo: b.estimate.ci_de.0,
                ci_hi: b.estimate.ci_de.1,
                runtime_sec: self.timing.estimate_sec,
            },
            TableRow {
                size_or_p: x,
                effect: "IE".into(),
                truth: b.truth.ie_avg,
                ci_lo: b.estimate.ci_ie.0,
                ci_hi: b.estimate.ci_ie.1,
                runtime_sec: self.timing.estimate_sec,
            },
        ]
    }

    /// `true` when the oracle values fall inside the fitted intervals.
    pub fn covers(&self) -> (bool, bool) {
        let b = &self.body;
        let inside = |v: f64, (lo, hi): (f64, f64)| lo <= v && v <= hi;
        (
            inside(b.truth.de_avg, b.estimate.ci_de),
            inside(b.truth.ie_avg, b.estimate.ci_ie),
        )
    }

    /// Everything that went wrong numerically: fit or iteration non-convergence.
    pub fn converged(&self) -> bool {
        let b = &self.body;
        b.fit.converged && b.estimate.nonconverged == 0 && b.truth.nonconverged == 0
    }

    pub fn body_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.body)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Simulate, fit, estimate, compare.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let start = Instant::now();
    let net = Network::generate(&spec.network, spec.n, spec.seed).map_err(|e| e.in_stage("simulate"))?;
    let data = simulate_dataset(spec, &net).map_err(|e| e.in_stage("simulate"))?;
    let simulate_sec = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let init = ModelParams {
        tau: 0.0,
        theta: vec![0.0; spec.params.theta.len()],
        ..spec.params.clone()
    };
    let fit = fit_outcome(&data, &net.a, &spec.mu, &init, &spec.fit).map_err(|e| e.in_stage("fit"))?;
    let fit_sec = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let estimate =
        replicate_effects(&net, &spec.mu, &fit.params, &spec.estimator, spec.seed).map_err(|e| e.in_stage("estimate"))?;
    let estimate_sec = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let truth =
        oracle_truth(&net, &spec.mu, &spec.params, &spec.estimator, spec.seed).map_err(|e| e.in_stage("truth"))?;
    let truth_sec = t.elapsed().as_secs_f64();

    Ok(ExperimentReport {
        body: ReportBody {
            spec: spec.clone(),
            diagnostics: diagnostics(&net.a),
            fit,
            estimate,
            truth,
        },
        timing: Timing {
            simulate_sec,
            fit_sec,
            estimate_sec,
            truth_sec,
            total_sec: start.elapsed().as_secs_f64(),
        },
    })
}

/// Writes rows as CSV with header `size_or_p,effect,truth,ci_lo,ci_hi,runtime_sec`.
pub fn write_table_csv<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

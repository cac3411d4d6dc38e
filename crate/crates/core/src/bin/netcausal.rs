use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use netcausal::error::{Error, Result};
use netcausal::measure::BaseMeasure;
use netcausal::model::{
    gibbs_sample_outcome, gibbs_sample_treatment, sample_covariates, CovariateDist, Dataset,
    GibbsSchedule, ModelParams, OutcomeModel, PropensityModel,
};
use netcausal::mple::{fit_outcome, fit_propensity, FitOptions, FitResult};
use netcausal::network::{self, InteractionMatrix};
use netcausal::pipeline::{
    replicate_effects, run_experiment, substream, write_table_csv, Algorithm, EstimatorConfig,
    ExperimentSpec, Network, Stage,
};
use netcausal::{validate, Allocation};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "netcausal", version, about = "Treatment effects under network interference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Complete,
    Regular,
    ErdosRenyi,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Meanfield,
    Amp,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Meanfield => Algorithm::MeanField,
            AlgoArg::Amp => Algorithm::Amp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Table1,
    Table2,
    Table3,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an interaction matrix in coordinate format (plus a `.json` sidecar).
    Network {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.3)]
        beta: f64,
        /// Degree for regular graphs.
        #[arg(long)]
        d: Option<usize>,
        /// Edge probability for Erdős–Rényi graphs.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate covariates, treatments and outcomes on a network.
    Simulate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        params: PathBuf,
        /// `rademacher`, `uniform`, or a path to a measure JSON file.
        #[arg(long, default_value = "rademacher")]
        mu: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 250)]
        sweeps: usize,
        #[arg(long, default_value_t = 50)]
        burn_in: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit model parameters by maximum pseudo-likelihood.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value = "rademacher")]
        mu: String,
        /// Also fit the propensity coefficients, using the same network.
        #[arg(long)]
        propensity: bool,
        #[arg(long, default_value_t = 1.0)]
        bound_tau: f64,
        #[arg(long, default_value_t = 5.0)]
        bound_coef: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replicated direct and indirect effect estimates for given parameters.
    Estimate {
        #[arg(long)]
        network: PathBuf,
        /// Parameter JSON, or the output of `fit`.
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "rademacher")]
        mu: String,
        #[arg(long, value_enum, default_value = "meanfield")]
        algo: AlgoArg,
        /// Temperature for AMP; the network file is read as `βG`.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        #[arg(long, default_value_t = 0.05)]
        zeta: f64,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.5)]
        p_alloc: f64,
        /// Run exactly `iters` mean-field iterations.
        #[arg(long)]
        no_early_stop: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full simulate, fit, estimate, compare experiment.
    Experiment {
        /// Experiment spec as JSON.
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        /// Sizes (table1, table3) or edge probabilities (table2).
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check samplers and estimators against exact oracles.
    Validate {
        #[arg(long, default_value_t = 100_000)]
        sweeps: usize,
    },
}

fn load_measure(arg: &str) -> Result<BaseMeasure> {
    match arg {
        "rademacher" | "uniform" => BaseMeasure::preset(arg),
        path => Ok(serde_json::from_str(&fs::read_to_string(path)?)?),
    }
}

fn load_params(path: &Path) -> Result<ModelParams> {
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let inner = value.get("params").cloned().unwrap_or(value);
    Ok(serde_json::from_value(inner)?)
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn status(converged: bool) -> ExitCode {
    if converged {
        ExitCode::SUCCESS
    } else {
        eprintln!("warning: iteration did not converge");
        ExitCode::from(EXIT_NONCONVERGENCE)
    }
}

fn build_network(family: FamilyArg, n: usize, beta: f64, d: Option<usize>, p: Option<f64>, seed: u64) -> Result<InteractionMatrix> {
    let mut rng = substream(seed, Stage::Network, 0);
    let missing = |what: &str| Error::InvalidArgument(format!("--{what} is required for this family"));
    match family {
        FamilyArg::Complete => network::complete_graph(n, beta),
        FamilyArg::Regular => network::regular_graph(n, d.ok_or_else(|| missing("d"))?, beta, &mut rng),
        FamilyArg::ErdosRenyi => network::erdos_renyi(n, p.ok_or_else(|| missing("p"))?, beta, &mut rng),
        FamilyArg::Gaussian => network::gaussian_sk(n, beta, &mut rng),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Network { family, n, beta, d, p, seed, out } => {
            let a = build_network(family, n, beta, d, p, seed)?;
            a.write_coo(&out, Some(seed))?;
            write_json(None, &network::diagnostics(&a))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { network, params, mu, seed, sweeps, burn_in, out } => {
            let (a, _) = InteractionMatrix::read_coo(&network)?;
            let params = load_params(&params)?;
            let mu = load_measure(&mu)?;
            let schedule = GibbsSchedule::new(sweeps, burn_in)?;
            let n = a.n();
            let x = sample_covariates(n, params.theta.len(), &CovariateDist::default(), &mut substream(seed, Stage::Covariates, 0))?;
            let gamma = if params.gamma.is_empty() { vec![0.0; params.theta.len()] } else { params.gamma.clone() };
            let prop = PropensityModel::new(&a, gamma)?;
            let t = gibbs_sample_treatment(&prop, &x, schedule, &mut substream(seed, Stage::Treatment, 0))?;
            let model = OutcomeModel::from_params(&a, &params, &mu)?;
            let y = gibbs_sample_outcome(&model, &t, &x, schedule, &mut substream(seed, Stage::Outcome, 0))?;
            Dataset::new(y, t, x)?.write_csv(&out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit { data, network, mu, propensity, bound_tau, bound_coef, out } => {
            let data = Dataset::read_csv(&data)?;
            let (a, _) = InteractionMatrix::read_coo(&network)?;
            let mu = load_measure(&mu)?;
            let d = data.d();
            let init = ModelParams::new(0.0, vec![0.0; d], vec![0.0; d]).with_bounds(bound_tau, bound_coef);
            let opts = FitOptions::default();
            let mut fit: FitResult = fit_outcome(&data, &a, &mu, &init, &opts)?;
            if propensity {
                let prop = fit_propensity(&data.t, &data.x, &a, &fit.params, &opts)?;
                fit.params.gamma = prop.params.gamma;
                fit.converged &= prop.converged;
            }
            write_json(Some(&out), &fit)?;
            Ok(status(fit.converged))
        }
        Command::Estimate {
            network,
            params,
            mu,
            algo,
            beta,
            mc_samples,
            iters,
            replicates,
            zeta,
            epsilon,
            p_alloc,
            no_early_stop,
            seed,
            out,
        } => {
            let (a, _) = InteractionMatrix::read_coo(&network)?;
            let mut net = Network::from_matrix(a);
            if let (AlgoArg::Amp, Some(b)) = (algo, beta) {
                if net.g.is_none() {
                    return Err(Error::InvalidArgument("AMP needs a Gaussian network file".into()));
                }
                net.beta = b;
            }
            let params = load_params(&params)?;
            let cfg = EstimatorConfig {
                algorithm: algo.into(),
                iterations: iters,
                replicates,
                zeta,
                epsilon,
                allocation: Allocation::new(p_alloc)?,
                mc_samples,
                early_stop: !no_early_stop,
                ..EstimatorConfig::default()
            };
            let est = replicate_effects(&net, &load_measure(&mu)?, &params, &cfg, seed)?;
            write_json(out.as_deref(), &est)?;
            Ok(status(est.nonconverged == 0))
        }
        Command::Experiment { spec, preset, values, seed, replicates, csv, json } => {
            let mut specs: Vec<ExperimentSpec> = match (spec, preset) {
                (Some(path), _) => vec![serde_json::from_str(&fs::read_to_string(path)?)?],
                (None, Some(preset)) => {
                    let defaults: &[f64] = match preset {
                        PresetArg::Table2 => &[0.5, 0.01, 0.001],
                        _ => &[200.0, 400.0, 800.0],
                    };
                    let values = if values.is_empty() { defaults.to_vec() } else { values };
                    values
                        .iter()
                        .map(|&v| match preset {
                            PresetArg::Table1 => ExperimentSpec::table1(v as usize),
                            PresetArg::Table2 => ExperimentSpec::table2(v),
                            PresetArg::Table3 => ExperimentSpec::table3(v as usize),
                        })
                        .collect()
                }
                (None, None) => return Err(Error::InvalidArgument("give --spec or --preset".into())),
            };
            for s in &mut specs {
                if let Some(seed) = seed {
                    s.seed = seed;
                }
                if let Some(k) = replicates {
                    s.estimator.replicates = k;
                }
            }
            let mut reports = Vec::new();
            for s in &specs {
                let r = run_experiment(s)?;
                eprintln!(
                    "{}: DE truth {:.3} CI [{:.3}, {:.3}]  IE truth {:.3} CI [{:.3}, {:.3}]  {:.1}s",
                    s.size_or_p(),
                    r.body.truth.de_avg,
                    r.body.estimate.ci_de.0,
                    r.body.estimate.ci_de.1,
                    r.body.truth.ie_avg,
                    r.body.estimate.ci_ie.0,
                    r.body.estimate.ci_ie.1,
                    r.timing.total_sec
                );
                reports.push(r);
            }
            let rows: Vec<_> = reports.iter().flat_map(|r| r.rows()).collect();
            match csv {
                Some(path) => write_table_csv(&rows, fs::File::create(path)?)?,
                None => write_table_csv(&rows, std::io::stdout())?,
            }
            if let Some(path) = json {
                write_json(Some(&path), &reports)?;
            }
            Ok(status(reports.iter().all(|r| r.converged())))
        }
        Command::Validate { sweeps } => {
            let checks = validate::run_all(sweeps);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VALIDATION)
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(EXIT_NONCONVERGENCE)
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
    }
}

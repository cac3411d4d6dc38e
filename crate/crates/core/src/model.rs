//! Outcome and propensity Markov random fields.
//!
//! The outcome law given treatments `t` and covariates `x` is
//! `exp(½yᵀAy + yᵀ(τt + xθ)) Π dμ(y_i) / Z`; the treatment law is the same
//! construction on `{±1}ⁿ` with interaction `M` and field `xγ`. Both are
//! simulated by systematic-scan Gibbs sampling and, for tiny `n`, enumerated
//! exactly.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{BaseMeasure, TiltParams};
use crate::network::InteractionMatrix;

/// Largest number of configurations the enumeration oracle will visit.
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// Row-major `n × d` covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Covariates {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::Dimension(format!(
                "covariates: expected {} values for {n}×{d}, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "covariate value {v} outside [-1, 1]"
            )));
        }
        Ok(Covariates { n, d, data })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Covariates {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    /// One covariate per unit.
    pub fn from_column(col: Vec<f64>) -> Result<Self> {
        let n = col.len();
        Self::new(n, 1, col)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `x_iᵀθ` for every unit.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.d, "coefficient length must match covariate dimension");
        (0..self.n).map(|i| dot(self.row(i), theta)).collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.n {
            data[perm[i] * self.d..(perm[i] + 1) * self.d].copy_from_slice(self.row(i));
        }
        Covariates {
            n: self.n,
            d: self.d,
            data,
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Distribution of one covariate row; coordinates are i.i.d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateDist {
    Uniform { low: f64, high: f64 },
    PointMass { value: f64 },
}

impl Default for CovariateDist {
    fn default() -> Self {
        CovariateDist::Uniform {
            low: -1.0,
            high: 1.0,
        }
    }
}

impl CovariateDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CovariateDist::Uniform { low, high } => low >= -1.0 && high <= 1.0 && low < high,
            CovariateDist::PointMass { value } => (-1.0..=1.0).contains(&value),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "covariate distribution {self:?} not supported on [-1, 1]"
            )))
        }
    }

    pub fn sample_value<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateDist::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            CovariateDist::PointMass { value } => value,
        }
    }
}

pub fn sample_covariates<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    dist: &CovariateDist,
    rng: &mut R,
) -> Result<Covariates> {
    dist.validate()?;
    let data = (0..n * d).map(|_| dist.sample_value(rng)).collect();
    Ok(Covariates { n, d, data })
}

/// Draws `T̄` with i.i.d. `P(T̄_i = 1) = p`.
pub fn sample_allocation<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random::<f64>() < p { 1.0 } else { -1.0 })
        .collect()
}

/// Observed data: outcomes, treatments and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub x: Covariates,
}

impl Dataset {
    pub fn new(y: Vec<f64>, t: Vec<f64>, x: Covariates) -> Result<Self> {
        let n = y.len();
        if t.len() != n || x.n() != n {
            return Err(Error::Dimension(format!(
                "dataset sizes differ: y {}, t {}, x {}",
                n,
                t.len(),
                x.n()
            )));
        }
        if let Some(v) = y.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("outcome {v} outside [-1, 1]")));
        }
        check_treatments(&t)?;
        Ok(Dataset { y, t, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.d()
    }

    /// CSV with header `y,t,x1..xd`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["y".to_string(), "t".to_string()];
        header.extend((1..=self.d()).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![self.y[i].to_string(), self.t[i].to_string()];
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.len() < 2 || &header[0] != "y" || &header[1] != "t" {
            return Err(Error::Parse("CSV header must start with `y,t`".into()));
        }
        for (k, h) in header.iter().skip(2).enumerate() {
            if h != format!("x{}", k + 1) {
                return Err(Error::Parse(format!("unexpected column `{h}`")));
            }
        }
        let d = header.len() - 2;
        let (mut y, mut t, mut x) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number `{}`", &rec[k])))
            };
            y.push(parse(0)?);
            t.push(parse(1)?);
            for k in 0..d {
                x.push(parse(k + 2)?);
            }
        }
        let n = y.len();
        Dataset::new(y, t, Covariates::new(n, d, x)?)
    }
}

pub(crate) fn check_treatments(t: &[f64]) -> Result<()> {
    match t.iter().find(|&&v| v != 1.0 && v != -1.0) {
        Some(v) => Err(Error::InvalidArgument(format!("treatment {v} is not ±1"))),
        None => Ok(()),
    }
}

/// Model parameters with their box bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tau: f64,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(rename = "B", default = "default_bound_tau")]
    pub bound_tau: f64,
    #[serde(rename = "M", default = "default_bound_coef")]
    pub bound_coef: f64,
}

fn default_bound_tau() -> f64 {
    1.0
}

fn default_bound_coef() -> f64 {
    5.0
}

impl ModelParams {
    pub fn new(tau: f64, theta: Vec<f64>, gamma: Vec<f64>) -> Self {
        ModelParams {
            tau,
            theta,
            gamma,
            bound_tau: default_bound_tau(),
            bound_coef: default_bound_coef(),
        }
    }

    /// `(τ, θ, γ) = (0.5, 2, 0)` with one covariate.
    pub fn simulation_preset() -> Self {
        ModelParams::new(0.5, vec![2.0], vec![0.0])
    }

    pub fn with_bounds(mut self, bound_tau: f64, bound_coef: f64) -> Self {
        self.bound_tau = bound_tau;
        self.bound_coef = bound_coef;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound_tau > 0.0) || !(self.bound_coef > 0.0) {
            return Err(Error::InvalidArgument("box bounds must be positive".into()));
        }
        if self.tau.abs() > self.bound_tau {
            return Err(Error::InvalidArgument(format!(
                "|tau| = {} exceeds B = {}",
                self.tau.abs(),
                self.bound_tau
            )));
        }
        for v in self.theta.iter().chain(&self.gamma) {
            if v.abs() > self.bound_coef {
                return Err(Error::InvalidArgument(format!(
                    "coefficient {v} exceeds M = {}",
                    self.bound_coef
                )));
            }
        }
        Ok(())
    }
}

/// Outcome model `(A, τ, θ, μ)`.
#[derive(Debug, Clone)]
pub struct OutcomeModel<'a> {
    pub a: &'a InteractionMatrix,
    pub tau: f64,
    pub theta: Vec<f64>,
    pub mu: &'a BaseMeasure,
}

impl<'a> OutcomeModel<'a> {
    pub fn new(a: &'a InteractionMatrix, tau: f64, theta: Vec<f64>, mu: &'a BaseMeasure) -> Result<Self> {
        a.check_invariants()?;
        Ok(OutcomeModel { a, tau, theta, mu })
    }

    pub fn from_params(a: &'a InteractionMatrix, params: &ModelParams, mu: &'a BaseMeasure) -> Result<Self> {
        params.validate()?;
        Self::new(a, params.tau, params.theta.clone(), mu)
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    fn check_shapes(&self, t: &[f64], x: &Covariates) -> Result<()> {
        let n = self.n();
        if t.len() != n || x.n() != n {
            return Err(Error::Dimension(format!(
                "model has n = {n}, got t of length {} and x with {} rows",
                t.len(),
                x.n()
            )));
        }
        if x.d() != self.theta.len() {
            return Err(Error::Dimension(format!(
                "theta has length {}, covariates have d = {}",
                self.theta.len(),
                x.d()
            )));
        }
        Ok(())
    }

    /// `τt_i + θᵀx_i` for every unit.
    pub fn external_field(&self, t: &[f64], x: &Covariates) -> Result<Vec<f64>> {
        self.check_shapes(t, x)?;
        Ok(external_field(self.tau, &self.theta, t, x))
    }

    /// Conditional law of `y_i` given the rest: tilt `(Σ_j a_ij y_j + τt_i + θᵀx_i, 0)`.
    pub fn conditional_tilt(&self, y: &[f64], t: &[f64], x: &Covariates, i: usize) -> Result<TiltParams> {
        self.check_shapes(t, x)?;
        if i >= self.n() {
            return Err(Error::InvalidArgument(format!("site {i} out of range")));
        }
        if y.len() != self.n() {
            return Err(Error::Dimension("y has wrong length".into()));
        }
        let h = self.tau * t[i] + dot(x.row(i), &self.theta);
        Ok(TiltParams::linear(self.a.row_dot(i, y) + h))
    }

    /// `½yᵀAy + yᵀ(τt + xθ)`.
    pub fn log_unnormalized(&self, y: &[f64], t: &[f64], x: &Covariates) -> Result<f64> {
        let h = self.external_field(t, x)?;
        Ok(hamiltonian(self.a, &h, y))
    }
}

pub(crate) fn external_field(tau: f64, theta: &[f64], t: &[f64], x: &Covariates) -> Vec<f64> {
    (0..t.len())
        .map(|i| tau * t[i] + dot(x.row(i), theta))
        .collect()
}

fn hamiltonian(a: &InteractionMatrix, h: &[f64], y: &[f64]) -> f64 {
    let ay = a.matvec(y);
    0.5 * dot(y, &ay) + dot(y, h)
}

/// Propensity model `(M, γ)` over `{±1}ⁿ`.
#[derive(Debug, Clone)]
pub struct PropensityModel<'a> {
    pub m: &'a InteractionMatrix,
    pub gamma: Vec<f64>,
}

impl<'a> PropensityModel<'a> {
    pub fn new(m: &'a InteractionMatrix, gamma: Vec<f64>) -> Result<Self> {
        m.check_invariants()?;
        Ok(PropensityModel { m, gamma })
    }

    fn field(&self, x: &Covariates) -> Result<Vec<f64>> {
        if x.n() != self.m.n() || x.d() != self.gamma.len() {
            return Err(Error::Dimension(format!(
                "propensity model n = {}, d = {}; covariates {}×{}",
                self.m.n(),
                self.gamma.len(),
                x.n(),
                x.d()
            )));
        }
        Ok(x.project(&self.gamma))
    }
}

/// Burn-in and total sweep counts for a Gibbs chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsSchedule {
    pub sweeps: usize,
    pub burn_in: usize,
}

impl GibbsSchedule {
    pub fn new(sweeps: usize, burn_in: usize) -> Result<Self> {
        if sweeps <= burn_in {
            return Err(Error::InvalidArgument(format!(
                "sweeps ({sweeps}) must exceed burn-in ({burn_in})"
            )));
        }
        Ok(GibbsSchedule { sweeps, burn_in })
    }

    /// 10·n burn-in sweeps followed by 100·n retained sweeps.
    pub fn validation_default(n: usize) -> Self {
        GibbsSchedule {
            sweeps: 110 * n,
            burn_in: 10 * n,
        }
    }
}

/// Systematic-scan single-site Gibbs chain for `exp(½yᵀAy + yᵀh) Π dμ`.
///
/// The local fields `Ay` are kept up to date incrementally, so a site update
/// costs one row of `A` only when the site value changes.
pub struct GibbsChain<'a> {
    a: &'a InteractionMatrix,
    mu: &'a BaseMeasure,
    field: Vec<f64>,
    state: Vec<f64>,
    local: Vec<f64>,
}

impl<'a> GibbsChain<'a> {
    pub fn new(a: &'a InteractionMatrix, mu: &'a BaseMeasure, field: Vec<f64>) -> Self {
        let n = a.n();
        assert_eq!(field.len(), n);
        GibbsChain {
            a,
            mu,
            field,
            state: vec![0.0; n],
            local: vec![0.0; n],
        }
    }

    pub fn for_outcome(model: &OutcomeModel<'a>, t: &[f64], x: &Covariates) -> Result<Self> {
        Ok(Self::new(model.a, model.mu, model.external_field(t, x)?))
    }

    pub fn for_treatment(model: &PropensityModel<'a>, x: &Covariates, rademacher: &'a BaseMeasure) -> Result<Self> {
        Ok(Self::new(model.m, rademacher, model.field(x)?))
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, y: &[f64]) {
        self.state.copy_from_slice(y);
        self.a.matvec_into(&self.state, &mut self.local);
    }

    /// Resamples site `i` from its conditional law.
    #[inline]
    pub fn update_site<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        let lam = TiltParams::linear(self.local[i] + self.field[i]);
        let new = self.mu.tilt_sample(lam, rng);
        let delta = new - self.state[i];
        if delta != 0.0 {
            self.state[i] = new;
            let local = &mut self.local;
            self.a.for_each_in_row(i, |j, a| local[j] += a * delta);
        }
    }

    /// One pass over sites `0..n` in order.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for i in 0..self.state.len() {
            self.update_site(i, rng);
        }
    }

    /// Runs the schedule and returns the final state.
    pub fn run<R: Rng + ?Sized>(&mut self, schedule: GibbsSchedule, rng: &mut R) -> Vec<f64> {
        for _ in 0..schedule.sweeps {
            self.sweep(rng);
        }
        self.state.clone()
    }

    /// Runs the schedule, calling `observe` with the state after every
    /// retained sweep (every `thin`-th one after burn-in).
    pub fn run_with<R, F>(&mut self, schedule: GibbsSchedule, thin: usize, rng: &mut R, mut observe: F)
    where
        R: Rng + ?Sized,
        F: FnMut(&[f64]),
    {
        let thin = thin.max(1);
        for s in 0..schedule.sweeps {
            self.sweep(rng);
            if s >= schedule.burn_in && (s - schedule.burn_in).is_multiple_of(thin) {
                observe(&self.state);
            }
        }
    }
}

/// Per-site means with batch-means standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEstimate {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub samples: usize,
}

/// Long-run per-site means of a chain, with standard errors from
/// `batches` contiguous batch means.
pub fn chain_means<R: Rng + ?Sized>(
    chain: &mut GibbsChain<'_>,
    schedule: GibbsSchedule,
    batches: usize,
    rng: &mut R,
) -> MeanEstimate {
    let n = chain.state.len();
    let kept = schedule.sweeps - schedule.burn_in;
    let batches = batches.clamp(2, kept.max(2));
    let per_batch = (kept / batches).max(1);
    let mut batch_sums = vec![vec![0.0; n]; batches];
    let mut count = 0usize;
    chain.run_with(schedule, 1, rng, |y| {
        let b = (count / per_batch).min(batches - 1);
        for (s, v) in batch_sums[b].iter_mut().zip(y) {
            *s += v;
        }
        count += 1;
    });
    let mut sizes = vec![per_batch as f64; batches];
    sizes[batches - 1] = (count - per_batch * (batches - 1)) as f64;
    let mut mean = vec![0.0; n];
    let mut std_err = vec![0.0; n];
    for i in 0..n {
        let total: f64 = batch_sums.iter().map(|b| b[i]).sum();
        let m = total / count as f64;
        let bm: Vec<f64> = batch_sums.iter().zip(&sizes).map(|(b, s)| b[i] / s).collect();
        let var = bm.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (batches - 1) as f64;
        mean[i] = m;
        std_err[i] = (var / batches as f64).sqrt();
    }
    MeanEstimate {
        mean,
        std_err,
        samples: count,
    }
}

/// Simulates `Y` from the outcome model with a systematic-scan Gibbs chain.
pub fn gibbs_sample_outcome<R: Rng + ?Sized>(
    model: &OutcomeModel<'_>,
    t: &[f64],
    x: &Covariates,
    schedule: GibbsSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut chain = GibbsChain::for_outcome(model, t, x)?;
    Ok(chain.run(schedule, rng))
}

/// Simulates `T` from the propensity model; site `i` is `+1` with probability
/// `e^h / (e^h + e^{−h})`, `h = (MT)_i + γᵀx_i`.
pub fn gibbs_sample_treatment<R: Rng + ?Sized>(
    model: &PropensityModel<'_>,
    x: &Covariates,
    schedule: GibbsSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let coin = BaseMeasure::rademacher();
    let mut chain = GibbsChain::for_treatment(model, x, &coin)?;
    // start from a uniform draw so the chain never sits outside {±1}
    let init: Vec<f64> = (0..x.n())
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    chain.set_state(&init);
    Ok(chain.run(schedule, rng))
}

/// Exact per-site means and log partition function.
#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub means: Vec<f64>,
    pub log_z: f64,
}

/// Enumerates `μ^{⊗n}` for `exp(½yᵀAy + yᵀh)`. Refuses when the state space
/// has more than [`ENUMERATION_LIMIT`] configurations.
pub fn enumerate_means(a: &InteractionMatrix, mu: &BaseMeasure, h: &[f64]) -> Result<Enumeration> {
    let n = a.n();
    let s = mu.len();
    let states = (s as f64).powi(n as i32);
    if states > ENUMERATION_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            states,
            limit: ENUMERATION_LIMIT,
        });
    }
    let locs = mu.locations();
    let logw: Vec<f64> = mu.weights().iter().map(|w| w.ln()).collect();
    let mut idx = vec![0usize; n];
    let mut y: Vec<f64> = vec![locs[0]; n];
    // streaming log-sum-exp with a running shift
    let mut shift = f64::NEG_INFINITY;
    let mut z = 0.0;
    let mut acc = vec![0.0; n];
    loop {
        let mut e = hamiltonian(a, h, &y);
        for &k in &idx {
            e += logw[k];
        }
        if e > shift {
            let r = (shift - e).exp();
            z *= r;
            acc.iter_mut().for_each(|v| *v *= r);
            shift = e;
        }
        let p = (e - shift).exp();
        z += p;
        for (av, yv) in acc.iter_mut().zip(&y) {
            *av += p * yv;
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == n {
                let means = acc.iter().map(|v| v / z).collect();
                return Ok(Enumeration {
                    means,
                    log_z: shift + z.ln(),
                });
            }
            idx[pos] += 1;
            if idx[pos] < s {
                y[pos] = locs[idx[pos]];
                break;
            }
            idx[pos] = 0;
            y[pos] = locs[0];
            pos += 1;
        }
    }
}

/// Exact `⟨Y_i⟩ = E(Y_i | t, x)` by enumeration; discrete `μ` only.
pub fn brute_force_means(model: &OutcomeModel<'_>, t: &[f64], x: &Covariates) -> Result<Enumeration> {
    let h = model.external_field(t, x)?;
    enumerate_means(model.a, model.mu, &h)
}

/// Exact treatment means `E(T_i | x)` and `log Z'`; requires `n <= 20`.
pub fn brute_force_treatment_means(model: &PropensityModel<'_>, x: &Covariates) -> Result<Enumeration> {
    if model.m.n() > 20 {
        return Err(Error::StateSpaceTooLarge {
            states: 2f64.powi(model.m.n() as i32),
            limit: 2f64.powi(20),
        });
    }
    let h = model.field(x)?;
    let coin = BaseMeasure::rademacher();
    let mut e = enumerate_means(model.m, &coin, &h)?;
    // the enumeration includes the ½ atom weights; Z' is over counting measure
    e.log_z += model.m.n() as f64 * std::f64::consts::LN_2;
    Ok(e)
}

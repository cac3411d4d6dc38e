//! Base measures on `[-1, 1]` and their quadratic exponential tilts.
//!
//! For a base measure `μ` and tilt `(λ₁, λ₂)` the tilted measure has density
//! `exp(λ₁x + λ₂x²/2 − α(λ))` with respect to `μ`, where `α` is the log
//! normalizer. `α'` and `α''` (derivatives in `λ₁`) are the mean and the
//! variance of the tilted measure. Continuous measures are represented by
//! Gauss–Legendre quadrature, so every evaluation is a finite weighted sum.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of Gauss–Legendre nodes used for the uniform preset.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Discrete,
    Quadrature,
}

/// Linear and quadratic tilt parameters. `lambda2` must be non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltParams {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl TiltParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        debug_assert!(lambda2 >= 0.0, "quadratic tilt must be non-negative");
        TiltParams { lambda1, lambda2 }
    }

    pub fn linear(lambda1: f64) -> Self {
        TiltParams {
            lambda1,
            lambda2: 0.0,
        }
    }
}

/// Log normalizer, mean and variance of one tilted measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltMoments {
    pub log_norm: f64,
    pub mean: f64,
    pub var: f64,
}

/// A probability measure on `[-1, 1]` with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct BaseMeasure {
    kind: MeasureKind,
    locations: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    // atoms come in exact pairs `k ↔ len−1−k` with `x ↦ −x`
    mirrored: bool,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    kind: MeasureKind,
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<MeasureRepr> for BaseMeasure {
    type Error = Error;

    fn try_from(repr: MeasureRepr) -> Result<Self> {
        BaseMeasure::from_atoms(repr.kind, repr.atoms)
    }
}

impl From<BaseMeasure> for MeasureRepr {
    fn from(mu: BaseMeasure) -> Self {
        MeasureRepr {
            kind: mu.kind,
            atoms: mu.atoms().collect(),
        }
    }
}

impl BaseMeasure {
    /// Builds a measure from `(location, weight)` pairs and checks the invariants.
    pub fn from_atoms(kind: MeasureKind, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        let mut total = 0.0;
        for &(x, w) in &atoms {
            if !x.is_finite() || !(-1.0..=1.0).contains(&x) {
                return Err(Error::InvalidMeasure(format!(
                    "location {x} outside [-1, 1]"
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidMeasure(format!("weight {w} is not positive")));
            }
            total += w;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let first = atoms[0].0;
        if atoms.iter().all(|&(x, _)| x == first) {
            return Err(Error::InvalidMeasure(
                "degenerate measure: support has a single point".into(),
            ));
        }
        let (locations, weights): (Vec<f64>, Vec<f64>) = atoms.into_iter().unzip();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        let len = locations.len();
        let mirrored = (0..len).all(|k| locations[k] == -locations[len - 1 - k] && weights[k] == weights[len - 1 - k]);
        Ok(BaseMeasure {
            kind,
            locations,
            weights,
            log_weights,
            mirrored,
        })
    }

    /// Discrete measure; weights are normalized to sum to one.
    pub fn discrete(atoms: &[(f64, f64)]) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("weights must be positive".into()));
        }
        Self::from_atoms(
            MeasureKind::Discrete,
            atoms.iter().map(|&(x, w)| (x, w / total)).collect(),
        )
    }

    /// The fair coin `½(δ₋₁ + δ₁)`.
    pub fn rademacher() -> Self {
        Self::from_atoms(MeasureKind::Discrete, vec![(-1.0, 0.5), (1.0, 0.5)])
            .expect("rademacher preset is valid")
    }

    /// `Unif[-1, 1]` on the default 64-node Gauss–Legendre rule.
    pub fn uniform() -> Self {
        Self::uniform_with_nodes(DEFAULT_QUADRATURE_NODES).expect("uniform preset is valid")
    }

    pub fn uniform_with_nodes(nodes: usize) -> Result<Self> {
        Self::from_density(|_| 0.5, nodes)
    }

    /// Continuous measure with the given (unnormalized) density on `[-1, 1]`,
    /// discretized with an `nodes`-point Gauss–Legendre rule.
    pub fn from_density<F: Fn(f64) -> f64>(density: F, nodes: usize) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::InvalidMeasure("need at least two nodes".into()));
        }
        let (x, w) = gauss_legendre(nodes);
        let raw: Vec<(f64, f64)> = x
            .into_iter()
            .zip(w)
            .map(|(x, w)| (x, w * density(x)))
            .collect();
        let total: f64 = raw.iter().map(|a| a.1).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidMeasure("density integrates to zero".into()));
        }
        Self::from_atoms(
            MeasureKind::Quadrature,
            raw.into_iter().map(|(x, w)| (x, w / total)).collect(),
        )
    }

    /// Named presets understood by the CLI.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "rademacher" => Ok(Self::rademacher()),
            "uniform" => Ok(Self::uniform()),
            other => Err(Error::InvalidMeasure(format!("unknown preset `{other}`"))),
        }
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.locations.iter().copied().zip(self.weights.iter().copied())
    }

    /// True when `x ↦ −x` maps the measure to itself.
    pub fn is_symmetric(&self) -> bool {
        self.atoms().all(|(x, w)| {
            self.atoms()
                .any(|(y, v)| (x + y).abs() < 1e-14 && (w - v).abs() < 1e-14)
        })
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(x, w)| x * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms().map(|(x, w)| w * (x - m) * (x - m)).sum()
    }

    #[inline]
    fn exponent(&self, k: usize, lam: TiltParams) -> f64 {
        let x = self.locations[k];
        lam.lambda1 * x + 0.5 * lam.lambda2 * x * x + self.log_weights[k]
    }

    fn max_exponent(&self, lam: TiltParams) -> f64 {
        (0..self.len())
            .map(|k| self.exponent(k, lam))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    // Σ p_k x_k with mirrored atoms summed in pairs, so that a symmetric
    // tilt gives exactly zero
    fn first_moment(&self, p: &[f64]) -> f64 {
        let len = self.len();
        if self.mirrored {
            (0..len / 2)
                .map(|k| self.locations[len - 1 - k] * (p[len - 1 - k] - p[k]))
                .sum()
        } else {
            p.iter().zip(&self.locations).map(|(p, x)| p * x).sum()
        }
    }

    fn shifted_masses(&self, lam: TiltParams) -> (f64, Vec<f64>) {
        let shift = self.max_exponent(lam);
        let p = (0..self.len())
            .map(|k| (self.exponent(k, lam) - shift).exp())
            .collect();
        (shift, p)
    }

    /// Log normalizer, mean and variance in one pass.
    pub fn tilt(&self, lam: TiltParams) -> TiltMoments {
        let (shift, p) = self.shifted_masses(lam);
        let z: f64 = p.iter().sum();
        let mean = self.first_moment(&p) / z;
        let var: f64 = p
            .iter()
            .zip(&self.locations)
            .map(|(p, x)| p * (x - mean) * (x - mean))
            .sum();
        TiltMoments {
            log_norm: shift + z.ln(),
            mean,
            var: var / z,
        }
    }

    /// `α(λ) = log ∫ exp(λ₁x + λ₂x²/2) dμ(x)`.
    pub fn alpha(&self, lam: TiltParams) -> f64 {
        let shift = self.max_exponent(lam);
        let z: f64 = (0..self.len())
            .map(|k| (self.exponent(k, lam) - shift).exp())
            .sum();
        shift + z.ln()
    }

    /// `α'(λ)`, the mean of the tilted measure.
    pub fn alpha_prime(&self, lam: TiltParams) -> f64 {
        let (_, p) = self.shifted_masses(lam);
        let z: f64 = p.iter().sum();
        (self.first_moment(&p) / z).clamp(-1.0, 1.0)
    }

    /// `α''(λ)`, the variance of the tilted measure.
    pub fn alpha_second(&self, lam: TiltParams) -> f64 {
        self.tilt(lam).var
    }

    /// Mean and variance together; used by the AMP recursion.
    pub fn alpha_prime_second(&self, lam: TiltParams) -> (f64, f64) {
        let m = self.tilt(lam);
        (m.mean.clamp(-1.0, 1.0), m.var)
    }

    /// Elementwise `α'(λ₁[i], λ₂)` written into `out`.
    pub fn alpha_prime_into(&self, lambda1: &[f64], lambda2: f64, out: &mut [f64]) {
        assert_eq!(lambda1.len(), out.len());
        for (o, &l1) in out.iter_mut().zip(lambda1) {
            *o = self.alpha_prime(TiltParams::new(l1, lambda2));
        }
    }

    pub fn alpha_prime_vec(&self, lambda1: &[f64], lambda2: f64) -> Vec<f64> {
        let mut out = vec![0.0; lambda1.len()];
        self.alpha_prime_into(lambda1, lambda2, &mut out);
        out
    }

    /// Probabilities of each atom under the tilted measure.
    pub fn tilt_probabilities(&self, lam: TiltParams) -> Vec<f64> {
        let shift = self.max_exponent(lam);
        let mut p: Vec<f64> = (0..self.len())
            .map(|k| (self.exponent(k, lam) - shift).exp())
            .collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        p
    }

    /// Draws one atom from the tilted measure.
    pub fn tilt_sample<R: Rng + ?Sized>(&self, lam: TiltParams, rng: &mut R) -> f64 {
        let shift = self.max_exponent(lam);
        // two-atom fast path: one exp, one uniform
        if self.len() == 2 {
            let e0 = self.exponent(0, lam) - shift;
            let e1 = self.exponent(1, lam) - shift;
            let p1 = 1.0 / (1.0 + (e0 - e1).exp());
            let u: f64 = rng.random();
            return if u < p1 {
                self.locations[1]
            } else {
                self.locations[0]
            };
        }
        let mut cum = Vec::with_capacity(self.len());
        let mut z = 0.0;
        for k in 0..self.len() {
            z += (self.exponent(k, lam) - shift).exp();
            cum.push(z);
        }
        let u: f64 = rng.random::<f64>() * z;
        let k = cum.partition_point(|&c| c <= u).min(self.len() - 1);
        self.locations[k]
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (weights sum to 2).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

// P_n(z) and P_n'(z) by the three-term recurrence
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

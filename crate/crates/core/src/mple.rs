//! Maximum pseudo-likelihood estimation.
//!
//! The log pseudo-likelihood of the outcome model is
//!
//! ```text
//! l(τ, θ) = (1/n) Σ_i [Y_i m_i + Y_i(τT_i + θᵀX_i) − α(m_i + τT_i + θᵀX_i, 0)]
//! ```
//!
//! with `m_i = (AY)_i`. It is concave, so a box-projected Newton ascent from
//! any start finds the global maximizer. Parameter vectors are ordered with
//! the `d` covariate coefficients first and `τ` last.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{BaseMeasure, TiltParams};
use crate::model::{dot, Covariates, Dataset, ModelParams};
use crate::network::InteractionMatrix;

/// Newton iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Tolerance on the projected gradient norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    /// Norm of the full gradient at the returned point.
    pub grad_norm: f64,
    /// Gradient norm after removing components that push against an active bound.
    pub projected_grad_norm: f64,
    /// Smallest eigenvalue of the negated Hessian.
    pub min_hessian_eig: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

/// A pseudo-likelihood with per-unit offsets `o_i`, responses `r_i` and
/// feature rows `z_i`: `(1/n) Σ [r_i o_i + r_i βᵀz_i − α(o_i + βᵀz_i, 0)]`.
struct PseudoLikelihood<'a> {
    response: &'a [f64],
    offset: Vec<f64>,
    features: Vec<f64>,
    p: usize,
    mu: &'a BaseMeasure,
}

impl PseudoLikelihood<'_> {
    fn n(&self) -> usize {
        self.response.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    fn linear(&self, i: usize, b: &[f64]) -> f64 {
        self.offset[i] + dot(self.row(i), b)
    }

    fn objective(&self, b: &[f64]) -> f64 {
        let s: f64 = (0..self.n())
            .map(|i| {
                let l = self.linear(i, b);
                self.response[i] * l - self.mu.alpha(TiltParams::linear(l))
            })
            .sum();
        s / self.n() as f64
    }

    fn gradient(&self, b: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.p];
        for i in 0..self.n() {
            let r = self.response[i] - self.mu.alpha_prime(TiltParams::linear(self.linear(i, b)));
            for (gk, zk) in g.iter_mut().zip(self.row(i)) {
                *gk += zk * r;
            }
        }
        let n = self.n() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    // −H = (1/n) Σ z_i z_iᵀ α''
    fn neg_hessian(&self, b: &[f64]) -> DMatrix<f64> {
        let p = self.p;
        let mut h = DMatrix::zeros(p, p);
        for i in 0..self.n() {
            let v = self.mu.alpha_second(TiltParams::linear(self.linear(i, b)));
            let z = self.row(i);
            for r in 0..p {
                for c in 0..=r {
                    h[(r, c)] += v * z[r] * z[c];
                }
            }
        }
        for r in 0..p {
            for c in 0..r {
                h[(c, r)] = h[(r, c)];
            }
        }
        h / self.n() as f64
    }
}

fn outcome_pl<'a>(
    data: &'a Dataset,
    a: &InteractionMatrix,
    mu: &'a BaseMeasure,
) -> Result<PseudoLikelihood<'a>> {
    if a.n() != data.n() {
        return Err(Error::Dimension(format!(
            "matrix is {}×{}, dataset has {} units",
            a.n(),
            a.n(),
            data.n()
        )));
    }
    let d = data.d();
    let mut features = Vec::with_capacity(data.n() * (d + 1));
    for i in 0..data.n() {
        features.extend_from_slice(data.x.row(i));
        features.push(data.t[i]);
    }
    Ok(PseudoLikelihood {
        response: &data.y,
        offset: a.matvec(&data.y),
        features,
        p: d + 1,
        mu,
    })
}

fn pack(tau: f64, theta: &[f64]) -> Vec<f64> {
    let mut b = theta.to_vec();
    b.push(tau);
    b
}

fn check_theta(data: &Dataset, theta: &[f64]) -> Result<()> {
    if theta.len() != data.d() {
        return Err(Error::Dimension(format!(
            "theta has length {}, dataset has d = {}",
            theta.len(),
            data.d()
        )));
    }
    Ok(())
}

/// Log pseudo-likelihood of the outcome model.
pub fn pl_objective(
    data: &Dataset,
    a: &InteractionMatrix,
    mu: &BaseMeasure,
    tau: f64,
    theta: &[f64],
) -> Result<f64> {
    check_theta(data, theta)?;
    Ok(outcome_pl(data, a, mu)?.objective(&pack(tau, theta)))
}

/// Gradient in `(θ, τ)` order.
pub fn pl_gradient(
    data: &Dataset,
    a: &InteractionMatrix,
    mu: &BaseMeasure,
    tau: f64,
    theta: &[f64],
) -> Result<Vec<f64>> {
    check_theta(data, theta)?;
    Ok(outcome_pl(data, a, mu)?.gradient(&pack(tau, theta)))
}

/// Negated Hessian `(1/n) Σ X̃_i X̃_iᵀ α''(·)`, positive semidefinite.
pub fn pl_hessian(
    data: &Dataset,
    a: &InteractionMatrix,
    mu: &BaseMeasure,
    tau: f64,
    theta: &[f64],
) -> Result<DMatrix<f64>> {
    check_theta(data, theta)?;
    Ok(outcome_pl(data, a, mu)?.neg_hessian(&pack(tau, theta)))
}

struct Ascent {
    b: Vec<f64>,
    grad: Vec<f64>,
    projected: f64,
    iterations: usize,
    converged: bool,
    objective: f64,
    min_eig: f64,
}

fn project(b: &mut [f64], bounds: &[f64]) {
    for (v, &m) in b.iter_mut().zip(bounds) {
        *v = v.clamp(-m, m);
    }
}

fn projected_norm(b: &[f64], g: &[f64], bounds: &[f64]) -> f64 {
    b.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&v, &gk), &m)| {
            let blocked = (v >= m && gk > 0.0) || (v <= -m && gk < 0.0);
            if blocked {
                0.0
            } else {
                gk * gk
            }
        })
        .sum::<f64>()
        .sqrt()
}

// Backtracking along `dir` from `b`; returns the accepted point and value.
fn line_search(pl: &PseudoLikelihood<'_>, b: &[f64], f0: f64, dir: &[f64], bounds: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mut step = 1.0;
    while step >= MIN_STEP {
        let mut cand: Vec<f64> = b.iter().zip(dir).map(|(v, d)| v + step * d).collect();
        project(&mut cand, bounds);
        let moved = cand.iter().zip(b).any(|(c, v)| c != v);
        if !moved {
            return None;
        }
        let f = pl.objective(&cand);
        if f >= f0 {
            return Some((cand, f));
        }
        step *= 0.5;
    }
    None
}

fn ascend(pl: &PseudoLikelihood<'_>, init: Vec<f64>, bounds: &[f64], opts: &FitOptions) -> Result<Ascent> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidArgument(format!("invalid fit options {opts:?}")));
    }
    let mut b = init;
    project(&mut b, bounds);
    let mut f = pl.objective(&b);
    let mut grad = pl.gradient(&b);
    let mut projected = projected_norm(&b, &grad, bounds);
    let mut iterations = 0;
    let mut converged = projected <= opts.tol;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let h = pl.neg_hessian(&b);
        let newton = h
            .clone()
            .cholesky()
            .map(|c| c.solve(&DVector::from_column_slice(&grad)))
            .map(|d| d.as_slice().to_vec())
            .filter(|d| d.iter().all(|v| v.is_finite()));
        let accepted = newton
            .and_then(|d| line_search(pl, &b, f, &d, bounds))
            .or_else(|| line_search(pl, &b, f, &grad, bounds));
        let Some((next, f_next)) = accepted else {
            // no ascent direction improves the objective at this resolution
            converged = true;
            break;
        };
        let change = next
            .iter()
            .zip(&b)
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max);
        b = next;
        f = f_next;
        if !f.is_finite() {
            return Err(Error::NonFinite {
                stage: "pseudo-likelihood ascent",
                iteration: iterations,
            });
        }
        grad = pl.gradient(&b);
        projected = projected_norm(&b, &grad, bounds);
        converged = projected <= opts.tol || change < MIN_STEP;
    }
    let min_eig = pl
        .neg_hessian(&b)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(Ascent {
        b,
        grad,
        projected,
        iterations,
        converged,
        objective: f,
        min_eig,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fits `(τ, θ)` starting from `init` inside the box `|τ| ≤ B`, `|θ_k| ≤ M`.
pub fn fit_outcome(
    data: &Dataset,
    a: &InteractionMatrix,
    mu: &BaseMeasure,
    init: &ModelParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    check_theta(data, &init.theta)?;
    let pl = outcome_pl(data, a, mu)?;
    let mut bounds = vec![init.bound_coef; data.d()];
    bounds.push(init.bound_tau);
    let run = ascend(&pl, pack(init.tau, &init.theta), &bounds, opts)?;
    let d = data.d();
    let params = ModelParams {
        tau: run.b[d],
        theta: run.b[..d].to_vec(),
        ..init.clone()
    };
    Ok(FitResult {
        params,
        grad_norm: norm(&run.grad),
        projected_grad_norm: run.projected,
        min_hessian_eig: run.min_eig,
        iterations: run.iterations,
        converged: run.converged,
        objective: run.objective,
    })
}

/// Fits `γ` of the propensity model from the observed treatments; conditionals
/// are two-point with field `(MT)_i + γᵀx_i`.
pub fn fit_propensity(
    t: &[f64],
    x: &Covariates,
    m: &InteractionMatrix,
    init: &ModelParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    crate::model::check_treatments(t)?;
    if t.len() != m.n() || x.n() != m.n() || init.gamma.len() != x.d() {
        return Err(Error::Dimension(format!(
            "matrix n = {}, t has {} entries, x is {}×{}, gamma has {}",
            m.n(),
            t.len(),
            x.n(),
            x.d(),
            init.gamma.len()
        )));
    }
    let coin = BaseMeasure::rademacher();
    let pl = PseudoLikelihood {
        response: t,
        offset: m.matvec(t),
        features: x.as_slice().to_vec(),
        p: x.d(),
        mu: &coin,
    };
    let bounds = vec![init.bound_coef; x.d()];
    let run = ascend(&pl, init.gamma.clone(), &bounds, opts)?;
    Ok(FitResult {
        params: ModelParams {
            gamma: run.b.clone(),
            ..init.clone()
        },
        grad_norm: norm(&run.grad),
        projected_grad_norm: run.projected,
        min_hessian_eig: run.min_eig,
        iterations: run.iterations,
        converged: run.converged,
        objective: run.objective,
    })
}

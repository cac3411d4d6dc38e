//! Approximate message passing for Gaussian interaction matrices.
//!
//! The interaction is `A = βG` with `G` symmetric, `N(0, 1/n)` off the
//! diagonal. Two scalar fixed points drive the recursion:
//!
//! ```text
//! q  = E[α'(τT + H + β√q·Z, β²σ²)²]
//! σ² = E[α''(τT + H + β√q·Z, β²σ²)]
//! ```
//!
//! with `T` uniform on `±1`, `H = Xᵀθ`, `Z ~ N(0, 1)`; the all-control variant
//! replaces `τT` by `−τ`. The expectations are Monte-Carlo averages over one
//! frozen sample, which makes the map deterministic.
//!
//! The iteration itself is
//!
//! ```text
//! u⁰ = u¹ = 0,  u²_i = √q Σ_j G_ij
//! u^{k+1} = G α'(βu^k + h, β²σ²) − d_k α'(βu^{k−1} + h, β²σ²)
//! d_k = (β/n) Σ_j α''(βu^k_j + h_j, β²σ²)
//! ```
//!
//! and the mean estimate is `m = α'(βu^M + h, β²σ²)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimand::{effects_from_means, Allocation, Effects};
use crate::measure::{BaseMeasure, TiltParams};
use crate::model::{check_treatments, external_field, Covariates, CovariateDist};
use crate::network::InteractionMatrix;

pub const DEFAULT_MC_SAMPLES: usize = 1000;
pub const FIXED_POINT_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `τT` with `T` uniform on `±1`.
    TreatedRandom,
    /// `−τ` for every unit.
    AllControl,
}

/// Frozen Monte-Carlo draws of `(T, H, Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct McSample {
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    pub z: Vec<f64>,
}

impl McSample {
    pub fn draw<R: Rng + ?Sized>(
        size: usize,
        theta: &[f64],
        cov: &CovariateDist,
        rng: &mut R,
    ) -> Result<Self> {
        if size < 100 {
            return Err(Error::InvalidArgument(format!(
                "need at least 100 Monte-Carlo samples, got {size}"
            )));
        }
        cov.validate()?;
        let mut t = Vec::with_capacity(size);
        let mut h = Vec::with_capacity(size);
        let mut z = Vec::with_capacity(size);
        for _ in 0..size {
            t.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
            h.push(theta.iter().map(|th| th * cov.sample_value(rng)).sum());
            z.push(StandardNormal.sample(rng));
        }
        Ok(McSample { t, h, z })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Solution of the scalar fixed-point system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub q: f64,
    pub sigma2: f64,
    pub mc_samples: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Monte-Carlo standard errors of the two averages at the solution.
    pub q_std_err: f64,
    pub sigma2_std_err: f64,
}

/// Problem data for [`solve_fixed_point`].
#[derive(Debug, Clone, Copy)]
pub struct FixedPointProblem<'a> {
    pub mu: &'a BaseMeasure,
    pub tau: f64,
    pub beta: f64,
    pub variant: Variant,
}

struct PsiEval {
    q: f64,
    sigma2: f64,
    q_sd: f64,
    sigma2_sd: f64,
}

impl FixedPointProblem<'_> {
    fn psi(&self, sample: &McSample, sigma2: f64, q: f64) -> PsiEval {
        let lambda2 = self.beta * self.beta * sigma2;
        let sq = q.max(0.0).sqrt();
        let n = sample.len() as f64;
        let (mut s1, mut s2, mut v1, mut v2) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..sample.len() {
            let lin = match self.variant {
                Variant::TreatedRandom => self.tau * sample.t[k],
                Variant::AllControl => -self.tau,
            };
            let l1 = lin + sample.h[k] + self.beta * sq * sample.z[k];
            let (m, v) = self.mu.alpha_prime_second(TiltParams::new(l1, lambda2));
            s1 += m * m;
            s2 += v;
            v1 += m * m * m * m;
            v2 += v * v;
        }
        let (q, sigma2) = (s1 / n, s2 / n);
        PsiEval {
            q,
            sigma2,
            q_sd: (v1 / n - q * q).max(0.0).sqrt(),
            sigma2_sd: (v2 / n - sigma2 * sigma2).max(0.0).sqrt(),
        }
    }
}

/// Picard iteration of `(σ², q) ↦ ψ(σ², q)` from `init = (σ², q)` on a
/// frozen sample; stops when both coordinates move by less than `tol`.
pub fn solve_fixed_point_with(
    problem: &FixedPointProblem<'_>,
    sample: &McSample,
    init: (f64, f64),
    tol: f64,
) -> Result<FixedPoint> {
    if !(problem.beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be >= 0, got {}", problem.beta)));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let (mut sigma2, mut q) = init;
    let mut eval = problem.psi(sample, sigma2, q);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < FIXED_POINT_MAX_ITER {
        iterations += 1;
        let change = (eval.q - q).abs().max((eval.sigma2 - sigma2).abs());
        q = eval.q;
        sigma2 = eval.sigma2;
        if !q.is_finite() || !sigma2.is_finite() {
            return Err(Error::NonFinite {
                stage: "fixed-point solve",
                iteration: iterations,
            });
        }
        eval = problem.psi(sample, sigma2, q);
        if change < tol {
            converged = true;
            break;
        }
    }
    let n = sample.len() as f64;
    Ok(FixedPoint {
        q,
        sigma2,
        mc_samples: sample.len(),
        iterations,
        converged,
        q_std_err: eval.q_sd / n.sqrt(),
        sigma2_std_err: eval.sigma2_sd / n.sqrt(),
    })
}

/// Draws a fresh Monte-Carlo sample and solves from `(σ², q) = (1, 0)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_fixed_point<R: Rng + ?Sized>(
    mu: &BaseMeasure,
    tau: f64,
    theta: &[f64],
    cov: &CovariateDist,
    beta: f64,
    variant: Variant,
    mc_samples: usize,
    tol: f64,
    rng: &mut R,
) -> Result<FixedPoint> {
    let sample = McSample::draw(mc_samples, theta, cov, rng)?;
    let problem = FixedPointProblem {
        mu,
        tau,
        beta,
        variant,
    };
    solve_fixed_point_with(&problem, &sample, (1.0, 0.0), tol)
}

/// Final state of one AMP run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpState {
    pub u: Vec<f64>,
    pub u_prev: Vec<f64>,
    /// Last Onsager coefficient `d_{M−1}`.
    pub onsager: f64,
    /// Largest Onsager coefficient over the run.
    pub onsager_max: f64,
    pub m: Vec<f64>,
    pub iter: usize,
    pub tap_residual: f64,
}

/// Runs the recursion for `iters = M >= 3` steps on external field `h`
/// (`h_i = τt_i + θᵀx_i`) and returns `u^M`, `u^{M−1}` and the mean estimate.
pub fn amp_run(
    g: &InteractionMatrix,
    mu: &BaseMeasure,
    h: &[f64],
    beta: f64,
    fp: &FixedPoint,
    iters: usize,
) -> Result<AmpState> {
    let n = g.n();
    if h.len() != n {
        return Err(Error::Dimension("field length differs from matrix size".into()));
    }
    if iters < 3 {
        return Err(Error::InvalidArgument(format!("AMP needs M >= 3, got {iters}")));
    }
    if !fp.converged {
        return Err(Error::InvalidArgument("fixed point did not converge".into()));
    }
    let lambda2 = beta * beta * fp.sigma2;
    let eval = |u: &[f64], f: &mut [f64], var: &mut [f64]| {
        for i in 0..n {
            let (m, v) = mu.alpha_prime_second(TiltParams::new(beta * u[i] + h[i], lambda2));
            f[i] = m;
            var[i] = v;
        }
    };

    let mut u_prev = vec![0.0; n];
    let sq = fp.q.sqrt();
    let mut u: Vec<f64> = g.row_sums().into_iter().map(|s| s * sq).collect();
    // α'(βu^{k−1} + h) for the Onsager term; u¹ = 0
    let mut f_prev: Vec<f64> = h.iter().map(|&hi| mu.alpha_prime(TiltParams::new(hi, lambda2))).collect();
    let mut f = vec![0.0; n];
    let mut var = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut onsager = 0.0;
    let mut onsager_max: f64 = 0.0;
    for k in 2..iters {
        eval(&u, &mut f, &mut var);
        onsager = beta / n as f64 * var.iter().sum::<f64>();
        onsager_max = onsager_max.max(onsager);
        g.matvec_into(&f, &mut next);
        for i in 0..n {
            next[i] -= onsager * f_prev[i];
            if !next[i].is_finite() {
                return Err(Error::NonFinite {
                    stage: "AMP iteration",
                    iteration: k + 1,
                });
            }
        }
        std::mem::swap(&mut u_prev, &mut u);
        std::mem::swap(&mut u, &mut next);
        std::mem::swap(&mut f_prev, &mut f);
    }
    let m: Vec<f64> = (0..n)
        .map(|i| mu.alpha_prime(TiltParams::new(beta * u[i] + h[i], lambda2)))
        .collect();
    let tap = tap_residual(g, mu, h, beta, fp.sigma2, &m);
    Ok(AmpState {
        u,
        u_prev,
        onsager,
        onsager_max,
        m,
        iter: iters,
        tap_residual: tap,
    })
}

/// AMP for allocation `t_bar` and covariates `x_bar`.
#[allow(clippy::too_many_arguments)]
pub fn amp_iterate(
    g: &InteractionMatrix,
    mu: &BaseMeasure,
    tau: f64,
    theta: &[f64],
    t_bar: &[f64],
    x_bar: &Covariates,
    beta: f64,
    fp: &FixedPoint,
    iters: usize,
) -> Result<AmpState> {
    check_shapes(g, theta, t_bar, x_bar)?;
    let h = external_field(tau, theta, t_bar, x_bar);
    amp_run(g, mu, &h, beta, fp, iters)
}

fn check_shapes(g: &InteractionMatrix, theta: &[f64], t: &[f64], x: &Covariates) -> Result<()> {
    if t.len() != g.n() || x.n() != g.n() || x.d() != theta.len() {
        return Err(Error::Dimension(format!(
            "G is {}×{}, t has {} entries, x is {}×{}, theta has {}",
            g.n(),
            g.n(),
            t.len(),
            x.n(),
            x.d(),
            theta.len()
        )));
    }
    check_treatments(t)
}

/// RMS of `m − α'(βGm + h − β²σ²m, β²σ²)`.
pub fn tap_residual(
    g: &InteractionMatrix,
    mu: &BaseMeasure,
    h: &[f64],
    beta: f64,
    sigma2: f64,
    m: &[f64],
) -> f64 {
    let n = g.n();
    let gm = g.matvec(m);
    let lambda2 = beta * beta * sigma2;
    let sq: f64 = (0..n)
        .map(|i| {
            let l1 = beta * gm[i] + h[i] - lambda2 * m[i];
            let r = m[i] - mu.alpha_prime(TiltParams::new(l1, lambda2));
            r * r
        })
        .sum();
    (sq / n as f64).sqrt()
}

/// Fixed points for both variants, solved once per parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpFixedPoints {
    pub treated: FixedPoint,
    pub control: FixedPoint,
}

impl AmpFixedPoints {
    /// Solves both systems on one frozen Monte-Carlo sample.
    #[allow(clippy::too_many_arguments)]
    pub fn solve<R: Rng + ?Sized>(
        mu: &BaseMeasure,
        tau: f64,
        theta: &[f64],
        cov: &CovariateDist,
        beta: f64,
        mc_samples: usize,
        tol: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let sample = McSample::draw(mc_samples, theta, cov, rng)?;
        let solve = |variant| {
            let problem = FixedPointProblem {
                mu,
                tau,
                beta,
                variant,
            };
            solve_fixed_point_with(&problem, &sample, (1.0, 0.0), tol)
        };
        Ok(AmpFixedPoints {
            treated: solve(Variant::TreatedRandom)?,
            control: solve(Variant::AllControl)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpEffects {
    pub effects: Effects,
    pub treated: AmpState,
    pub control: AmpState,
}

/// Plug-in effects for one draw of `(t̄, x̄)` given solved fixed points.
#[allow(clippy::too_many_arguments)]
pub fn estimate_effects_amp(
    g: &InteractionMatrix,
    mu: &BaseMeasure,
    tau: f64,
    theta: &[f64],
    t_bar: &[f64],
    x_bar: &Covariates,
    beta: f64,
    fps: &AmpFixedPoints,
    iters: usize,
    alloc: Allocation,
) -> Result<AmpEffects> {
    let treated = amp_iterate(g, mu, tau, theta, t_bar, x_bar, beta, &fps.treated, iters)?;
    let all_control = vec![-1.0; t_bar.len()];
    let control = amp_iterate(g, mu, tau, theta, &all_control, x_bar, beta, &fps.control, iters)?;
    let effects = effects_from_means(t_bar, &treated.m, &control.m, alloc);
    Ok(AmpEffects {
        effects,
        treated,
        control,
    })
}

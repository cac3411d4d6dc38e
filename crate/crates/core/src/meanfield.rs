//! Mean-field fixed-point iteration for `⟨Y⟩` and its plug-in effect estimates.
//!
//! Starting from `u = 0` the iteration is `u ← α'(Au + τt̄ + x̄θ, 0)`. The
//! all-control twin replaces `τt̄` with `−τ·1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimand::{effects_from_means, Allocation, Effects};
use crate::measure::{BaseMeasure, TiltParams};
use crate::model::{Covariates, OutcomeModel};
use crate::network::InteractionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldOptions {
    pub max_iter: usize,
    /// Tolerance on the RMS change `‖u⁽ˡ⁺¹⁾ − u⁽ˡ⁾‖/√n`.
    pub tol: f64,
    /// Stop as soon as the residual drops below `tol`. With `false` exactly
    /// `max_iter` iterations run.
    pub early_stop: bool,
    /// Weight on the previous iterate; 0 is the plain iteration.
    pub damping: f64,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        MeanFieldOptions {
            max_iter: 500,
            tol: 1e-8,
            early_stop: true,
            damping: 0.0,
        }
    }
}

impl MeanFieldOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iter < 1 || !(self.tol > 0.0) || !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidArgument(format!("invalid mean-field options {self:?}")));
        }
        Ok(())
    }
}

/// Result of one mean-field run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRun {
    pub u: Vec<f64>,
    pub iter: usize,
    pub residual: f64,
    pub converged: bool,
    pub residuals: Vec<f64>,
}

/// Iterates `u ← α'(Au + field, 0)` from zero.
pub fn iterate_fixed_point(
    a: &InteractionMatrix,
    mu: &BaseMeasure,
    field: &[f64],
    opts: &MeanFieldOptions,
) -> Result<FixedPointRun> {
    opts.validate()?;
    let n = a.n();
    if field.len() != n {
        return Err(Error::Dimension("field length differs from matrix size".into()));
    }
    let mut u = vec![0.0; n];
    let mut coupling = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut residuals = Vec::new();
    let mut iter = 0;
    while iter < opts.max_iter {
        a.matvec_into(&u, &mut coupling);
        let mut sq = 0.0;
        for i in 0..n {
            let next = mu.alpha_prime(TiltParams::linear(coupling[i] + field[i]));
            let next = if opts.damping > 0.0 {
                (1.0 - opts.damping) * next + opts.damping * u[i]
            } else {
                next
            };
            if !next.is_finite() {
                return Err(Error::NonFinite {
                    stage: "mean-field iteration",
                    iteration: iter + 1,
                });
            }
            sq += (next - u[i]) * (next - u[i]);
            u[i] = next;
        }
        iter += 1;
        residual = (sq / n as f64).sqrt();
        residuals.push(residual);
        if opts.early_stop && residual < opts.tol {
            break;
        }
    }
    Ok(FixedPointRun {
        u,
        iter,
        residual,
        converged: residual < opts.tol,
        residuals,
    })
}

/// Runs the mean-field iteration for allocation `t`.
pub fn mf_iterate(
    model: &OutcomeModel<'_>,
    t: &[f64],
    x: &Covariates,
    opts: &MeanFieldOptions,
) -> Result<FixedPointRun> {
    let field = model.external_field(t, x)?;
    iterate_fixed_point(model.a, model.mu, &field, opts)
}

/// Both iterations (allocation `t̄` and all-control) for one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub treated: FixedPointRun,
    pub control: FixedPointRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldEffects {
    pub effects: Effects,
    pub state: MeanFieldState,
}

/// Plug-in direct and indirect effects for one draw of `(t̄, x̄)`.
pub fn estimate_effects_mf(
    model: &OutcomeModel<'_>,
    t_bar: &[f64],
    x_bar: &Covariates,
    opts: &MeanFieldOptions,
    alloc: Allocation,
) -> Result<MeanFieldEffects> {
    crate::model::check_treatments(t_bar)?;
    let treated = mf_iterate(model, t_bar, x_bar, opts)?;
    let all_control = vec![-1.0; t_bar.len()];
    let control = mf_iterate(model, &all_control, x_bar, opts)?;
    let effects = effects_from_means(t_bar, &treated.u, &control.u, alloc);
    Ok(MeanFieldEffects {
        effects,
        state: MeanFieldState { treated, control },
    })
}

//! Direct and indirect effects from per-unit mean vectors.
//!
//! Given the means `u` under a hypothetical allocation `T̄` and the means `ũ`
//! under all-control, the uniform-allocation effects are
//! `DE = (2/n) Σ T̄_i u_i` and `IE = (1/n)(Σ u_i − Σ ũ_i) − DE/2`.
//! For an i.i.d. allocation with `P(T̄_i = 1) = p` the Horvitz–Thompson
//! weights `a + bT̄_i` replace `2T̄_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hypothetical allocation: i.i.d. treatments with `P(T̄_i = 1) = p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub p: f64,
}

impl Default for Allocation {
    fn default() -> Self {
        Allocation { p: 0.5 }
    }
}

impl Allocation {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "allocation probability must lie in (0, 1), got {p}"
            )));
        }
        Ok(Allocation { p })
    }

    pub fn is_uniform(&self) -> bool {
        self.p == 0.5
    }

    /// `(a, b)` with `a + b = 1/p` and `b − a = 1/(1 − p)`.
    pub fn weights(&self) -> (f64, f64) {
        let (inv_p, inv_q) = (1.0 / self.p, 1.0 / (1.0 - self.p));
        (0.5 * (inv_p - inv_q), 0.5 * (inv_p + inv_q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effects {
    pub de: f64,
    pub ie: f64,
}

/// Plug-in effects from allocation `t_bar`, means `u` and all-control means `u_tilde`.
pub fn effects_from_means(t_bar: &[f64], u: &[f64], u_tilde: &[f64], alloc: Allocation) -> Effects {
    let n = t_bar.len() as f64;
    debug_assert_eq!(t_bar.len(), u.len());
    debug_assert_eq!(u.len(), u_tilde.len());
    let sum_u: f64 = u.iter().sum();
    let sum_ut: f64 = u_tilde.iter().sum();
    if alloc.is_uniform() {
        let de = 2.0 / n * t_bar.iter().zip(u).map(|(t, m)| t * m).sum::<f64>();
        let ie = (sum_u - sum_ut) / n - 0.5 * de;
        return Effects { de, ie };
    }
    let (a, b) = alloc.weights();
    let de = t_bar.iter().zip(u).map(|(t, m)| (a + b * t) * m).sum::<f64>() / n;
    let c = 1.0 / (2.0 * (1.0 - alloc.p));
    let control = t_bar.iter().zip(u).map(|(t, m)| c * (1.0 - t) * m).sum::<f64>() / n;
    Effects {
        de,
        ie: control - sum_ut / n,
    }
}

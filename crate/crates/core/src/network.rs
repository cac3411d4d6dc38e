//! Interaction matrices and their diagnostics.
//!
//! Every constructor returns a symmetric matrix with a zero diagonal. Sparse
//! families (low edge density) are stored in compressed rows, everything else
//! densely in row-major order.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Expected edge density below which constructors choose sparse storage.
pub const SPARSE_DENSITY: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Complete,
    Regular,
    ErdosRenyi,
    Graphon,
    Gaussian,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(Vec<f64>),
    Sparse {
        row_ptr: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n: usize,
    family: Family,
    beta: f64,
    storage: Storage,
}

impl InteractionMatrix {
    pub fn zeros(n: usize) -> Self {
        InteractionMatrix {
            n,
            family: Family::Custom,
            beta: 0.0,
            storage: Storage::Sparse {
                row_ptr: vec![0; n + 1],
                cols: Vec::new(),
                vals: Vec::new(),
            },
        }
    }

    /// Dense row-major values; rejects asymmetric or nonzero-diagonal input.
    pub fn from_dense(n: usize, values: Vec<f64>, family: Family, beta: f64) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Dimension(format!(
                "expected {} entries for n = {n}, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let v = values[i * n + j];
                if !v.is_finite() {
                    return Err(Error::InvalidMatrix(format!("non-finite entry ({i}, {j})")));
                }
                if v != values[j * n + i] {
                    return Err(Error::InvalidMatrix(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(InteractionMatrix {
            n,
            family,
            beta,
            storage: Storage::Dense(values),
        })
    }

    /// Builds a matrix from upper-triangle triplets `(i, j, v)` with `i < j`.
    /// Duplicate coordinates are rejected.
    pub fn from_upper_triplets(
        n: usize,
        triplets: &[(usize, usize, f64)],
        family: Family,
        beta: f64,
        dense: bool,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidMatrix(format!(
                    "index ({i}, {j}) out of range for n = {n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidMatrix(format!("diagonal entry at {i}")));
            }
            if i > j {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({i}, {j}) is not in the upper triangle"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidMatrix(format!("non-finite entry ({i}, {j})")));
            }
            if v != 0.0 {
                entries.push((i, j, v));
                entries.push((j, i, v));
            }
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        if entries.windows(2).any(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(Error::InvalidMatrix("duplicate entry".into()));
        }
        let storage = if dense {
            let mut values = vec![0.0; n * n];
            for &(i, j, v) in &entries {
                values[i * n + j] = v;
            }
            Storage::Dense(values)
        } else {
            let mut row_ptr = vec![0; n + 1];
            for &(i, _, _) in &entries {
                row_ptr[i + 1] += 1;
            }
            for i in 0..n {
                row_ptr[i + 1] += row_ptr[i];
            }
            Storage::Sparse {
                row_ptr,
                cols: entries.iter().map(|e| e.1).collect(),
                vals: entries.iter().map(|e| e.2).collect(),
            }
        };
        Ok(InteractionMatrix {
            n,
            family,
            beta,
            storage,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Scale parameter the matrix was constructed with.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(v) => v.iter().filter(|x| **x != 0.0).count(),
            Storage::Sparse { vals, .. } => vals.len(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(v) => v[i * self.n + j],
            Storage::Sparse {
                row_ptr,
                cols,
                vals,
            } => {
                let r = row_ptr[i]..row_ptr[i + 1];
                match cols[r.clone()].binary_search(&j) {
                    Ok(k) => vals[r.start + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Calls `f(j, a_ij)` for every stored entry of row `i`.
    #[inline]
    pub fn for_each_in_row<F: FnMut(usize, f64)>(&self, i: usize, mut f: F) {
        match &self.storage {
            Storage::Dense(v) => {
                let row = &v[i * self.n..(i + 1) * self.n];
                for (j, &a) in row.iter().enumerate() {
                    f(j, a);
                }
            }
            Storage::Sparse {
                row_ptr,
                cols,
                vals,
            } => {
                for k in row_ptr[i]..row_ptr[i + 1] {
                    f(cols[k], vals[k]);
                }
            }
        }
    }

    /// `Σ_j a_ij x_j`.
    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        match &self.storage {
            Storage::Dense(v) => {
                let row = &v[i * self.n..(i + 1) * self.n];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            }
            Storage::Sparse {
                row_ptr,
                cols,
                vals,
            } => (row_ptr[i]..row_ptr[i + 1])
                .map(|k| vals[k] * x[cols[k]])
                .sum(),
        }
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row_dot(i, x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec_into(x, &mut out);
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let mut s = 0.0;
                self.for_each_in_row(i, |_, a| s += a);
                s
            })
            .collect()
    }

    /// `Tr(A²) = Σ_ij a_ij²` for symmetric `A`.
    pub fn trace_sq(&self) -> f64 {
        match &self.storage {
            Storage::Dense(v) => v.iter().map(|a| a * a).sum(),
            Storage::Sparse { vals, .. } => vals.iter().map(|a| a * a).sum(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(v) => v.clone(),
            Storage::Sparse { .. } => {
                let mut out = vec![0.0; self.n * self.n];
                for i in 0..self.n {
                    self.for_each_in_row(i, |j, a| out[i * self.n + j] = a);
                }
                out
            }
        }
    }

    /// Nonzero upper-triangle entries in row-major order.
    pub fn upper_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            self.for_each_in_row(i, |j, a| {
                if j > i && a != 0.0 {
                    out.push((i, j, a));
                }
            });
        }
        out
    }

    /// Entrywise multiple; `beta` is multiplied by the same factor.
    pub fn scaled(&self, factor: f64) -> Self {
        let storage = match &self.storage {
            Storage::Dense(v) => Storage::Dense(v.iter().map(|a| a * factor).collect()),
            Storage::Sparse {
                row_ptr,
                cols,
                vals,
            } => Storage::Sparse {
                row_ptr: row_ptr.clone(),
                cols: cols.clone(),
                vals: vals.iter().map(|a| a * factor).collect(),
            },
        };
        InteractionMatrix {
            n: self.n,
            family: self.family,
            beta: self.beta * factor,
            storage,
        }
    }

    /// Simultaneous row/column relabeling: entry `(perm[i], perm[j])` of the
    /// result equals entry `(i, j)` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            self.for_each_in_row(i, |j, a| values[perm[i] * n + perm[j]] = a);
        }
        InteractionMatrix {
            n,
            family: self.family,
            beta: self.beta,
            storage: Storage::Dense(values),
        }
    }

    /// Checks symmetry and zero diagonal entry by entry.
    pub fn check_invariants(&self) -> Result<()> {
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(Error::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            let mut bad = None;
            self.for_each_in_row(i, |j, a| {
                if bad.is_none() && self.get(j, i) != a {
                    bad = Some(j);
                }
            });
            if let Some(j) = bad {
                return Err(Error::InvalidMatrix(format!("asymmetric at ({i}, {j})")));
            }
        }
        Ok(())
    }

    /// Coordinate text: one `i j value` line per nonzero upper-triangle entry.
    pub fn to_coo_string(&self) -> String {
        let mut s = String::new();
        for (i, j, v) in self.upper_triplets() {
            writeln!(s, "{i} {j} {v}").unwrap();
        }
        s
    }

    pub fn from_coo_str(text: &str, meta: &MatrixMeta) -> Result<Self> {
        let mut triplets = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse_err = || Error::Parse(format!("line {}: `{line}`", lineno + 1));
            let i: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(parse_err)?;
            let j: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(parse_err)?;
            let v: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(parse_err)?;
            if it.next().is_some() {
                return Err(parse_err());
            }
            triplets.push((i, j, v));
        }
        let n = meta.n;
        let density = 2.0 * triplets.len() as f64 / (n as f64 * n as f64).max(1.0);
        Self::from_upper_triplets(n, &triplets, meta.family, meta.beta, density >= SPARSE_DENSITY)
    }

    /// Writes `path` and a `<path>.json` metadata sidecar.
    pub fn write_coo(&self, path: &Path, seed: Option<u64>) -> Result<()> {
        std::fs::write(path, self.to_coo_string())?;
        let meta = MatrixMeta {
            n: self.n,
            family: self.family,
            beta: self.beta,
            seed,
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Reads a coordinate file and its sidecar.
    pub fn read_coo(path: &Path) -> Result<(Self, MatrixMeta)> {
        let meta: MatrixMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let text = std::fs::read_to_string(path)?;
        Ok((Self::from_coo_str(&text, &meta)?, meta))
    }
}

/// Metadata sidecar for coordinate files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub n: usize,
    pub family: Family,
    pub beta: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be >= 0, got {beta}")));
    }
    Ok(())
}

/// `(β/n)(11ᵀ − I)`.
pub fn complete_graph(n: usize, beta: f64) -> Result<InteractionMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument("complete graph needs n >= 2".into()));
    }
    check_beta(beta)?;
    let a = beta / n as f64;
    let mut values = vec![a; n * n];
    for i in 0..n {
        values[i * n + i] = 0.0;
    }
    Ok(InteractionMatrix {
        n,
        family: Family::Complete,
        beta,
        storage: Storage::Dense(values),
    })
}

/// Random `d`-regular graph with entries `β/d` on edges.
///
/// Stubs are paired one edge at a time, re-drawing pairs that would create a
/// self-loop or a repeated edge, and restarting from scratch when no valid
/// pair remains.
pub fn regular_graph<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    beta: f64,
    rng: &mut R,
) -> Result<InteractionMatrix> {
    check_beta(beta)?;
    if d == 0 || d >= n {
        return Err(Error::InvalidArgument(format!("need 0 < d < n, got d = {d}, n = {n}")));
    }
    if (n * d) % 2 == 1 {
        return Err(Error::InvalidArgument(format!("n·d = {} is odd", n * d)));
    }
    let edges = loop {
        if let Some(edges) = try_pairing(n, d, rng) {
            break edges;
        }
    };
    let w = beta / d as f64;
    let triplets: Vec<_> = edges.into_iter().map(|(i, j)| (i, j, w)).collect();
    let dense = d as f64 / n as f64 >= SPARSE_DENSITY;
    InteractionMatrix::from_upper_triplets(n, &triplets, Family::Regular, beta, dense)
}

fn try_pairing<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Option<Vec<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    stubs.shuffle(rng);
    let mut adjacent = vec![false; n * n];
    let mut edges = Vec::with_capacity(n * d / 2);
    while !stubs.is_empty() {
        let mut misses = 0usize;
        loop {
            let a = rng.random_range(0..stubs.len());
            let b = rng.random_range(0..stubs.len());
            let (u, v) = (stubs[a], stubs[b]);
            if a != b && u != v && !adjacent[u * n + v] {
                adjacent[u * n + v] = true;
                adjacent[v * n + u] = true;
                edges.push((u.min(v), u.max(v)));
                let (hi, lo) = (a.max(b), a.min(b));
                stubs.swap_remove(hi);
                stubs.swap_remove(lo);
                break;
            }
            misses += 1;
            if misses >= 64 && !has_valid_pair(&stubs, &adjacent, n) {
                return None;
            }
        }
    }
    Some(edges)
}

fn has_valid_pair(stubs: &[usize], adjacent: &[bool], n: usize) -> bool {
    let mut verts: Vec<usize> = stubs.to_vec();
    verts.sort_unstable();
    verts.dedup();
    verts
        .iter()
        .enumerate()
        .any(|(k, &u)| verts[k + 1..].iter().any(|&v| !adjacent[u * n + v]))
}

/// Erdős–Rényi `G(n, p)` with entries `β/(np)` on edges.
pub fn erdos_renyi<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    beta: f64,
    rng: &mut R,
) -> Result<InteractionMatrix> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (0, 1], got {p}")));
    }
    check_beta(beta)?;
    if n < 2 {
        return Err(Error::InvalidArgument("need n >= 2".into()));
    }
    let w = beta / (n as f64 * p);
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if p >= 1.0 || rng.random::<f64>() < p {
                triplets.push((i, j, w));
            }
        }
    }
    InteractionMatrix::from_upper_triplets(n, &triplets, Family::ErdosRenyi, beta, p >= SPARSE_DENSITY)
}

/// Graphon model: latent `U_i ~ Unif(0,1)`, edges `Bern(ρ W(U_i, U_j))`,
/// entries `β/(nρ)`.
pub fn graphon<R, W>(n: usize, w: W, rho: f64, beta: f64, rng: &mut R) -> Result<InteractionMatrix>
where
    R: Rng + ?Sized,
    W: Fn(f64, f64) -> f64,
{
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 1], got {rho}")));
    }
    check_beta(beta)?;
    let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let scale = beta / (n as f64 * rho);
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let wij = w(u[i], u[j]);
            if !(0.0..=1.0).contains(&wij) {
                return Err(Error::InvalidArgument(format!(
                    "graphon value {wij} outside [0, 1]"
                )));
            }
            if rng.random::<f64>() < rho * wij {
                triplets.push((i, j, scale));
            }
        }
    }
    InteractionMatrix::from_upper_triplets(n, &triplets, Family::Graphon, beta, rho >= SPARSE_DENSITY)
}

/// Normalized Gaussian ensemble `G`: upper triangle i.i.d. `N(0, 1/n)`,
/// symmetric, zero diagonal.
pub fn gaussian_ensemble<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<InteractionMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument("need n >= 2".into()));
    }
    let sd = 1.0 / (n as f64).sqrt();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let g: f64 = StandardNormal.sample(rng);
            values[i * n + j] = sd * g;
            values[j * n + i] = sd * g;
        }
    }
    Ok(InteractionMatrix {
        n,
        family: Family::Gaussian,
        beta: 1.0,
        storage: Storage::Dense(values),
    })
}

/// `A = βG` with `G` from [`gaussian_ensemble`].
pub fn gaussian_sk<R: Rng + ?Sized>(n: usize, beta: f64, rng: &mut R) -> Result<InteractionMatrix> {
    check_beta(beta)?;
    Ok(gaussian_ensemble(n, rng)?.scaled(beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticThresholds {
    /// High temperature iff `‖A‖ < high_temp`.
    pub high_temp: f64,
    /// Mean-field iff `Tr(A²) / (n‖A‖²) <= stable_rank_fraction`.
    pub stable_rank_fraction: f64,
    pub power_tol: f64,
    pub power_max_iter: usize,
}

impl Default for DiagnosticThresholds {
    fn default() -> Self {
        DiagnosticThresholds {
            high_temp: 0.25,
            stable_rank_fraction: 0.05,
            power_tol: 1e-8,
            power_max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub op_norm: f64,
    pub trace_sq_over_n: f64,
    pub mean_field_flag: bool,
    pub high_temp_flag: bool,
    pub threshold: f64,
    pub power_converged: bool,
    pub power_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Operator norm of a symmetric matrix by power iteration on `A²`.
pub fn operator_norm(a: &InteractionMatrix, tol: f64, max_iter: usize) -> PowerIteration {
    let n = a.n();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i + 1) as f64).sin()).collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut est = 0.0;
    for it in 1..=max_iter {
        a.matvec_into(&v, &mut w);
        let wn = norm(&w);
        if wn == 0.0 {
            return PowerIteration {
                value: 0.0,
                converged: true,
                iterations: it,
            };
        }
        a.matvec_into(&w, &mut v);
        let vn = norm(&v);
        // ‖A²v‖ / ‖Av‖ is a lower bound on ‖A‖ that increases monotonically
        let next = vn / wn;
        v.iter_mut().for_each(|x| *x /= vn);
        if (next - est).abs() <= tol * next.max(f64::MIN_POSITIVE) {
            return PowerIteration {
                value: next,
                converged: true,
                iterations: it,
            };
        }
        est = next;
    }
    PowerIteration {
        value: est,
        converged: false,
        iterations: max_iter,
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let s = norm(v);
    v.iter_mut().for_each(|x| *x /= s);
}

pub fn diagnostics(a: &InteractionMatrix) -> Diagnostics {
    diagnostics_with(a, &DiagnosticThresholds::default())
}

pub fn diagnostics_with(a: &InteractionMatrix, th: &DiagnosticThresholds) -> Diagnostics {
    let pi = operator_norm(a, th.power_tol, th.power_max_iter);
    let tr = a.trace_sq();
    let n = a.n() as f64;
    let mean_field = if pi.value == 0.0 {
        true
    } else {
        tr / (n * pi.value * pi.value) <= th.stable_rank_fraction
    };
    Diagnostics {
        op_norm: pi.value,
        trace_sq_over_n: tr / n,
        mean_field_flag: mean_field,
        high_temp_flag: pi.value < th.high_temp,
        threshold: th.high_temp,
        power_converged: pi.converged,
        power_iterations: pi.iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn complete_graph_entries_and_norm() {
        let a = complete_graph(3, 0.3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 0.1 };
                assert!((a.get(i, j) - want).abs() < 1e-15);
            }
        }
        // rank-one-plus-identity: eigenvalues β(n−1)/n and −β/n
        let d = diagnostics(&complete_graph(200, 0.3).unwrap());
        assert!((d.op_norm - 0.3 * 199.0 / 200.0).abs() < 1e-7);
        assert!((d.trace_sq_over_n * 200.0 - 0.09 * 199.0 / 200.0).abs() < 1e-12);
        assert!(d.mean_field_flag);
        assert!(!d.high_temp_flag);
        assert!(complete_graph(1, 0.3).is_err());
    }

    #[test]
    fn zero_matrix_diagnostics() {
        let d = diagnostics(&InteractionMatrix::zeros(10));
        assert_eq!(d.op_norm, 0.0);
        assert!(d.mean_field_flag && d.high_temp_flag);
    }

    #[test]
    fn regular_graph_rows_and_trace() {
        let a = regular_graph(100, 20, 0.3, &mut rng(1)).unwrap();
        a.check_invariants().unwrap();
        for s in a.row_sums() {
            assert!((s - 0.3).abs() < 1e-12);
        }
        assert!((a.trace_sq() / 100.0 - 0.0045).abs() < 1e-12);
        assert!(regular_graph(5, 3, 0.3, &mut rng(1)).is_err());
        assert!(regular_graph(5, 5, 0.3, &mut rng(1)).is_err());
    }

    #[test]
    fn regular_with_full_degree_is_complete_pattern() {
        let n = 9;
        let a = regular_graph(n, n - 1, 0.3, &mut rng(3)).unwrap();
        let c = complete_graph(n, 0.3 * n as f64 / (n as f64 - 1.0)).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((a.get(i, j) - c.get(i, j)).abs() < 1e-12);
                assert_eq!(a.get(i, j) != 0.0, i != j);
            }
        }
    }

    #[test]
    fn erdos_renyi_full_density_is_complete() {
        let a = erdos_renyi(50, 1.0, 0.3, &mut rng(4)).unwrap();
        let c = complete_graph(50, 0.3).unwrap();
        assert_eq!(a.to_dense(), c.to_dense());
        assert!(erdos_renyi(10, 0.0, 0.3, &mut rng(1)).is_err());
        assert!(erdos_renyi(10, 1.5, 0.3, &mut rng(1)).is_err());
    }

    #[test]
    fn erdos_renyi_mean_row_sum() {
        let (n, p, beta) = (200, 0.5, 0.3);
        let a = erdos_renyi(n, p, beta, &mut rng(5)).unwrap();
        a.check_invariants().unwrap();
        let sums = a.row_sums();
        let mean = sums.iter().sum::<f64>() / n as f64;
        // row sum = (β/np)·Bin(n−1, p); the mean over rows has sd ≤ that of one row
        let w = beta / (n as f64 * p);
        let sd_row = w * ((n - 1) as f64 * p * (1.0 - p)).sqrt();
        let expected = w * (n - 1) as f64 * p;
        assert!((mean - expected).abs() < 3.0 * sd_row);
        assert!((expected - beta).abs() < 0.01);
    }

    #[test]
    fn sparse_storage_for_low_density() {
        let a = erdos_renyi(300, 0.01, 0.3, &mut rng(6)).unwrap();
        assert!(!a.is_dense());
        a.check_invariants().unwrap();
        let b = erdos_renyi(300, 0.5, 0.3, &mut rng(6)).unwrap();
        assert!(b.is_dense());
    }

    #[test]
    fn graphon_constant_and_product() {
        let a = graphon(100, |_, _| 1.0, 1.0, 0.3, &mut rng(7)).unwrap();
        assert_eq!(a.to_dense(), complete_graph(100, 0.3).unwrap().to_dense());
        let n = 500;
        let a = graphon(n, |u, v| u * v, 1.0, 0.3, &mut rng(8)).unwrap();
        a.check_invariants().unwrap();
        let edges = a.upper_triplets().len() as f64;
        let pairs = (n * (n - 1) / 2) as f64;
        let density = edges / pairs;
        // Var of the edge density is dominated by the latent U's: Var(E[W|U]) ≈ (1/n)·4·Var(U/2)
        let se = (4.0 * (1.0 / 12.0) * 0.25 / n as f64 + 0.25 / pairs).sqrt();
        assert!((density - 0.25).abs() < 3.0 * se, "density {density}");
        assert!(graphon(10, |_, _| 1.5, 1.0, 0.3, &mut rng(1)).is_err());
    }

    #[test]
    fn gaussian_norm_and_trace() {
        let z = gaussian_sk(20, 0.0, &mut rng(9)).unwrap();
        assert!(z.to_dense().iter().all(|&v| v == 0.0));
        let g = gaussian_ensemble(1000, &mut rng(10)).unwrap();
        g.check_invariants().unwrap();
        let d = diagnostics(&g);
        assert!(d.op_norm > 1.8 && d.op_norm < 2.2, "‖G‖ = {}", d.op_norm);
        let a = gaussian_sk(500, 0.3, &mut rng(11)).unwrap();
        let d = diagnostics(&a);
        assert!((d.op_norm - 0.6).abs() < 0.05, "‖A‖ = {}", d.op_norm);
        assert!((d.trace_sq_over_n - 0.09 * 499.0 / 500.0).abs() < 0.01);
        assert!(!d.mean_field_flag);
        assert!(gaussian_sk(10, -1.0, &mut rng(1)).is_err());
    }

    #[test]
    fn rejects_invalid_custom_matrices() {
        assert!(InteractionMatrix::from_dense(2, vec![1.0, 0.5, 0.5, 0.0], Family::Custom, 0.0).is_err());
        assert!(InteractionMatrix::from_dense(2, vec![0.0, 0.5, 0.4, 0.0], Family::Custom, 0.0).is_err());
        assert!(InteractionMatrix::from_upper_triplets(3, &[(1, 1, 0.2)], Family::Custom, 0.0, false).is_err());
        assert!(InteractionMatrix::from_upper_triplets(3, &[(2, 1, 0.2)], Family::Custom, 0.0, false).is_err());
        assert!(InteractionMatrix::from_upper_triplets(3, &[(0, 1, 0.2), (0, 1, 0.1)], Family::Custom, 0.0, false).is_err());
    }

    #[test]
    fn sparse_and_dense_agree() {
        let t = [(0, 1, 0.5), (1, 3, -0.25), (2, 3, 1.0)];
        let s = InteractionMatrix::from_upper_triplets(4, &t, Family::Custom, 0.0, false).unwrap();
        let d = InteractionMatrix::from_upper_triplets(4, &t, Family::Custom, 0.0, true).unwrap();
        assert_eq!(s.to_dense(), d.to_dense());
        let x = [1.0, -2.0, 0.5, 3.0];
        assert_eq!(s.matvec(&x), d.matvec(&x));
        assert_eq!(s.upper_triplets(), t.to_vec());
    }

    #[test]
    fn coo_text_round_trip_is_exact() {
        let a = gaussian_sk(12, 0.3, &mut rng(12)).unwrap();
        let meta = MatrixMeta {
            n: 12,
            family: Family::Gaussian,
            beta: 0.3,
            seed: Some(12),
        };
        let back = InteractionMatrix::from_coo_str(&a.to_coo_string(), &meta).unwrap();
        assert_eq!(back.to_dense(), a.to_dense());
        assert!(InteractionMatrix::from_coo_str("0 1\n", &meta).is_err());
        assert!(InteractionMatrix::from_coo_str("0 20 0.1\n", &meta).is_err());
    }
}

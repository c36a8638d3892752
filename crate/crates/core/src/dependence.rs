//! Empirical extremal dependence: χ(u), η(u), the min-projection rate λ(ω),
//! covariate-sliced bootstrap summaries and χ-graph clustering.
//!
//! Data are passed as columns (one `Vec` per variable, equal lengths).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margins;
use crate::numeric;

/// Joint exceedances below this count trigger a sparse-data warning.
pub const SPARSE_JOINT: usize = 20;

fn check_columns(cols: &[Vec<f64>], idx: &[usize]) -> Result<usize> {
    if idx.is_empty() {
        return Err(Error::Argument("empty index set".into()));
    }
    let n = cols.first().map_or(0, Vec::len);
    for &i in idx {
        let c = cols
            .get(i)
            .ok_or_else(|| Error::Argument(format!("index {i} out of range for {} variables", cols.len())))?;
        if c.len() != n {
            return Err(Error::Argument("columns differ in length".into()));
        }
    }
    if n == 0 {
        return Err(Error::InsufficientData {
            needed: 1,
            got: 0,
            context: "dependence rows".into(),
        });
    }
    Ok(n)
}

fn check_level(u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0,1), got {u}")));
    }
    Ok(())
}

/// Rank transform of every column to `(0,1)` (average ranks over `n+1`).
pub fn rank_transform(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    cols.iter().map(|c| margins::to_uniform_ranks(c)).collect()
}

/// Rank transform to standard exponential margins.
pub fn exponential_transform(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rank_transform(cols)
        .into_iter()
        .map(|c| c.into_iter().map(|u| -(-u).ln_1p()).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCounts {
    pub n: usize,
    pub joint: usize,
    /// Mean over the index set of the marginal exceedance counts.
    pub marginal: f64,
}

/// Joint and marginal counts of `U_i > u` over `idx`.
pub fn tail_counts(uniform: &[Vec<f64>], idx: &[usize], u: f64) -> Result<TailCounts> {
    let n = check_columns(uniform, idx)?;
    check_level(u)?;
    let joint = (0..n).filter(|&t| idx.iter().all(|&i| uniform[i][t] > u)).count();
    let marginal = idx
        .iter()
        .map(|&i| uniform[i].iter().filter(|&&v| v > u).count() as f64)
        .sum::<f64>()
        / idx.len() as f64;
    Ok(TailCounts { n, joint, marginal })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub counts: TailCounts,
    pub sparse: bool,
}

fn sparse_warning(what: &str, c: &TailCounts) -> bool {
    if c.joint < SPARSE_JOINT {
        log::warn!("{what}: only {} joint exceedances", c.joint);
        true
    } else {
        false
    }
}

/// `χ(u)`: fraction of rows with every `U_i > u` relative to the marginal
/// exceedance fraction. Returns 0 (flagged sparse) without joint exceedances.
pub fn chi_u(uniform: &[Vec<f64>], idx: &[usize], u: f64) -> Result<Estimate> {
    let counts = tail_counts(uniform, idx, u)?;
    let sparse = sparse_warning("chi", &counts);
    let estimate = if counts.marginal > 0.0 {
        (counts.joint as f64 / counts.marginal).min(1.0)
    } else {
        0.0
    };
    Ok(Estimate { estimate, counts, sparse })
}

/// `η(u)`: log marginal exceedance fraction over log joint exceedance fraction.
pub fn eta_u(uniform: &[Vec<f64>], idx: &[usize], u: f64) -> Result<Estimate> {
    let counts = tail_counts(uniform, idx, u)?;
    let sparse = sparse_warning("eta", &counts);
    let n = counts.n as f64;
    let estimate = if counts.joint == 0 || counts.marginal == 0.0 {
        0.0
    } else if counts.joint as f64 >= counts.marginal {
        1.0
    } else {
        (counts.marginal / n).ln() / (counts.joint as f64 / n).ln()
    };
    Ok(Estimate { estimate, counts, sparse })
}

pub fn check_simplex(omega: &[f64]) -> Result<()> {
    if omega.is_empty() || omega.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Argument(format!("ray {omega:?} has negative or missing components")));
    }
    let s: f64 = omega.iter().sum();
    if (s - 1.0).abs() > 1e-10 {
        return Err(Error::Argument(format!("ray components sum to {s}, not 1")));
    }
    Ok(())
}

/// `T_ω = min_i Z_i / ω_i` over coordinates with `ω_i > 0`.
pub fn min_projection_row(z: &[f64], omega: &[f64]) -> Result<f64> {
    if z.len() != omega.len() {
        return Err(Error::Argument(format!(
            "row has {} coordinates, ray has {}",
            z.len(),
            omega.len()
        )));
    }
    Ok(z.iter()
        .zip(omega)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, w)| v / w)
        .fold(f64::INFINITY, f64::min))
}

/// `T_ω` for every row of column data.
pub fn min_projection(z_cols: &[Vec<f64>], omega: &[f64]) -> Result<Vec<f64>> {
    check_simplex(omega)?;
    let idx: Vec<usize> = (0..z_cols.len()).collect();
    let n = check_columns(z_cols, &idx)?;
    if omega.len() != z_cols.len() {
        return Err(Error::Argument(format!(
            "data have {} coordinates, ray has {}",
            z_cols.len(),
            omega.len()
        )));
    }
    let mut row = vec![0.0; omega.len()];
    (0..n)
        .map(|t| {
            for (r, c) in row.iter_mut().zip(z_cols) {
                *r = c[t];
            }
            min_projection_row(&row, omega)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaEstimate {
    pub lambda: f64,
    pub threshold: f64,
    pub n_exceed: usize,
    /// Set when the estimate falls below the lower bound `max(ω)`.
    pub below_bound: bool,
    pub sparse: bool,
}

/// Exponential rate of `T_ω` above its empirical `level`-quantile:
/// `k / Σ (T - u)` over the `k` exceedances.
pub fn hill_lambda(z_cols: &[Vec<f64>], omega: &[f64], level: f64) -> Result<LambdaEstimate> {
    check_level(level)?;
    let t = min_projection(z_cols, omega)?;
    lambda_from_projection(&t, omega, level)
}

fn lambda_from_projection(t: &[f64], omega: &[f64], level: f64) -> Result<LambdaEstimate> {
    let u = numeric::quantile(t, level);
    let excess: Vec<f64> = t.iter().filter(|&&v| v > u).map(|v| v - u).collect();
    let k = excess.len();
    let sparse = k < SPARSE_JOINT;
    if sparse {
        log::warn!("lambda: only {k} exceedances of the min-projection");
    }
    let total: f64 = excess.iter().sum();
    let lambda = if total > 0.0 { k as f64 / total } else { f64::INFINITY };
    let bound = omega.iter().copied().fold(0.0, f64::max);
    Ok(LambdaEstimate {
        lambda,
        threshold: u,
        n_exceed: k,
        below_bound: lambda < bound,
        sparse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Chi,
    Eta,
    Lambda,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepSummary {
    pub measure: Measure,
    pub index_set: Vec<usize>,
    /// Level `u` for χ/η, quantile level for λ.
    pub level: f64,
    /// Ray for λ summaries.
    pub omega: Option<Vec<f64>>,
    pub slice: String,
    pub estimate: f64,
    pub replicates: Vec<f64>,
}

impl DepSummary {
    pub fn median(&self) -> f64 {
        numeric::quantile(&self.replicates, 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Slicing {
    /// One slice per distinct value (e.g. season).
    Levels,
    /// `k` equally sized slices ordered by the covariate.
    Quantiles { k: usize },
}

/// Row indices of each slice with a label.
pub fn slice_rows(covariate: &[f64], slicing: &Slicing) -> Result<Vec<(String, Vec<usize>)>> {
    let n = covariate.len();
    match slicing {
        Slicing::Levels => {
            let mut levels: Vec<f64> = covariate.iter().copied().filter(|v| !v.is_nan()).collect();
            numeric::sort_floats(&mut levels);
            levels.dedup();
            Ok(levels
                .iter()
                .map(|&l| (format!("{l}"), (0..n).filter(|&t| covariate[t] == l).collect()))
                .collect())
        }
        Slicing::Quantiles { k } => {
            if *k == 0 || *k > n {
                return Err(Error::Argument(format!("cannot cut {n} rows into {k} slices")));
            }
            let mut order: Vec<usize> = (0..n).filter(|&t| !covariate[t].is_nan()).collect();
            order.sort_by(|&a, &b| covariate[a].total_cmp(&covariate[b]).then(a.cmp(&b)));
            let m = order.len();
            let mut out: Vec<(String, Vec<usize>)> = (0..*k).map(|j| (format!("q{}", j + 1), Vec::new())).collect();
            for (pos, &t) in order.iter().enumerate() {
                out[pos * k / m].1.push(t);
            }
            out.iter_mut().for_each(|s| s.1.sort_unstable());
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRequest {
    pub index_sets: Vec<Vec<usize>>,
    /// Level for χ.
    pub u: f64,
    /// Rays for λ (evaluated on every index set of matching length).
    pub omegas: Vec<Vec<f64>>,
    /// Quantile level for λ.
    pub lambda_level: f64,
    pub n_boot: usize,
    pub seed: u64,
}

fn subset(cols: &[Vec<f64>], rows: &[usize], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| rows.iter().map(|&t| cols[i][t]).collect()).collect()
}

/// Per-slice χ (and λ for matching rays) with IID row bootstraps. Ranks are
/// recomputed within each slice and each resample.
pub fn sliced_summaries(raw: &[Vec<f64>], covariate: &[f64], slicing: &Slicing, req: &SliceRequest) -> Result<Vec<DepSummary>> {
    check_level(req.u)?;
    let slices = slice_rows(covariate, slicing)?;
    let mut out = Vec::new();
    for (label, rows) in &slices {
        for set in &req.index_sets {
            let data = subset(raw, rows, set);
            let local: Vec<usize> = (0..set.len()).collect();
            let chi_of = |d: &[Vec<f64>]| chi_u(&rank_transform(d), &local, req.u).map(|e| e.estimate);
            let estimate = chi_of(&data)?;
            let replicates = bootstrap(&data, req.n_boot, req.seed, |d| chi_of(d).unwrap_or(f64::NAN));
            out.push(DepSummary {
                measure: Measure::Chi,
                index_set: set.clone(),
                level: req.u,
                omega: None,
                slice: label.clone(),
                estimate,
                replicates,
            });
            for omega in req.omegas.iter().filter(|w| w.len() == set.len()) {
                let lam_of =
                    |d: &[Vec<f64>]| hill_lambda(&exponential_transform(d), omega, req.lambda_level).map(|e| e.lambda);
                let estimate = lam_of(&data)?;
                let replicates = bootstrap(&data, req.n_boot, req.seed, |d| lam_of(d).unwrap_or(f64::NAN));
                out.push(DepSummary {
                    measure: Measure::Lambda,
                    index_set: set.clone(),
                    level: req.lambda_level,
                    omega: Some(omega.clone()),
                    slice: label.clone(),
                    estimate,
                    replicates,
                });
            }
        }
    }
    Ok(out)
}

/// `n_boot` IID row resamples of column data, replicate `r` seeded by `seed + r`.
pub fn bootstrap<F>(cols: &[Vec<f64>], n_boot: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&[Vec<f64>]) -> f64 + Sync,
{
    let n = cols.first().map_or(0, Vec::len);
    (0..n_boot)
        .into_par_iter()
        .map(|r| {
            let mut rng = numeric::rng_for(seed, r as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n.max(1))).collect();
            let all: Vec<usize> = (0..cols.len()).collect();
            stat(&subset(cols, &rows, &all))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendTest {
    pub s: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Mann–Kendall test for a monotone trend in a sequence (two-sided).
pub fn mann_kendall(x: &[f64]) -> TrendTest {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += (x[j] - x[i]).signum() * f64::from(x[j] != x[i]);
        }
    }
    let nf = n as f64;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = if var <= 0.0 || s == 0.0 {
        0.0
    } else {
        (s - s.signum()) / var.sqrt()
    };
    TrendTest {
        s,
        z,
        p_value: 2.0 * numeric::norm_sf(z.abs()),
    }
}

/// Symmetric `d x d` matrix of pairwise χ(u), unit diagonal.
pub fn chi_matrix(uniform: &[Vec<f64>], u: f64) -> Result<Vec<Vec<f64>>> {
    pair_matrix(uniform, u, chi_u)
}

/// Symmetric `d x d` matrix of pairwise η(u), unit diagonal.
pub fn eta_matrix(uniform: &[Vec<f64>], u: f64) -> Result<Vec<Vec<f64>>> {
    pair_matrix(uniform, u, eta_u)
}

fn pair_matrix(uniform: &[Vec<f64>], u: f64, f: fn(&[Vec<f64>], &[usize], f64) -> Result<Estimate>) -> Result<Vec<Vec<f64>>> {
    check_level(u)?;
    let d = uniform.len();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let vals: Vec<Result<f64>> = pairs.par_iter().map(|&(i, j)| f(uniform, &[i, j], u).map(|e| e.estimate)).collect();
    let mut m = vec![vec![1.0; d]; d];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        let v = v?;
        m[i][j] = v;
        m[j][i] = v;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// 0-based variable indices; each group sorted, groups ordered by first index.
    pub groups: Vec<Vec<usize>>,
    pub c: f64,
    pub chi: Vec<Vec<f64>>,
}

/// Connected components of the graph with an edge wherever `χ_ij ≥ c`.
pub fn cluster_by_chi(chi: &[Vec<f64>], c: f64) -> Result<ClusterResult> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::Argument(format!("linking threshold must lie in [0,1], got {c}")));
    }
    let d = chi.len();
    if chi.iter().any(|r| r.len() != d) {
        return Err(Error::Argument("chi matrix is not square".into()));
    }
    for i in 0..d {
        for j in 0..i {
            if (chi[i][j] - chi[j][i]).abs() > 1e-12 {
                return Err(Error::Argument(format!("chi matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    for i in 0..d {
        for j in i + 1..d {
            if chi[i][j] >= c {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_group: Vec<Option<usize>> = vec![None; d];
    for i in 0..d {
        let r = find(&mut parent, i);
        match root_group[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_group[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    Ok(ClusterResult {
        groups,
        c,
        chi: chi.to_vec(),
    })
}

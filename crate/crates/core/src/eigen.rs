//! Exchange-rate matrix and its dominant eigenpair.
//!
//! Entry `(i, j)` holds how many units of token `j` one unit of token `i`
//! fetches, so a perfectly consistent market has `A[i][j] = e_i / e_j` and the
//! dominant eigenvector is proportional to the token values `e`, with
//! eigenvalue `n`. Comparing that eigenvector with CEX prices gives an
//! efficiency indicator to set beside STAP.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{pool_tvl, Pool, PriceBook, TokenGraph, TokenId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// Reserve ratio, fees ignored.
    #[default]
    Mid,
    /// Zero-size rate after the fee, `gamma * reserve_out / reserve_in`.
    Marginal,
}

impl fmt::Display for RateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateMode::Mid => "mid",
            RateMode::Marginal => "marginal",
        })
    }
}

impl FromStr for RateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mid" => Ok(RateMode::Mid),
            "marginal" => Ok(RateMode::Marginal),
            other => Err(Error::InvalidInput(format!("unknown rate mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    pub tokens: Vec<TokenId>,
    pub values: DMatrix<f64>,
    pub mode: RateMode,
    /// Pool ids used for each off-diagonal entry, keyed by `(i, j)`.
    /// Entries without a direct pool list the composed path.
    pub provenance: BTreeMap<String, Vec<String>>,
}

impl RateMatrix {
    /// Consistent matrix `A[i][j] = e_i / e_j`.
    pub fn consistent(tokens: Vec<TokenId>, values: &[f64]) -> Self {
        let n = values.len();
        assert_eq!(tokens.len(), n);
        Self {
            tokens,
            values: DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { values[i] / values[j] }),
            mode: RateMode::Mid,
            provenance: BTreeMap::new(),
        }
    }

    pub fn from_values(tokens: Vec<TokenId>, values: DMatrix<f64>, mode: RateMode) -> Result<Self> {
        let n = tokens.len();
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::InvalidInput("rate matrix shape does not match token count".into()));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("rate matrix entries must be positive".into()));
        }
        if (0..n).any(|i| values[(i, i)] != 1.0) {
            return Err(Error::InvalidInput("rate matrix diagonal must be one".into()));
        }
        Ok(Self {
            tokens,
            values,
            mode,
            provenance: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn pool_rate(pool: &Pool, from: &TokenId, mode: RateMode) -> f64 {
    let direction = pool.direction_selling(from).expect("pool holds the token");
    let (r_in, r_out) = pool.reserves_for(direction);
    match mode {
        RateMode::Mid => r_out / r_in,
        RateMode::Marginal => pool.gamma() * r_out / r_in,
    }
}

/// Builds the rate matrix over every token in `graph`.
///
/// A pair joined by pools uses the highest-TVL one (ties to the smaller pool
/// id). Other pairs compose rates along a fewest-hop path, choosing the path
/// whose thinnest pool has the most TVL.
pub fn build_rate_matrix(
    graph: &TokenGraph,
    prices: &PriceBook,
    date: NaiveDate,
    mode: RateMode,
) -> Result<RateMatrix> {
    let tokens: Vec<TokenId> = graph.tokens().iter().cloned().collect();
    let n = tokens.len();
    let index: BTreeMap<&TokenId, usize> = tokens.iter().enumerate().map(|(i, t)| (t, i)).collect();

    // Best direct pool per unordered pair: (tvl, pool index).
    let mut direct: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for (p, pool) in graph.pools().iter().enumerate() {
        if !pool.is_live() {
            continue;
        }
        let tvl = pool_tvl(pool, prices, date)?;
        let (i, j) = (index[&pool.token_a], index[&pool.token_b]);
        let key = (i.min(j), i.max(j));
        let replace = match direct.get(&key) {
            None => true,
            Some(&(best_tvl, best)) => {
                tvl > best_tvl || (tvl == best_tvl && pool.pool_id < graph.pools()[best].pool_id)
            }
        };
        if replace {
            direct.insert(key, (tvl, p));
        }
    }
    let mut adjacency = vec![Vec::new(); n];
    for &(i, j) in direct.keys() {
        adjacency[i].push(j);
        adjacency[j].push(i);
    }

    let mut values = DMatrix::from_element(n, n, 1.0);
    let mut provenance = BTreeMap::new();
    for i in 0..n {
        let paths = widest_shortest_paths(i, &adjacency, &direct);
        for j in 0..n {
            if i == j {
                continue;
            }
            let path = paths[j].as_ref().ok_or_else(|| Error::Disconnected {
                from: tokens[i].label().to_string(),
                to: tokens[j].label().to_string(),
            })?;
            let mut rate = 1.0;
            let mut used = Vec::with_capacity(path.len() - 1);
            for w in path.windows(2) {
                let pool = &graph.pools()[direct[&(w[0].min(w[1]), w[0].max(w[1]))].1];
                rate *= pool_rate(pool, &tokens[w[0]], mode);
                used.push(pool.pool_id.clone());
            }
            values[(i, j)] = rate;
            provenance.insert(format!("{i},{j}"), used);
        }
    }
    Ok(RateMatrix {
        tokens,
        values,
        mode,
        provenance,
    })
}

/// For each target, a fewest-hop token path from `source` maximizing the
/// smallest pool TVL along it (ties to the lexicographically smaller path).
fn widest_shortest_paths(
    source: usize,
    adjacency: &[Vec<usize>],
    direct: &BTreeMap<(usize, usize), (f64, usize)>,
) -> Vec<Option<Vec<usize>>> {
    let n = adjacency.len();
    let mut dist = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([source]);
    dist[source] = 0;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in &adjacency[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; n];
    best[source] = Some((f64::INFINITY, vec![source]));
    for &v in order.iter().skip(1) {
        for &u in &adjacency[v] {
            if dist[u] + 1 != dist[v] {
                continue;
            }
            let Some((width_u, path_u)) = best[u].clone() else { continue };
            let tvl = direct[&(u.min(v), u.max(v))].0;
            let width = width_u.min(tvl);
            let mut path = path_u;
            path.push(v);
            let better = match &best[v] {
                None => true,
                Some((w, p)) => width > *w || (width == *w && path < *p),
            };
            if better {
                best[v] = Some((width, path));
            }
        }
    }
    best.into_iter().map(|b| b.map(|(_, p)| p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub tokens: Vec<TokenId>,
    pub lambda_max: f64,
    /// Positive and scaled to unit sum.
    pub eigenvector: Vec<f64>,
    /// `lambda_max - n`.
    pub consistency_gap: f64,
    pub iterations: usize,
    /// Filled by [`EigenReport::with_price_distance`].
    pub price_distance: Option<f64>,
}

impl EigenReport {
    pub fn with_price_distance(mut self, prices: &PriceBook, date: NaiveDate) -> Result<Self> {
        self.price_distance = Some(efficiency_distance(&self, prices, date)?);
        Ok(self)
    }
}

pub const DEFAULT_EIGEN_TOL: f64 = 1e-12;
pub const DEFAULT_EIGEN_MAX_ITER: usize = 10_000;

/// Power iteration with unit-sum normalization, stopping when successive
/// iterates differ by less than `tol` in L1.
pub fn dominant_eigenpair(matrix: &RateMatrix, tol: f64, max_iter: usize) -> Result<EigenReport> {
    let n = matrix.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty rate matrix".into()));
    }
    let a = &matrix.values;
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut last_step = f64::INFINITY;
    for iteration in 1..=max_iter {
        let y = a * &x;
        let norm = y.sum();
        let next = y / norm;
        last_step = (&next - &x).abs().sum();
        x = next;
        if last_step < tol {
            // Eigenvalue from the converged direction: sum(Ax) / sum(x).
            let lambda_max = (a * &x).sum() / x.sum();
            return Ok(EigenReport {
                tokens: matrix.tokens.clone(),
                lambda_max,
                eigenvector: x.iter().copied().collect(),
                consistency_gap: lambda_max - n as f64,
                iterations: iteration,
                price_distance: None,
            });
        }
    }
    Err(Error::IterationLimit {
        iterations: max_iter,
        last_step,
    })
}

/// L1 distance between the eigenvector and the CEX price vector, both
/// scaled to unit sum. Zero means the DEX-implied values match the CEX.
pub fn efficiency_distance(report: &EigenReport, prices: &PriceBook, date: NaiveDate) -> Result<f64> {
    if report.tokens.len() != report.eigenvector.len() {
        return Err(Error::InvalidInput("token list does not match the eigenvector".into()));
    }
    let cex = report
        .tokens
        .iter()
        .map(|t| prices.get(t, date))
        .collect::<Result<Vec<_>>>()?;
    let cex_sum: f64 = cex.iter().sum();
    let dex_sum: f64 = report.eigenvector.iter().sum();
    Ok(report
        .eigenvector
        .iter()
        .zip(&cex)
        .map(|(x, p)| (x / dex_sum - p / cex_sum).abs())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 6, 21).unwrap()
    }

    fn tok(s: &str) -> TokenId {
        TokenId::new(format!("0x{s}"))
    }

    fn toks(n: usize) -> Vec<TokenId> {
        (0..n).map(|i| tok(&format!("{i:02}"))).collect()
    }

    #[test]
    fn single_pool_mid_rates() {
        let g = TokenGraph::from_pools(vec![Pool::new("p", tok("a"), tok("b"), 100.0, 200.0, 0.003).unwrap()]).unwrap();
        let mut p = PriceBook::new();
        p.insert(&tok("a"), day(), 2.0).unwrap();
        p.insert(&tok("b"), day(), 1.0).unwrap();
        let m = build_rate_matrix(&g, &p, day(), RateMode::Mid).unwrap();
        assert_eq!(m.values[(0, 1)], 2.0);
        assert_eq!(m.values[(1, 0)], 0.5);
        assert_eq!(m.values[(0, 0)], 1.0);
        assert_eq!(m.values[(1, 1)], 1.0);
        let marginal = build_rate_matrix(&g, &p, day(), RateMode::Marginal).unwrap();
        assert_relative_eq!(marginal.values[(0, 1)], 2.0 * 0.997, max_relative = 1e-15);
    }

    #[test]
    fn composed_rates_use_widest_shortest_path() {
        // a-b-d and a-c-d both reach d in two hops; the a-c-d path is thicker.
        let g = TokenGraph::from_pools(vec![
            Pool::new("ab", tok("a"), tok("b"), 10.0, 10.0, 0.0).unwrap(),
            Pool::new("bd", tok("b"), tok("d"), 10.0, 20.0, 0.0).unwrap(),
            Pool::new("ac", tok("a"), tok("c"), 1000.0, 1000.0, 0.0).unwrap(),
            Pool::new("cd", tok("c"), tok("d"), 1000.0, 3000.0, 0.0).unwrap(),
        ])
        .unwrap();
        let mut p = PriceBook::new();
        for t in ["a", "b", "c", "d"] {
            p.insert(&tok(t), day(), 1.0).unwrap();
        }
        let m = build_rate_matrix(&g, &p, day(), RateMode::Mid).unwrap();
        assert_eq!(m.values[(0, 3)], 3.0);
        assert_eq!(m.provenance["0,3"], ["ac", "cd"]);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let g = TokenGraph::from_pools(vec![
            Pool::new("ab", tok("a"), tok("b"), 1.0, 1.0, 0.0).unwrap(),
            Pool::new("cd", tok("c"), tok("d"), 1.0, 1.0, 0.0).unwrap(),
        ])
        .unwrap();
        let mut p = PriceBook::new();
        for t in ["a", "b", "c", "d"] {
            p.insert(&tok(t), day(), 1.0).unwrap();
        }
        assert!(matches!(build_rate_matrix(&g, &p, day(), RateMode::Mid), Err(Error::Disconnected { .. })));
    }

    #[test]
    fn consistent_matrix_has_eigenvalue_n() {
        let m = RateMatrix::consistent(toks(3), &[1.0, 2.0, 4.0]);
        let r = dominant_eigenpair(&m, DEFAULT_EIGEN_TOL, DEFAULT_EIGEN_MAX_ITER).unwrap();
        assert!((r.lambda_max - 3.0).abs() < 1e-10);
        for (x, e) in r.eigenvector.iter().zip([1.0, 2.0, 4.0]) {
            assert_relative_eq!(*x, e / 7.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn all_ones_matrix() {
        let m = RateMatrix::consistent(toks(4), &[1.0; 4]);
        let r = dominant_eigenpair(&m, DEFAULT_EIGEN_TOL, DEFAULT_EIGEN_MAX_ITER).unwrap();
        assert!((r.lambda_max - 4.0).abs() < 1e-12);
        assert!(r.eigenvector.iter().all(|x| (x - 0.25).abs() < 1e-12));
    }

    #[test]
    fn perturbed_matrix_exceeds_n_and_matches_dense_solver() {
        let mut m = RateMatrix::consistent(toks(3), &[1.0, 2.0, 4.0]);
        m.values[(0, 2)] *= 1.1;
        let r = dominant_eigenpair(&m, DEFAULT_EIGEN_TOL, DEFAULT_EIGEN_MAX_ITER).unwrap();
        let dense = m
            .values
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|c| c.re)
            .fold(f64::MIN, f64::max);
        assert!(r.lambda_max > 3.0);
        assert!((r.lambda_max - dense).abs() < 1e-8);
        assert!(r.consistency_gap > 0.0);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let mut m = RateMatrix::consistent(toks(3), &[1.0, 2.0, 4.0]);
        m.values[(0, 2)] *= 1.1;
        assert!(matches!(dominant_eigenpair(&m, 1e-15, 1), Err(Error::IterationLimit { .. })));
    }

    #[test]
    fn distance_zero_when_aligned_and_below_two() {
        let tokens = toks(3);
        let mut p = PriceBook::new();
        for (t, v) in tokens.iter().zip([1.0, 2.0, 4.0]) {
            p.insert(t, day(), v * 10.0).unwrap();
        }
        let m = RateMatrix::consistent(tokens.clone(), &[1.0, 2.0, 4.0]);
        let r = dominant_eigenpair(&m, DEFAULT_EIGEN_TOL, DEFAULT_EIGEN_MAX_ITER).unwrap();
        assert!(efficiency_distance(&r, &p, day()).unwrap() < 1e-12);

        let mut skewed = m.clone();
        skewed.values[(0, 2)] *= 1.1;
        let r = dominant_eigenpair(&skewed, DEFAULT_EIGEN_TOL, DEFAULT_EIGEN_MAX_ITER).unwrap();
        let d = efficiency_distance(&r, &p, day()).unwrap();
        assert!(d > 0.0 && d < 2.0);
    }
}

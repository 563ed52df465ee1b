//! Linear (non-splitting) routing.
//!
//! Two candidate generators feed the same selection rule (largest quoted
//! output, ties to the lexicographically smallest pool-id sequence):
//!
//! * [`dfs_candidates`] walks the token graph and keeps paths that never
//!   revisit a token. Parallel pools are separate branches.
//! * [`line_graph_candidates`] walks the line graph, whose nodes are pools and
//!   whose edges join pools sharing a token. Paths never revisit a pool but
//!   may pass through the same token more than once.
//!
//! Every token-simple path is also pool-simple, so with equal hop budgets the
//! line-graph candidate set contains the DFS one and its best output is never
//! lower.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::amm::{self, Phase};
use crate::error::{Error, Result};
use crate::market::{Direction, TokenGraph, TokenId};

pub const DEFAULT_MAX_HOPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RouteAlgo {
    #[serde(rename = "dfs")]
    Dfs,
    #[serde(rename = "lg")]
    LineGraph,
}

impl RouteAlgo {
    pub fn as_str(self) -> &'static str {
        match self {
            RouteAlgo::Dfs => "dfs",
            RouteAlgo::LineGraph => "lg",
        }
    }
}

impl fmt::Display for RouteAlgo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RouteAlgo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dfs" => Ok(RouteAlgo::Dfs),
            "lg" | "line-graph" => Ok(RouteAlgo::LineGraph),
            other => Err(Error::InvalidInput(format!("unknown routing algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub pool_id: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub hops: Vec<Hop>,
    pub source: TokenId,
    pub target: TokenId,
    pub amount_in: f64,
    pub amount_out: f64,
}

impl Route {
    pub fn pool_ids(&self) -> Vec<&str> {
        self.hops.iter().map(|h| h.pool_id.as_str()).collect()
    }
}

/// A candidate path as `(pool index, direction)` pairs.
pub type PoolPath = Vec<(usize, Direction)>;

/// Pool adjacency: `neighbors[i]` lists pools sharing at least one token with
/// pool `i`. Dead pools are left out entirely.
#[derive(Debug, Clone)]
pub struct LineGraph {
    pub nodes: Vec<usize>,
    pub neighbors: Vec<Vec<usize>>,
}

impl LineGraph {
    pub fn build(graph: &TokenGraph) -> Self {
        let pools = graph.pools();
        let nodes: Vec<usize> = (0..pools.len()).filter(|&i| pools[i].is_live()).collect();
        let mut neighbors = vec![Vec::new(); pools.len()];
        for (k, &i) in nodes.iter().enumerate() {
            for &j in &nodes[k + 1..] {
                let shares = pools[j].contains(&pools[i].token_a) || pools[j].contains(&pools[i].token_b);
                if shares {
                    neighbors[i].push(j);
                    neighbors[j].push(i);
                }
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Self { nodes, neighbors }
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}

fn check_query(graph: &TokenGraph, source: &TokenId, target: &TokenId, amount_in: f64) -> Result<()> {
    if source == target {
        return Err(Error::InvalidInput("source and target must differ".into()));
    }
    for token in [source, target] {
        if !graph.tokens().contains(token) {
            return Err(Error::InvalidInput(format!("token {} is not in the graph", token.address())));
        }
    }
    if !(amount_in > 0.0 && amount_in.is_finite()) {
        return Err(Error::InvalidAmount(amount_in));
    }
    Ok(())
}

/// Token-simple paths from `source` to `target` with at most `max_hops` pools.
pub fn dfs_candidates(graph: &TokenGraph, source: &TokenId, target: &TokenId, max_hops: usize) -> Vec<PoolPath> {
    fn walk(
        graph: &TokenGraph,
        target: &TokenId,
        max_hops: usize,
        visited: &mut Vec<TokenId>,
        path: &mut PoolPath,
        out: &mut Vec<PoolPath>,
    ) {
        if path.len() >= max_hops {
            return;
        }
        let here = visited.last().expect("non-empty").clone();
        for (idx, pool) in graph.pools().iter().enumerate() {
            if !pool.is_live() {
                continue;
            }
            let Some(direction) = pool.direction_selling(&here) else {
                continue;
            };
            let next = pool.tokens_for(direction).1;
            if visited.contains(next) {
                continue;
            }
            path.push((idx, direction));
            if next == target {
                out.push(path.clone());
            } else {
                visited.push(next.clone());
                walk(graph, target, max_hops, visited, path, out);
                visited.pop();
            }
            path.pop();
        }
    }

    let mut out = Vec::new();
    walk(graph, target, max_hops, &mut vec![source.clone()], &mut Vec::new(), &mut out);
    out
}

/// Pool-simple swap chains from `source` to `target` through at most
/// `max_hops` line-graph nodes.
pub fn line_graph_candidates(
    graph: &TokenGraph,
    line: &LineGraph,
    source: &TokenId,
    target: &TokenId,
    max_hops: usize,
) -> Vec<PoolPath> {
    fn walk(
        graph: &TokenGraph,
        line: &LineGraph,
        target: &TokenId,
        max_hops: usize,
        path: &mut PoolPath,
        out: &mut Vec<PoolPath>,
    ) {
        let &(last, last_dir) = path.last().expect("non-empty");
        let holding = graph.pools()[last].tokens_for(last_dir).1;
        if holding == target {
            out.push(path.clone());
        }
        if path.len() >= max_hops {
            return;
        }
        for &next in &line.neighbors[last] {
            if path.iter().any(|&(p, _)| p == next) {
                continue;
            }
            // Adjacent in L(G) is not enough: the next pool must take the
            // token we are holding.
            let Some(direction) = graph.pools()[next].direction_selling(holding) else {
                continue;
            };
            path.push((next, direction));
            walk(graph, line, target, max_hops, path, out);
            path.pop();
        }
    }

    let mut out = Vec::new();
    if max_hops == 0 {
        return out;
    }
    for &start in &line.nodes {
        let Some(direction) = graph.pools()[start].direction_selling(source) else {
            continue;
        };
        let mut path = vec![(start, direction)];
        walk(graph, line, target, max_hops, &mut path, &mut out);
    }
    out
}

/// Output of pushing `amount_in` through `path` on the current reserves.
/// Pools in a path are distinct, so sequential execution yields the same.
pub fn quote_path(graph: &TokenGraph, path: &[(usize, Direction)], amount_in: f64) -> f64 {
    path.iter().fold(amount_in, |amount, &(idx, direction)| {
        let pool = &graph.pools()[idx];
        let (r_in, r_out) = pool.reserves_for(direction);
        amm::output_amount(r_in, r_out, pool.gamma(), amount)
    })
}

fn select_best(
    graph: &TokenGraph,
    candidates: Vec<PoolPath>,
    source: &TokenId,
    target: &TokenId,
    amount_in: f64,
    max_hops: usize,
) -> Result<Route> {
    let ids = |path: &PoolPath| -> Vec<&str> {
        path.iter().map(|&(i, _)| graph.pools()[i].pool_id.as_str()).collect()
    };
    let mut best: Option<(PoolPath, f64)> = None;
    for path in candidates {
        let out = quote_path(graph, &path, amount_in);
        let better = match &best {
            None => true,
            Some((incumbent, best_out)) => match out.total_cmp(best_out) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => ids(&path) < ids(incumbent),
            },
        };
        if better {
            best = Some((path, out));
        }
    }
    let (path, amount_out) = best.ok_or_else(|| Error::NoRoute {
        from: source.label().to_string(),
        to: target.label().to_string(),
        max_hops,
    })?;
    Ok(Route {
        hops: path
            .iter()
            .map(|&(i, direction)| Hop {
                pool_id: graph.pools()[i].pool_id.clone(),
                direction,
            })
            .collect(),
        source: source.clone(),
        target: target.clone(),
        amount_in,
        amount_out,
    })
}

pub fn route_dfs(
    graph: &TokenGraph,
    source: &TokenId,
    target: &TokenId,
    amount_in: f64,
    max_hops: usize,
) -> Result<Route> {
    check_query(graph, source, target, amount_in)?;
    let candidates = dfs_candidates(graph, source, target, max_hops);
    select_best(graph, candidates, source, target, amount_in, max_hops)
}

pub fn route_line_graph(
    graph: &TokenGraph,
    source: &TokenId,
    target: &TokenId,
    amount_in: f64,
    max_hops: usize,
) -> Result<Route> {
    check_query(graph, source, target, amount_in)?;
    let line = LineGraph::build(graph);
    let candidates = line_graph_candidates(graph, &line, source, target, max_hops);
    select_best(graph, candidates, source, target, amount_in, max_hops)
}

pub fn route(
    graph: &TokenGraph,
    algo: RouteAlgo,
    source: &TokenId,
    target: &TokenId,
    amount_in: f64,
    max_hops: usize,
) -> Result<Route> {
    match algo {
        RouteAlgo::Dfs => route_dfs(graph, source, target, amount_in, max_hops),
        RouteAlgo::LineGraph => route_line_graph(graph, source, target, amount_in, max_hops),
    }
}

/// Executes every hop with fee reinjection, returning the amount actually
/// received.
pub fn execute_route(graph: &mut TokenGraph, route: &Route) -> Result<f64> {
    let mut amount = route.amount_in;
    for hop in &route.hops {
        let pool = graph
            .pool(&hop.pool_id)
            .ok_or_else(|| Error::UnknownPool(hop.pool_id.clone()))?;
        let quote = amm::quote(pool, hop.direction, amount)?;
        amm::apply_in_place(graph, &quote, Phase::Two)?;
        amount = quote.amount_out;
    }
    Ok(amount)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Pool;

    fn tok(s: &str) -> TokenId {
        TokenId::new(format!("0x{s}"))
    }

    fn pool(id: &str, a: &str, b: &str, ra: f64, rb: f64) -> Pool {
        Pool::new(id, tok(a), tok(b), ra, rb, 0.003).unwrap()
    }

    #[test]
    fn single_pool_both_algorithms_agree() {
        let g = TokenGraph::from_pools(vec![pool("p", "a", "b", 1000.0, 2000.0)]).unwrap();
        let dfs = route_dfs(&g, &tok("a"), &tok("b"), 10.0, 4).unwrap();
        let lg = route_line_graph(&g, &tok("a"), &tok("b"), 10.0, 4).unwrap();
        assert_eq!(dfs, lg);
        let q = amm::quote(&g.pools()[0], Direction::SellA, 10.0).unwrap();
        assert_eq!(dfs.amount_out, q.amount_out);
    }

    #[test]
    fn picks_the_better_parallel_pool() {
        let g = TokenGraph::from_pools(vec![
            pool("p1", "a", "b", 1000.0, 1000.0),
            pool("p2", "a", "b", 1000.0, 2000.0),
        ])
        .unwrap();
        let r = route_dfs(&g, &tok("a"), &tok("b"), 10.0, 4).unwrap();
        assert_eq!(r.pool_ids(), ["p2"]);
        let q1 = amm::quote(&g.pools()[0], Direction::SellA, 10.0).unwrap().amount_out;
        let q2 = amm::quote(&g.pools()[1], Direction::SellA, 10.0).unwrap().amount_out;
        assert!(q2 > q1);
        assert_eq!(r.amount_out, q2);
    }

    #[test]
    fn forced_two_hop_path() {
        let g = TokenGraph::from_pools(vec![pool("ab", "a", "b", 100.0, 100.0), pool("bc", "b", "c", 100.0, 100.0)]).unwrap();
        let r = route_dfs(&g, &tok("a"), &tok("c"), 1.0, 4).unwrap();
        assert_eq!(r.pool_ids(), ["ab", "bc"]);
        assert_eq!(r.hops[1].direction, Direction::SellA);
        assert!(matches!(route_dfs(&g, &tok("a"), &tok("c"), 1.0, 1), Err(Error::NoRoute { .. })));
    }

    #[test]
    fn line_graph_picks_the_better_first_pool() {
        let g = TokenGraph::from_pools(vec![
            pool("ab1", "a", "b", 1000.0, 1000.0),
            pool("ab2", "a", "b", 1000.0, 1100.0),
            pool("bc", "b", "c", 5000.0, 5000.0),
        ])
        .unwrap();
        let line = LineGraph::build(&g);
        assert_eq!(line.edge_count(), 3);
        let amount = 20.0;
        let chains = [["ab1", "bc"], ["ab2", "bc"]];
        let outs: Vec<f64> = chains
            .iter()
            .map(|c| {
                let path: PoolPath = vec![(g.pool_index(c[0]).unwrap(), Direction::SellA), (2, Direction::SellA)];
                quote_path(&g, &path, amount)
            })
            .collect();
        assert!(outs[1] > outs[0]);
        let r = route_line_graph(&g, &tok("a"), &tok("c"), amount, 4).unwrap();
        assert_eq!(r.pool_ids(), ["ab2", "bc"]);
        assert_eq!(r.amount_out, outs[1]);
    }

    #[test]
    fn line_graph_can_revisit_a_token() {
        // B is cheap in ab2 and dear in ab1, so A -> B -> A -> B loops profitably
        // before settling; DFS cannot express this path.
        let g = TokenGraph::from_pools(vec![
            pool("ab1", "a", "b", 1000.0, 1000.0),
            pool("ab2", "a", "b", 1000.0, 1500.0),
            pool("ab3", "a", "b", 1000.0, 1500.0),
        ])
        .unwrap();
        let dfs = route_dfs(&g, &tok("a"), &tok("b"), 10.0, 4).unwrap();
        let lg = route_line_graph(&g, &tok("a"), &tok("b"), 10.0, 4).unwrap();
        assert_eq!(dfs.hops.len(), 1);
        assert_eq!(lg.hops.len(), 3);
        assert!(lg.amount_out > dfs.amount_out);
    }

    #[test]
    fn ties_break_on_pool_ids() {
        let g = TokenGraph::from_pools(vec![pool("z", "a", "b", 100.0, 100.0), pool("m", "a", "b", 100.0, 100.0)]).unwrap();
        assert_eq!(route_dfs(&g, &tok("a"), &tok("b"), 1.0, 4).unwrap().pool_ids(), ["m"]);
        assert_eq!(route_line_graph(&g, &tok("a"), &tok("b"), 1.0, 4).unwrap().pool_ids(), ["m"]);
    }

    #[test]
    fn dfs_candidates_are_line_graph_candidates() {
        let g = TokenGraph::from_pools(vec![
            pool("ab1", "a", "b", 100.0, 100.0),
            pool("ab2", "a", "b", 100.0, 120.0),
            pool("bc", "b", "c", 100.0, 100.0),
            pool("ac", "a", "c", 100.0, 90.0),
            pool("cd", "c", "d", 100.0, 90.0),
        ])
        .unwrap();
        let line = LineGraph::build(&g);
        let dfs = dfs_candidates(&g, &tok("a"), &tok("d"), 4);
        let lg = line_graph_candidates(&g, &line, &tok("a"), &tok("d"), 4);
        assert!(!dfs.is_empty());
        assert!(dfs.iter().all(|p| lg.contains(p)));
        assert!(lg.len() > dfs.len());
    }

    #[test]
    fn executing_a_route_reproduces_its_quote() {
        let g = TokenGraph::from_pools(vec![
            pool("ab1", "a", "b", 1000.0, 1000.0),
            pool("ab2", "a", "b", 1000.0, 1500.0),
            pool("ab3", "a", "b", 1000.0, 1500.0),
        ])
        .unwrap();
        let r = route_line_graph(&g, &tok("a"), &tok("b"), 10.0, 4).unwrap();
        let mut snapshot = g.clone();
        let got = execute_route(&mut snapshot, &r).unwrap();
        assert!((got - r.amount_out).abs() <= 1e-12 * r.amount_out);
    }

    #[test]
    fn invalid_queries() {
        let g = TokenGraph::from_pools(vec![pool("p", "a", "b", 1.0, 1.0)]).unwrap();
        assert!(route_dfs(&g, &tok("a"), &tok("a"), 1.0, 4).is_err());
        assert!(route_dfs(&g, &tok("a"), &tok("z"), 1.0, 4).is_err());
        assert!(route_dfs(&g, &tok("a"), &tok("b"), 0.0, 4).is_err());
    }
}

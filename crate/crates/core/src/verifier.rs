//! Post-condition checks for the optimal TAP trade.
//!
//! After the optimal plan is executed (with or without fee reinjection) no
//! pool should offer a profitable zero-size trade against CEX prices, and no
//! closed loop of pools should return more of a token than it takes in.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::amm::{self, Phase};
use crate::arbitrage::{self, TradePlan};
use crate::config::Tolerances;
use crate::error::Result;
use crate::market::{Direction, PriceBook, TokenGraph, TokenId};
use crate::search::golden_section_max;

pub const DEFAULT_MAX_CYCLE_LEN: usize = 4;
/// Enumeration grows combinatorially past this length.
pub const MAX_CYCLE_LEN_CAP: usize = 5;

/// Zero-size rates of one pool bracketing the CEX rate.
///
/// All three rates are in units of B per A. The pool is free of DEX/CEX
/// arbitrage iff `forward <= cex_ratio <= backward`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraddleCheck {
    pub pool_id: String,
    /// `P_A / P_B`.
    pub cex_ratio: f64,
    /// B received per A sold at zero size, `gamma * b / a`.
    pub forward: f64,
    /// B paid per A bought at zero size, `b / (gamma * a)`.
    pub backward: f64,
    pub pass: bool,
}

impl StraddleCheck {
    /// Relative headroom of the tighter side; negative when the check fails.
    pub fn margin(&self) -> f64 {
        (1.0 - self.forward / self.cex_ratio).min(1.0 - self.cex_ratio / self.backward)
    }
}

pub fn verify_no_cex_arbitrage(
    graph: &TokenGraph,
    prices: &PriceBook,
    date: NaiveDate,
    tol: f64,
) -> Result<Vec<StraddleCheck>> {
    let mut checks = Vec::with_capacity(graph.pools().len());
    for pool in graph.pools() {
        let price_a = prices.get(&pool.token_a, date)?;
        let price_b = prices.get(&pool.token_b, date)?;
        if !pool.is_live() {
            warn!("straddle check skips dead pool {}", pool.pool_id);
            continue;
        }
        let gamma = pool.gamma();
        let cex_ratio = price_a / price_b;
        let forward = gamma * pool.reserve_b / pool.reserve_a;
        let backward = pool.reserve_b / (gamma * pool.reserve_a);
        let pass = forward <= cex_ratio * (1.0 + tol) && cex_ratio <= backward * (1.0 + tol);
        checks.push(StraddleCheck {
            pool_id: pool.pool_id.clone(),
            cex_ratio,
            forward,
            backward,
            pass,
        });
    }
    Ok(checks)
}

/// A directed closed walk over distinct pools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub hops: Vec<(String, Direction)>,
    /// Tokens visited, starting and ending at the same token.
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleProbe {
    pub pools: Vec<String>,
    pub tokens: Vec<String>,
    pub best_input: f64,
    /// Output minus input, in units of the start token.
    pub best_profit: f64,
    /// Upper end of the searched input range.
    pub input_scale: f64,
    pub evaluations: usize,
    pub pass: bool,
}

/// Enumerates directed cycles of 2..=`max_len` distinct pools whose
/// intermediate tokens are distinct. Each rotation (start token) and each
/// orientation is listed separately; parallel pools yield distinct cycles.
pub fn enumerate_cycles(graph: &TokenGraph, max_len: usize) -> Vec<Cycle> {
    let live: Vec<usize> = (0..graph.pools().len())
        .filter(|&i| graph.pools()[i].is_live())
        .collect();
    let mut out = Vec::new();
    for start in graph.tokens() {
        let mut hops = Vec::new();
        let mut tokens = vec![start.clone()];
        let mut used = BTreeSet::new();
        extend_cycle(graph, &live, start, max_len, &mut hops, &mut tokens, &mut used, &mut out);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn extend_cycle(
    graph: &TokenGraph,
    live: &[usize],
    start: &TokenId,
    max_len: usize,
    hops: &mut Vec<(usize, Direction)>,
    tokens: &mut Vec<TokenId>,
    used: &mut BTreeSet<usize>,
    out: &mut Vec<Cycle>,
) {
    if hops.len() >= max_len {
        return;
    }
    let here = tokens.last().expect("non-empty").clone();
    for &idx in live {
        if used.contains(&idx) {
            continue;
        }
        let pool = &graph.pools()[idx];
        let Some(direction) = pool.direction_selling(&here) else {
            continue;
        };
        let next = pool.tokens_for(direction).1.clone();
        if &next == start {
            if !hops.is_empty() {
                let mut closed = hops.clone();
                closed.push((idx, direction));
                let mut path = tokens.clone();
                path.push(next);
                out.push(Cycle {
                    hops: closed
                        .into_iter()
                        .map(|(i, d)| (graph.pools()[i].pool_id.clone(), d))
                        .collect(),
                    tokens: path,
                });
            }
            continue;
        }
        if tokens.contains(&next) {
            continue;
        }
        hops.push((idx, direction));
        tokens.push(next);
        used.insert(idx);
        extend_cycle(graph, live, start, max_len, hops, tokens, used, out);
        used.remove(&idx);
        tokens.pop();
        hops.pop();
    }
}

/// Amount of the start token returned after pushing `amount_in` around the
/// cycle on the given snapshot.
pub fn cycle_output(graph: &TokenGraph, cycle: &Cycle, amount_in: f64) -> f64 {
    cycle.hops.iter().fold(amount_in, |amount, (pool_id, direction)| {
        let pool = graph.pool(pool_id).expect("cycle pools belong to the graph");
        let (r_in, r_out) = pool.reserves_for(*direction);
        amm::output_amount(r_in, r_out, pool.gamma(), amount)
    })
}

/// Maximizes `output(x) - x` over `x` in `[0, 0.5 * r]`, where `r` is the
/// input-side reserve of the first hop. The composed map is concave, so
/// golden-section search finds the global maximum on the interval.
pub fn probe_cycle(graph: &TokenGraph, cycle: &Cycle, tol: f64) -> CycleProbe {
    let (first_pool, first_dir) = &cycle.hops[0];
    let pool = graph.pool(first_pool).expect("cycle pools belong to the graph");
    let input_scale = 0.5 * pool.reserves_for(*first_dir).0;
    let best = golden_section_max(|x| cycle_output(graph, cycle, x) - x, 0.0, input_scale, 1e-10);
    CycleProbe {
        pools: cycle.hops.iter().map(|(id, _)| id.clone()).collect(),
        tokens: cycle.tokens.iter().map(|t| t.label().to_string()).collect(),
        best_input: best.x,
        best_profit: best.value,
        input_scale,
        evaluations: best.evaluations,
        pass: best.value <= tol * input_scale,
    }
}

pub fn verify_no_cyclic_arbitrage(graph: &TokenGraph, max_cycle_len: usize, tol: f64) -> Vec<CycleProbe> {
    enumerate_cycles(graph, max_cycle_len)
        .iter()
        .map(|cycle| probe_cycle(graph, cycle, tol))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorollaryFlag {
    /// Received value exceeds the value given up.
    ArbitrageExists,
    /// Exactly equal values.
    EfficientBoundary,
    NoViolation,
}

/// In an arbitrage-free market a trade never returns more USD value than it
/// consumes, whatever the route.
pub fn check_corollary(value_in_usd: f64, value_out_usd: f64) -> CorollaryFlag {
    if value_out_usd > value_in_usd {
        CorollaryFlag::ArbitrageExists
    } else if value_out_usd == value_in_usd {
        CorollaryFlag::EfficientBoundary
    } else {
        CorollaryFlag::NoViolation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub date: NaiveDate,
    pub phase: Phase,
    pub tap_usd: f64,
    pub active_trades: usize,
    pub pre_straddles: Vec<StraddleCheck>,
    pub post_straddles: Vec<StraddleCheck>,
    pub post_cycles: Vec<CycleProbe>,
    pub all_pass: bool,
}

/// Solve, execute the plan up to `phase`, then run both verifiers on the
/// resulting snapshot. Pre-trade straddles are reported for context and do
/// not affect `all_pass`.
pub fn verify_pipeline(
    graph: &TokenGraph,
    prices: &PriceBook,
    date: NaiveDate,
    phase: Phase,
    max_cycle_len: usize,
    tolerances: &Tolerances,
) -> Result<(TradePlan, VerificationReport)> {
    let pre_straddles = verify_no_cex_arbitrage(graph, prices, date, tolerances.straddle)?;
    let plan = arbitrage::solve_tap_closed_form(graph, prices, date)?;
    let after = plan.execute(graph, phase)?;
    let post_straddles = verify_no_cex_arbitrage(&after, prices, date, tolerances.straddle)?;
    let post_cycles = verify_no_cyclic_arbitrage(&after, max_cycle_len, tolerances.cycle_profit);
    let all_pass = post_straddles.iter().all(|c| c.pass) && post_cycles.iter().all(|c| c.pass);
    let report = VerificationReport {
        date,
        phase,
        tap_usd: plan.tap_usd,
        active_trades: plan.active().count(),
        pre_straddles,
        post_straddles,
        post_cycles,
        all_pass,
    };
    Ok((plan, report))
}

//! Sequential trade simulation under a routing algorithm.
//!
//! Tasks are drawn once from a seeded ChaCha8 stream (`rand_chacha`, seeded
//! with `seed_from_u64`) so that every algorithm replays the same sequence.
//! CEX prices stay frozen at the snapshot date for the whole run.

use std::io::Write;

use chrono::NaiveDate;
use log::warn;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arbitrage::solve_tap_closed_form;
use crate::barrier::{solve_tap_numeric, BarrierConfig};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::market::{graph_tvl, PriceBook, TokenGraph, TokenId};
use crate::routing::{self, RouteAlgo, DEFAULT_MAX_HOPS};

pub const DEFAULT_TASKS: usize = 1000;
pub const DEFAULT_BUDGET_USD: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeTask {
    pub index: usize,
    pub source: TokenId,
    pub target: TokenId,
    pub usd_budget: f64,
    /// `usd_budget / P_source`.
    pub amount_in: f64,
}

/// Uniform draw from `0..n` using the high half of a 64x64-bit product.
fn uniform_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    ((u128::from(rng.next_u64()) * n as u128) >> 64) as usize
}

/// Draws `n` ordered pairs of distinct tokens uniformly (with replacement
/// across tasks). Tokens are indexed in address order.
pub fn generate_tasks(
    graph: &TokenGraph,
    prices: &PriceBook,
    date: NaiveDate,
    n: usize,
    seed: u64,
    usd_budget: f64,
) -> Result<Vec<TradeTask>> {
    let tokens: Vec<&TokenId> = graph.tokens().iter().collect();
    if tokens.len() < 2 {
        return Err(Error::TooFewTokens);
    }
    if !(usd_budget > 0.0 && usd_budget.is_finite()) {
        return Err(Error::InvalidAmount(usd_budget));
    }
    let token_prices = tokens
        .iter()
        .map(|t| prices.get(t, date))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(n);
    for index in 0..n {
        let source = uniform_index(&mut rng, tokens.len());
        let mut target = uniform_index(&mut rng, tokens.len() - 1);
        if target >= source {
            target += 1;
        }
        tasks.push(TradeTask {
            index,
            source: tokens[source].clone(),
            target: tokens[target].clone(),
            usd_budget,
            amount_in: usd_budget / token_prices[source],
        });
    }
    Ok(tasks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub max_hops: usize,
    /// Cross-check the closed-form TAP against the barrier solver every this
    /// many trades; zero disables it.
    pub cross_check_every: usize,
    pub barrier: BarrierConfig,
    pub tolerances: Tolerances,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            max_hops: DEFAULT_MAX_HOPS,
            cross_check_every: 100,
            barrier: BarrierConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub index: usize,
    pub algo: RouteAlgo,
    pub source: TokenId,
    pub target: TokenId,
    /// Pool ids of the executed route; empty when no route was found.
    pub route: Vec<String>,
    pub amount_in: f64,
    pub value_in_usd: f64,
    pub amount_out: f64,
    pub value_out_usd: f64,
    pub tvl_before: f64,
    pub tvl_after: f64,
    pub tap_after: f64,
    pub stap_after: f64,
}

impl TradeRecord {
    pub fn routed(&self) -> bool {
        !self.route.is_empty()
    }

    /// `value_in + tvl_before - (value_out + tvl_after)`; zero up to rounding.
    pub fn conservation_error(&self) -> f64 {
        self.value_in_usd + self.tvl_before - (self.value_out_usd + self.tvl_after)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub index: usize,
    pub closed_form_tap: f64,
    pub numeric_tap: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub algo: RouteAlgo,
    pub date: NaiveDate,
    pub seed: u64,
    pub snapshot_digest: String,
    pub initial_tvl: f64,
    pub initial_tap: f64,
    pub records: Vec<TradeRecord>,
    pub cross_checks: Vec<CrossCheck>,
}

impl SimulationTrace {
    pub fn final_tvl(&self) -> f64 {
        self.records.last().map_or(self.initial_tvl, |r| r.tvl_after)
    }
}

/// Executes `tasks` in order against a private copy of `graph`.
pub fn run_simulation(
    graph: &TokenGraph,
    prices: &PriceBook,
    date: NaiveDate,
    tasks: &[TradeTask],
    algo: RouteAlgo,
    seed: u64,
    config: &SimulationConfig,
) -> Result<SimulationTrace> {
    let mut snapshot = graph.clone();
    let initial_tvl = graph_tvl(&snapshot, prices, date)?;
    let initial_tap = solve_tap_closed_form(&snapshot, prices, date)?.tap_usd;
    let mut records = Vec::with_capacity(tasks.len());
    let mut cross_checks = Vec::new();
    let mut tvl = initial_tvl;

    for task in tasks {
        let price_in = prices.get(&task.source, date)?;
        let price_out = prices.get(&task.target, date)?;
        let tvl_before = tvl;
        let routed = routing::route(&snapshot, algo, &task.source, &task.target, task.amount_in, config.max_hops);
        let (route, amount_in, amount_out) = match routed {
            Ok(route) => {
                let received = routing::execute_route(&mut snapshot, &route)?;
                (route.pool_ids().into_iter().map(String::from).collect(), task.amount_in, received)
            }
            Err(Error::NoRoute { .. }) => {
                warn!("task {}: no route from {} to {}", task.index, task.source, task.target);
                (Vec::new(), 0.0, 0.0)
            }
            Err(e) => return Err(e),
        };
        tvl = graph_tvl(&snapshot, prices, date)?;
        let tap = solve_tap_closed_form(&snapshot, prices, date)?.tap_usd;

        let every = config.cross_check_every;
        if every > 0 && (task.index + 1) % every == 0 {
            let numeric = solve_tap_numeric(&snapshot, prices, date, &config.barrier)?.tap_usd;
            let agrees = config.tolerances.tap_agrees(tap, numeric, tvl);
            if !agrees {
                warn!("task {}: closed-form TAP {tap} vs numeric {numeric}", task.index);
            }
            cross_checks.push(CrossCheck {
                index: task.index,
                closed_form_tap: tap,
                numeric_tap: numeric,
                agrees,
            });
        }

        records.push(TradeRecord {
            index: task.index,
            algo,
            source: task.source.clone(),
            target: task.target.clone(),
            route,
            amount_in,
            value_in_usd: amount_in * price_in,
            amount_out,
            value_out_usd: amount_out * price_out,
            tvl_before,
            tvl_after: tvl,
            tap_after: tap,
            stap_after: tap / tvl,
        });
    }

    Ok(SimulationTrace {
        algo,
        date,
        seed,
        snapshot_digest: graph.digest(),
        initial_tvl,
        initial_tap,
        records,
        cross_checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub max: f64,
}

impl Quantiles {
    /// Nearest-rank quantiles; all zero for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { min: 0.0, p05: 0.0, p25: 0.0, p50: 0.0, p75: 0.0, p95: 0.0, max: 0.0 };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let rank = (q * sorted.len() as f64).ceil() as usize;
            sorted[rank.clamp(1, sorted.len()) - 1]
        };
        Self {
            min: sorted[0],
            p05: at(0.05),
            p25: at(0.25),
            p50: at(0.50),
            p75: at(0.75),
            p95: at(0.95),
            max: sorted[sorted.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algo: RouteAlgo,
    pub trades: usize,
    pub routed: usize,
    pub cumulative_value_in_usd: f64,
    pub cumulative_value_out_usd: f64,
    pub initial_tvl: f64,
    pub final_tvl: f64,
    pub tvl_delta: f64,
    pub final_tap: f64,
    pub final_stap: f64,
    /// Over routed trades only.
    pub value_out_quantiles: Quantiles,
    pub cross_check_failures: usize,
}

pub fn summarize(trace: &SimulationTrace) -> Result<Summary> {
    let last = trace.records.last().ok_or(Error::EmptyTrace)?;
    let routed: Vec<f64> = trace
        .records
        .iter()
        .filter(|r| r.routed())
        .map(|r| r.value_out_usd)
        .collect();
    Ok(Summary {
        algo: trace.algo,
        trades: trace.records.len(),
        routed: routed.len(),
        cumulative_value_in_usd: trace.records.iter().map(|r| r.value_in_usd).sum(),
        cumulative_value_out_usd: trace.records.iter().map(|r| r.value_out_usd).sum(),
        initial_tvl: trace.initial_tvl,
        final_tvl: last.tvl_after,
        tvl_delta: last.tvl_after - trace.initial_tvl,
        final_tap: last.tap_after,
        final_stap: last.stap_after,
        value_out_quantiles: Quantiles::of(&routed),
        cross_check_failures: trace.cross_checks.iter().filter(|c| !c.agrees).count(),
    })
}

pub const TRACE_COLUMNS: [&str; 11] = [
    "index",
    "algo",
    "source",
    "target",
    "amount_in",
    "value_in_usd",
    "amount_out",
    "value_out_usd",
    "tvl_after",
    "tap_after",
    "stap_after",
];

/// Writes the trace CSV. Tokens are written by address; floats use Rust's
/// shortest round-trip formatting, so output is byte-stable.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(TRACE_COLUMNS)?;
    for r in &trace.records {
        writer.write_record([
            r.index.to_string(),
            r.algo.to_string(),
            r.source.address().to_string(),
            r.target.address().to_string(),
            r.amount_in.to_string(),
            r.value_in_usd.to_string(),
            r.amount_out.to_string(),
            r.value_out_usd.to_string(),
            r.tvl_after.to_string(),
            r.tap_after.to_string(),
            r.stap_after.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

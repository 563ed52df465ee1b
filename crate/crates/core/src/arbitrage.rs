//! Total arbitrage profit (TAP) against CEX prices and its TVL-standardized
//! form (STAP).
//!
//! The TAP program has one product constraint per pool and no constraint
//! linking pools, so it splits into independent two-token problems. Each has a
//! closed-form optimum; [`crate::barrier`] solves the same program numerically
//! and serves as a cross-check.

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::amm::{self, Phase};
use crate::error::{Error, Result};
use crate::market::{graph_tvl, Direction, Pool, PriceBook, TokenGraph};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadPoolPolicy {
    /// Leave the pool out of the plan and log a warning.
    #[default]
    Skip,
    Error,
}

/// The optimal trade against one pool. `direction` is `None` when the pool
/// offers no profit at CEX prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub pool_id: String,
    pub direction: Option<Direction>,
    pub amount_in: f64,
    pub amount_out: f64,
    pub profit_usd: f64,
}

impl PlanEntry {
    pub fn idle(pool_id: &str) -> Self {
        Self {
            pool_id: pool_id.to_string(),
            direction: None,
            amount_in: 0.0,
            amount_out: 0.0,
            profit_usd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradePlan {
    pub date: NaiveDate,
    pub entries: Vec<PlanEntry>,
    pub tap_usd: f64,
    /// Pools left out because a reserve was zero.
    pub skipped: Vec<String>,
}

impl TradePlan {
    pub(crate) fn from_entries(date: NaiveDate, entries: Vec<PlanEntry>, skipped: Vec<String>) -> Self {
        let tap_usd = entries.iter().map(|e| e.profit_usd).sum();
        Self {
            date,
            entries,
            tap_usd,
            skipped,
        }
    }

    pub fn active(&self) -> impl Iterator<Item = &PlanEntry> {
        self.entries.iter().filter(|e| e.direction.is_some())
    }

    pub fn entry(&self, pool_id: &str) -> Option<&PlanEntry> {
        self.entries.iter().find(|e| e.pool_id == pool_id)
    }

    /// Executes every active entry against `graph`, leaving the phase-1 or
    /// phase-2 reserves behind.
    pub fn execute(&self, graph: &TokenGraph, phase: Phase) -> Result<TokenGraph> {
        let mut next = graph.clone();
        for entry in self.active() {
            let pool = next
                .pool(&entry.pool_id)
                .ok_or_else(|| Error::UnknownPool(entry.pool_id.clone()))?;
            let direction = entry.direction.expect("active entry has a direction");
            let quote = amm::quote(pool, direction, entry.amount_in)?;
            amm::apply_in_place(&mut next, &quote, phase)?;
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub date: NaiveDate,
    pub tap_usd: f64,
    pub tvl_usd: f64,
    pub stap: f64,
}

/// Profitability of selling A at zero size: `gamma * b * P_B / (a * P_A)`.
/// Values above one mean the pool sells B cheaper than the CEX does.
pub fn activation_ratio(pool: &Pool, direction: Direction, price_a: f64, price_b: f64) -> f64 {
    let gamma = pool.gamma();
    match direction {
        Direction::SellA => gamma * pool.reserve_b * price_b / (pool.reserve_a * price_a),
        Direction::SellB => gamma * pool.reserve_a * price_a / (pool.reserve_b * price_b),
    }
}

/// Optimal single-pool arbitrage at fixed CEX prices.
///
/// Selling A is profitable iff `r = gamma * b * P_B / (a * P_A) > 1`. The
/// optimum brings the post-trade marginal rate in line with `P_A / P_B`:
/// `gamma * in* = a * (sqrt(r) - 1)`, with profit `a * P_A * (sqrt(r) - 1)^2 / gamma`.
/// Because the two ratios multiply to `gamma^2 <= 1`, at most one side
/// activates. A ratio of exactly one yields no trade.
pub fn optimal_pool_trade(pool: &Pool, price_a: f64, price_b: f64) -> PlanEntry {
    let gamma = pool.gamma();
    for direction in [Direction::SellA, Direction::SellB] {
        let ratio = activation_ratio(pool, direction, price_a, price_b);
        if ratio <= 1.0 {
            continue;
        }
        let (reserve_in, reserve_out) = pool.reserves_for(direction);
        let price_in = match direction {
            Direction::SellA => price_a,
            Direction::SellB => price_b,
        };
        let root = ratio.sqrt();
        let amount_in = reserve_in * (root - 1.0) / gamma;
        let amount_out = amm::output_amount(reserve_in, reserve_out, gamma, amount_in);
        let profit_usd = reserve_in * price_in * (root - 1.0).powi(2) / gamma;
        return PlanEntry {
            pool_id: pool.pool_id.clone(),
            direction: Some(direction),
            amount_in,
            amount_out,
            profit_usd,
        };
    }
    PlanEntry::idle(&pool.pool_id)
}

pub fn solve_tap_closed_form(
    graph: &TokenGraph,
    prices: &PriceBook,
    date: NaiveDate,
) -> Result<TradePlan> {
    solve_tap_closed_form_with(graph, prices, date, DeadPoolPolicy::default())
}

pub fn solve_tap_closed_form_with(
    graph: &TokenGraph,
    prices: &PriceBook,
    date: NaiveDate,
    dead_pools: DeadPoolPolicy,
) -> Result<TradePlan> {
    let mut entries = Vec::with_capacity(graph.pools().len());
    let mut skipped = Vec::new();
    for pool in graph.pools() {
        let price_a = prices.get(&pool.token_a, date)?;
        let price_b = prices.get(&pool.token_b, date)?;
        if !check_live(pool, dead_pools)? {
            skipped.push(pool.pool_id.clone());
            entries.push(PlanEntry::idle(&pool.pool_id));
            continue;
        }
        entries.push(optimal_pool_trade(pool, price_a, price_b));
    }
    Ok(TradePlan::from_entries(date, entries, skipped))
}

/// `Ok(true)` for live pools, `Ok(false)` for dead pools under `Skip`.
pub(crate) fn check_live(pool: &Pool, policy: DeadPoolPolicy) -> Result<bool> {
    if pool.is_live() {
        return Ok(true);
    }
    match policy {
        DeadPoolPolicy::Skip => {
            warn!("skipping dead pool {}", pool.pool_id);
            Ok(false)
        }
        DeadPoolPolicy::Error => Err(Error::DeadPool {
            pool_id: pool.pool_id.clone(),
        }),
    }
}

pub fn stap(graph: &TokenGraph, prices: &PriceBook, date: NaiveDate) -> Result<EfficiencyReport> {
    let tvl_usd = graph_tvl(graph, prices, date)?;
    if !(tvl_usd > 0.0) {
        return Err(Error::DegenerateGraph);
    }
    let tap_usd = solve_tap_closed_form(graph, prices, date)?.tap_usd;
    Ok(EfficiencyReport {
        date,
        tap_usd,
        tvl_usd,
        stap: tap_usd / tvl_usd,
    })
}

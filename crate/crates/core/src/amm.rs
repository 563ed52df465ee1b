//! Constant-product swap math.
//!
//! A swap runs in two phases. Phase 1 trades `gamma * amount_in` against the
//! constant product and withholds `fee_rate * amount_in`. Phase 2 adds the
//! withheld fee back to the input-side reserve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Direction, Pool, TokenGraph};

/// Which reserves a quote leaves behind when executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Constant product only; the fee is still withheld.
    One,
    /// Fee reinjected into the pool.
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapQuote {
    pub pool_id: String,
    pub direction: Direction,
    pub amount_in: f64,
    pub amount_out: f64,
    pub retained_fee: f64,
    /// `(reserve_a, reserve_b)` the quote was computed against.
    pub pre_reserves: (f64, f64),
    pub post_phase1_reserves: (f64, f64),
    pub post_phase2_reserves: (f64, f64),
}

impl SwapQuote {
    pub fn post_reserves(&self, phase: Phase) -> (f64, f64) {
        match phase {
            Phase::One => self.post_phase1_reserves,
            Phase::Two => self.post_phase2_reserves,
        }
    }
}

/// Output of selling `amount_in` into a pool with the given input/output
/// reserves: `gamma * x * r_out / (r_in + gamma * x)`.
pub fn output_amount(reserve_in: f64, reserve_out: f64, gamma: f64, amount_in: f64) -> f64 {
    let effective = gamma * amount_in;
    effective * reserve_out / (reserve_in + effective)
}

pub fn quote(pool: &Pool, direction: Direction, amount_in: f64) -> Result<SwapQuote> {
    if !(amount_in >= 0.0 && amount_in.is_finite()) {
        return Err(Error::InvalidAmount(amount_in));
    }
    if !pool.is_live() {
        return Err(Error::DeadPool {
            pool_id: pool.pool_id.clone(),
        });
    }
    let gamma = pool.gamma();
    let (reserve_in, reserve_out) = pool.reserves_for(direction);
    let amount_out = output_amount(reserve_in, reserve_out, gamma, amount_in);
    let retained_fee = pool.fee_rate * amount_in;

    let phase1_in = reserve_in + gamma * amount_in;
    let phase2_in = reserve_in + amount_in;
    let out_after = reserve_out - amount_out;

    let orient = |r_in: f64, r_out: f64| match direction {
        Direction::SellA => (r_in, r_out),
        Direction::SellB => (r_out, r_in),
    };

    Ok(SwapQuote {
        pool_id: pool.pool_id.clone(),
        direction,
        amount_in,
        amount_out,
        retained_fee,
        pre_reserves: (pool.reserve_a, pool.reserve_b),
        post_phase1_reserves: orient(phase1_in, out_after),
        post_phase2_reserves: orient(phase2_in, out_after),
    })
}

/// Applies a quote with fee reinjection.
pub fn execute(graph: &TokenGraph, quote: &SwapQuote) -> Result<TokenGraph> {
    execute_phase(graph, quote, Phase::Two)
}

pub fn execute_phase(graph: &TokenGraph, quote: &SwapQuote, phase: Phase) -> Result<TokenGraph> {
    let mut next = graph.clone();
    apply_in_place(&mut next, quote, phase)?;
    Ok(next)
}

/// Single-owner variant of [`execute_phase`] used by the simulator.
pub fn apply_in_place(graph: &mut TokenGraph, quote: &SwapQuote, phase: Phase) -> Result<()> {
    let idx = graph
        .pool_index(&quote.pool_id)
        .ok_or_else(|| Error::UnknownPool(quote.pool_id.clone()))?;
    let pool = graph.pool_mut(idx);
    let (a, b) = quote.pre_reserves;
    if pool.reserve_a.to_bits() != a.to_bits() || pool.reserve_b.to_bits() != b.to_bits() {
        return Err(Error::StaleQuote {
            pool_id: quote.pool_id.clone(),
        });
    }
    let (a, b) = quote.post_reserves(phase);
    pool.reserve_a = a;
    pool.reserve_b = b;
    Ok(())
}

/// Zero-size exchange rates `(gamma * b / a, gamma * a / b)`.
pub fn marginal_rates(pool: &Pool) -> Result<(f64, f64)> {
    if !pool.is_live() {
        return Err(Error::DeadPool {
            pool_id: pool.pool_id.clone(),
        });
    }
    let gamma = pool.gamma();
    Ok((
        gamma * pool.reserve_b / pool.reserve_a,
        gamma * pool.reserve_a / pool.reserve_b,
    ))
}

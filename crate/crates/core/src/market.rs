//! Shared domain types: tokens, pools, the token multigraph and CEX prices.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A token, identified by its lowercase contract address.
///
/// Equality, ordering and hashing look at the address only; the symbol is
/// carried along for display.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenId {
    address: String,
    symbol: Option<String>,
}

impl TokenId {
    pub fn new(address: impl Into<String>) -> Self {
        let address = address.into().trim().to_lowercase();
        assert!(!address.is_empty(), "token address must be non-empty");
        Self {
            address,
            symbol: None,
        }
    }

    pub fn with_symbol(address: impl Into<String>, symbol: impl Into<String>) -> Self {
        let mut token = Self::new(address);
        token.symbol = Some(symbol.into());
        token
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    pub fn symbol(&self) -> Option<&str> {
        self.symbol.as_deref()
    }

    /// Symbol when known, address otherwise.
    pub fn label(&self) -> &str {
        self.symbol.as_deref().unwrap_or(&self.address)
    }
}

impl PartialEq for TokenId {
    fn eq(&self, other: &Self) -> bool {
        self.address == other.address
    }
}

impl Eq for TokenId {}

impl Hash for TokenId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.address.hash(state);
    }
}

impl PartialOrd for TokenId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TokenId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.address.cmp(&other.address)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Which side of a pool the trader sells into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SellA,
    SellB,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::SellA => Direction::SellB,
            Direction::SellB => Direction::SellA,
        }
    }
}

/// A constant-product liquidity pool. Reserves are in human units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub pool_id: String,
    pub token_a: TokenId,
    pub token_b: TokenId,
    pub reserve_a: f64,
    pub reserve_b: f64,
    pub fee_rate: f64,
}

impl Pool {
    pub fn new(
        pool_id: impl Into<String>,
        token_a: TokenId,
        token_b: TokenId,
        reserve_a: f64,
        reserve_b: f64,
        fee_rate: f64,
    ) -> Result<Self> {
        let pool = Self {
            pool_id: pool_id.into(),
            token_a,
            token_b,
            reserve_a,
            reserve_b,
            fee_rate,
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidPool {
            pool_id: self.pool_id.clone(),
            reason: reason.to_string(),
        };
        if self.token_a == self.token_b {
            return Err(invalid("both sides hold the same token"));
        }
        if !(self.reserve_a >= 0.0 && self.reserve_a.is_finite())
            || !(self.reserve_b >= 0.0 && self.reserve_b.is_finite())
        {
            return Err(invalid("reserves must be finite and nonnegative"));
        }
        if !(0.0..1.0).contains(&self.fee_rate) {
            return Err(invalid("fee rate must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Fraction of the input that trades at constant product, `1 - fee_rate`.
    pub fn gamma(&self) -> f64 {
        1.0 - self.fee_rate
    }

    pub fn is_live(&self) -> bool {
        self.reserve_a > 0.0 && self.reserve_b > 0.0
    }

    pub fn contains(&self, token: &TokenId) -> bool {
        &self.token_a == token || &self.token_b == token
    }

    /// The token on the other side of `token`, if `token` is in the pool.
    pub fn other(&self, token: &TokenId) -> Option<&TokenId> {
        if &self.token_a == token {
            Some(&self.token_b)
        } else if &self.token_b == token {
            Some(&self.token_a)
        } else {
            None
        }
    }

    /// Direction that sells `token` into the pool.
    pub fn direction_selling(&self, token: &TokenId) -> Option<Direction> {
        if &self.token_a == token {
            Some(Direction::SellA)
        } else if &self.token_b == token {
            Some(Direction::SellB)
        } else {
            None
        }
    }

    /// `(input token, output token)` for a direction.
    pub fn tokens_for(&self, direction: Direction) -> (&TokenId, &TokenId) {
        match direction {
            Direction::SellA => (&self.token_a, &self.token_b),
            Direction::SellB => (&self.token_b, &self.token_a),
        }
    }

    /// `(input reserve, output reserve)` for a direction.
    pub fn reserves_for(&self, direction: Direction) -> (f64, f64) {
        match direction {
            Direction::SellA => (self.reserve_a, self.reserve_b),
            Direction::SellB => (self.reserve_b, self.reserve_a),
        }
    }

    pub fn reserve_of(&self, token: &TokenId) -> Option<f64> {
        if &self.token_a == token {
            Some(self.reserve_a)
        } else if &self.token_b == token {
            Some(self.reserve_b)
        } else {
            None
        }
    }
}

/// Tokens and the pools between them. Parallel pools are allowed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenGraph {
    tokens: BTreeSet<TokenId>,
    pools: Vec<Pool>,
}

impl TokenGraph {
    /// Builds a graph whose token set is exactly the tokens touched by `pools`.
    pub fn from_pools(pools: Vec<Pool>) -> Result<Self> {
        let mut tokens = BTreeSet::new();
        for pool in &pools {
            tokens.insert(pool.token_a.clone());
            tokens.insert(pool.token_b.clone());
        }
        Self::new(tokens, pools)
    }

    pub fn new(tokens: BTreeSet<TokenId>, pools: Vec<Pool>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for pool in &pools {
            pool.validate()?;
            if !seen.insert(pool.pool_id.as_str()) {
                return Err(Error::InvalidPool {
                    pool_id: pool.pool_id.clone(),
                    reason: "duplicate pool id".into(),
                });
            }
            for token in [&pool.token_a, &pool.token_b] {
                if !tokens.contains(token) {
                    return Err(Error::InvalidPool {
                        pool_id: pool.pool_id.clone(),
                        reason: format!("token {} is not in the token set", token.address()),
                    });
                }
            }
        }
        Ok(Self { tokens, pools })
    }

    pub fn tokens(&self) -> &BTreeSet<TokenId> {
        &self.tokens
    }

    pub fn pools(&self) -> &[Pool] {
        &self.pools
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn pool(&self, pool_id: &str) -> Option<&Pool> {
        self.pools.iter().find(|p| p.pool_id == pool_id)
    }

    pub fn pool_index(&self, pool_id: &str) -> Option<usize> {
        self.pools.iter().position(|p| p.pool_id == pool_id)
    }

    /// Looks a token up by address, returning the stored id (with symbol).
    pub fn token(&self, address: &str) -> Option<&TokenId> {
        self.tokens.get(&TokenId::new(address))
    }

    pub fn degree(&self, token: &TokenId) -> usize {
        self.pools.iter().filter(|p| p.contains(token)).count()
    }

    /// Returns a copy with one pool's reserves replaced.
    pub fn with_reserves(&self, pool_id: &str, reserve_a: f64, reserve_b: f64) -> Result<Self> {
        let idx = self
            .pool_index(pool_id)
            .ok_or_else(|| Error::UnknownPool(pool_id.to_string()))?;
        let mut next = self.clone();
        next.pools[idx].reserve_a = reserve_a;
        next.pools[idx].reserve_b = reserve_b;
        next.pools[idx].validate()?;
        Ok(next)
    }

    pub(crate) fn pool_mut(&mut self, idx: usize) -> &mut Pool {
        &mut self.pools[idx]
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("graph serializes");
        let hash = Sha256::digest(&bytes);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// CEX USD prices per (token, date).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceBook {
    prices: BTreeMap<(String, NaiveDate), f64>,
}

impl PriceBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: &TokenId, date: NaiveDate, usd: f64) -> Result<()> {
        if !(usd > 0.0 && usd.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "price of {} on {date} must be positive, got {usd}",
                token.address()
            )));
        }
        self.prices.insert((token.address().to_string(), date), usd);
        Ok(())
    }

    pub fn get(&self, token: &TokenId, date: NaiveDate) -> Result<f64> {
        self.try_get(token, date).ok_or_else(|| Error::MissingPrice {
            token: token.label().to_string(),
            date,
        })
    }

    pub fn try_get(&self, token: &TokenId, date: NaiveDate) -> Option<f64> {
        self.prices
            .get(&(token.address().to_string(), date))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn dates(&self) -> BTreeSet<NaiveDate> {
        self.prices.keys().map(|(_, d)| *d).collect()
    }

    /// Every price multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            prices: self
                .prices
                .iter()
                .map(|(k, v)| (k.clone(), v * factor))
                .collect(),
        }
    }

    /// Prices for a single date only.
    pub fn restricted_to(&self, date: NaiveDate) -> Self {
        Self {
            prices: self
                .prices
                .iter()
                .filter(|((_, d), _)| *d == date)
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }
}

/// An amount of a token together with its USD value at a date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Valuation {
    pub amount: f64,
    pub token: TokenId,
    pub usd_value: f64,
}

impl Valuation {
    pub fn at(amount: f64, token: &TokenId, prices: &PriceBook, date: NaiveDate) -> Result<Self> {
        let price = prices.get(token, date)?;
        Ok(Self {
            amount,
            token: token.clone(),
            usd_value: amount * price,
        })
    }
}

/// `reserve_a * P_A + reserve_b * P_B`.
pub fn pool_tvl(pool: &Pool, prices: &PriceBook, date: NaiveDate) -> Result<f64> {
    let price_a = prices.get(&pool.token_a, date)?;
    let price_b = prices.get(&pool.token_b, date)?;
    Ok(pool.reserve_a * price_a + pool.reserve_b * price_b)
}

pub fn graph_tvl(graph: &TokenGraph, prices: &PriceBook, date: NaiveDate) -> Result<f64> {
    graph
        .pools()
        .iter()
        .map(|p| pool_tvl(p, prices, date))
        .sum()
}

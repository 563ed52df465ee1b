//! Market-efficiency toolkit for constant-product DEX token graphs.
//!
//! Computes total arbitrage profit (TAP) against CEX prices and its
//! TVL-standardized form (STAP), checks that no DEX/CEX or cyclic arbitrage
//! survives the optimal trade, and simulates how linear routing algorithms
//! move trader value and pool TVL.

pub mod amm;
pub mod arbitrage;
pub mod barrier;
pub mod config;
pub mod eigen;
pub mod error;
pub mod ingest;
pub mod market;
pub mod routing;
pub mod search;
pub mod simulator;
pub mod verifier;

pub use error::{Error, Result};
pub use market::{graph_tvl, pool_tvl, Direction, Pool, PriceBook, TokenGraph, TokenId, Valuation};

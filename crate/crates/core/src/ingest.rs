//! Local-file ingestion and token-graph filtering.
//!
//! Three inputs describe a market:
//!
//! * pools CSV: `pool_address,token0_address,token1_address,reserve0_raw,reserve1_raw,decimals0,decimals1,date`
//! * prices CSV: `token_address,date,usd_price`
//! * mapping JSON: `{ "<token_address>": {"id": "<provider_id>", "symbol": "<sym>"} }`
//!
//! Addresses are lowercased on read. Raw reserves are integers and are
//! divided by `10^decimals` here, so everything downstream works in token
//! units.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{Days, NaiveDate};
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{pool_tvl, Pool, PriceBook, TokenGraph, TokenId};

pub const MAX_DECIMALS: u8 = 36;
pub const DEFAULT_FEE_RATE: f64 = 0.003;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub pool_address: String,
    pub token0: TokenId,
    pub token1: TokenId,
    pub reserve0_raw: u128,
    pub reserve1_raw: u128,
    pub decimals0: u8,
    pub decimals1: u8,
    pub date: NaiveDate,
}

impl PoolRecord {
    pub fn reserve0(&self) -> f64 {
        scale_down(self.reserve0_raw, self.decimals0)
    }

    pub fn reserve1(&self) -> f64 {
        scale_down(self.reserve1_raw, self.decimals1)
    }

    pub fn to_pool(&self, fee_rate: f64) -> Result<Pool> {
        Pool::new(
            self.pool_address.clone(),
            self.token0.clone(),
            self.token1.clone(),
            self.reserve0(),
            self.reserve1(),
            fee_rate,
        )
    }
}

fn scale_down(raw: u128, decimals: u8) -> f64 {
    // Parsing "1eN" gives a correctly rounded power of ten.
    let divisor: f64 = format!("1e{decimals}").parse().expect("valid float literal");
    raw as f64 / divisor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord {
    pub token_address: String,
    pub provider_id: String,
    pub date: NaiveDate,
    pub usd_price: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub id: String,
    pub symbol: String,
}

pub type TokenMapping = BTreeMap<String, MappingEntry>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_pool_tvl_usd: f64,
    pub target_max_pool_count: usize,
    pub min_degree: usize,
    pub fee_rate: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_pool_tvl_usd: 10_000.0,
            target_max_pool_count: 18,
            min_degree: 2,
            fee_rate: DEFAULT_FEE_RATE,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_pool_tvl_usd > 0.0) || self.target_max_pool_count == 0 || self.min_degree == 0 {
            return Err(Error::InvalidInput("filter settings must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.fee_rate) {
            return Err(Error::InvalidInput(format!("fee rate {} outside [0, 1)", self.fee_rate)));
        }
        Ok(())
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_date(path: &Path, line: u64, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| parse_error(path, line, format!("bad date {s:?}: {e}")))
}

#[derive(Deserialize)]
struct RawPoolRow {
    pool_address: String,
    token0_address: String,
    token1_address: String,
    reserve0_raw: String,
    reserve1_raw: String,
    decimals0: String,
    decimals1: String,
    date: String,
}

#[derive(Deserialize)]
struct RawPriceRow {
    token_address: String,
    date: String,
    usd_price: String,
}

fn csv_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(u64, T)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_error(path, line, e.to_string()))?;
        rows.push((line, row));
    }
    Ok(rows)
}

fn parse_decimals(path: &Path, line: u64, s: &str) -> Result<u8> {
    let d: u8 = s.parse().map_err(|e| parse_error(path, line, format!("bad decimals {s:?}: {e}")))?;
    if d > MAX_DECIMALS {
        return Err(parse_error(path, line, format!("decimals {d} above {MAX_DECIMALS}")));
    }
    Ok(d)
}

fn parse_raw(path: &Path, line: u64, s: &str) -> Result<u128> {
    s.parse()
        .map_err(|e| parse_error(path, line, format!("bad raw reserve {s:?}: {e}")))
}

/// Reads every row of a pools CSV. Duplicate `(pool, date)` rows keep the
/// last one; the second value counts how many were overwritten.
pub fn read_pool_records(path: &Path) -> Result<(Vec<PoolRecord>, usize)> {
    let mut by_key: BTreeMap<(String, NaiveDate), PoolRecord> = BTreeMap::new();
    let mut duplicates = 0;
    for (line, row) in csv_rows::<RawPoolRow>(path)? {
        let record = PoolRecord {
            pool_address: row.pool_address.to_lowercase(),
            token0: TokenId::new(row.token0_address),
            token1: TokenId::new(row.token1_address),
            reserve0_raw: parse_raw(path, line, &row.reserve0_raw)?,
            reserve1_raw: parse_raw(path, line, &row.reserve1_raw)?,
            decimals0: parse_decimals(path, line, &row.decimals0)?,
            decimals1: parse_decimals(path, line, &row.decimals1)?,
            date: parse_date(path, line, &row.date)?,
        };
        if record.token0 == record.token1 {
            return Err(parse_error(path, line, "pool lists the same token twice"));
        }
        let key = (record.pool_address.clone(), record.date);
        if by_key.insert(key, record).is_some() {
            warn!("{}:{line}: duplicate pool reading, keeping the later row", path.display());
            duplicates += 1;
        }
    }
    Ok((by_key.into_values().collect(), duplicates))
}

pub fn read_mapping(path: &Path) -> Result<TokenMapping> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let raw: BTreeMap<String, MappingEntry> = serde_json::from_str(&text)?;
    Ok(raw.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect())
}

/// Reads a prices CSV, keeping rows for mapped tokens only.
pub fn read_price_records(path: &Path, mapping: &TokenMapping) -> Result<Vec<PriceRecord>> {
    let mut seen: BTreeMap<(String, NaiveDate), usize> = BTreeMap::new();
    let mut out: Vec<PriceRecord> = Vec::new();
    for (line, row) in csv_rows::<RawPriceRow>(path)? {
        let token_address = row.token_address.to_lowercase();
        let date = parse_date(path, line, &row.date)?;
        let usd_price: f64 = row
            .usd_price
            .parse()
            .map_err(|e| parse_error(path, line, format!("bad price {:?}: {e}", row.usd_price)))?;
        if !(usd_price > 0.0 && usd_price.is_finite()) {
            return Err(parse_error(path, line, format!("price must be positive, got {usd_price}")));
        }
        let Some(entry) = mapping.get(&token_address) else {
            debug!("{}:{line}: unmapped token {token_address}", path.display());
            continue;
        };
        let record = PriceRecord {
            token_address: token_address.clone(),
            provider_id: entry.id.clone(),
            date,
            usd_price,
        };
        match seen.get(&(token_address.clone(), date)) {
            Some(&i) => {
                warn!("{}:{line}: duplicate price for {token_address} on {date}, keeping the later row", path.display());
                out[i] = record;
            }
            None => {
                seen.insert((token_address, date), out.len());
                out.push(record);
            }
        }
    }
    Ok(out)
}

/// All readings from one set of input files.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: BTreeMap<NaiveDate, Vec<PoolRecord>>,
    pub prices: PriceBook,
    /// Pool rows dropped because a token has no mapping.
    pub dropped: usize,
    /// Pool rows overwritten by a later duplicate.
    pub duplicates: usize,
}

impl Dataset {
    pub fn load(pools: &Path, prices: &Path, mapping: &Path) -> Result<Self> {
        let mapping = read_mapping(mapping)?;
        let (records, duplicates) = read_pool_records(pools)?;
        let price_rows = read_price_records(prices, &mapping)?;

        let symbolize = |t: &TokenId| match mapping.get(t.address()) {
            Some(e) => TokenId::with_symbol(t.address(), e.symbol.clone()),
            None => t.clone(),
        };
        let mut by_date: BTreeMap<NaiveDate, Vec<PoolRecord>> = BTreeMap::new();
        let mut dropped = 0;
        for mut r in records {
            if !mapping.contains_key(r.token0.address()) || !mapping.contains_key(r.token1.address()) {
                dropped += 1;
                continue;
            }
            r.token0 = symbolize(&r.token0);
            r.token1 = symbolize(&r.token1);
            by_date.entry(r.date).or_default().push(r);
        }
        if dropped > 0 {
            info!("dropped {dropped} pool rows with unmapped tokens");
        }

        let mut book = PriceBook::new();
        for p in &price_rows {
            book.insert(&TokenId::new(p.token_address.clone()), p.date, p.usd_price)?;
        }
        Ok(Self {
            records: by_date,
            prices: book,
            dropped,
            duplicates,
        })
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.records.keys().copied()
    }

    pub fn records_on(&self, date: NaiveDate) -> &[PoolRecord] {
        self.records.get(&date).map_or(&[], Vec::as_slice)
    }

    pub fn snapshot(&self, date: NaiveDate) -> Result<Snapshot> {
        let records = self.records_on(date).to_vec();
        if records.is_empty() {
            return Err(Error::EmptySnapshot(format!("no pool readings on {date}")));
        }
        Ok(Snapshot {
            date,
            records,
            prices: self.prices.restricted_to(date),
            dropped: self.dropped,
            duplicates: self.duplicates,
        })
    }

    /// Filters the first date, then replays only reserve updates for the
    /// retained pools over every later date in `[start, end]`. A pool with no
    /// reading on some date keeps its previous reserves.
    pub fn series(&self, start: NaiveDate, end: NaiveDate, config: &FilterConfig) -> Result<Vec<(NaiveDate, TokenGraph)>> {
        if end < start {
            return Err(Error::InvalidInput(format!("empty date range {start}..{end}")));
        }
        let base = build_filtered_graph(self.records_on(start), &self.prices, start, config)
            .map_err(|e| match e {
                Error::EmptySnapshot(msg) => Error::EmptySnapshot(format!("{start}: {msg}")),
                other => other,
            })?;
        let mut out = vec![(start, base.clone())];
        let mut current = base;
        let mut date = start;
        while let Some(next) = date.checked_add_days(Days::new(1)).filter(|d| *d <= end) {
            date = next;
            let readings: BTreeMap<&str, &PoolRecord> =
                self.records_on(date).iter().map(|r| (r.pool_address.as_str(), r)).collect();
            let ids: Vec<String> = current.pools().iter().map(|p| p.pool_id.clone()).collect();
            for id in ids {
                match readings.get(id.as_str()) {
                    Some(r) => {
                        let pool = current.pool(&id).expect("pool retained");
                        if r.token0 != pool.token_a || r.token1 != pool.token_b {
                            return Err(Error::InvalidPool {
                                pool_id: id,
                                reason: format!("token pair changed on {date}"),
                            });
                        }
                        current = current.with_reserves(&id, r.reserve0(), r.reserve1())?;
                    }
                    None => warn!("{date}: no reading for pool {id}, carrying reserves forward"),
                }
            }
            out.push((date, current.clone()));
        }
        Ok(out)
    }
}

/// Pool readings and prices for one date.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub date: NaiveDate,
    pub records: Vec<PoolRecord>,
    pub prices: PriceBook,
    pub dropped: usize,
    pub duplicates: usize,
}

pub fn load_snapshot(pools: &Path, prices: &Path, mapping: &Path, date: NaiveDate) -> Result<Snapshot> {
    Dataset::load(pools, prices, mapping)?.snapshot(date)
}

pub fn snapshot_series(
    pools: &Path,
    prices: &Path,
    mapping: &Path,
    start: NaiveDate,
    end: NaiveDate,
    config: &FilterConfig,
) -> Result<Vec<(NaiveDate, TokenGraph)>> {
    Dataset::load(pools, prices, mapping)?.series(start, end, config)
}

struct Candidate {
    pool: Pool,
    tvl: f64,
}

fn prune_low_degree(pools: &mut Vec<Candidate>, min_degree: usize) {
    loop {
        let mut degree: BTreeMap<&TokenId, usize> = BTreeMap::new();
        for c in pools.iter() {
            *degree.entry(&c.pool.token_a).or_default() += 1;
            *degree.entry(&c.pool.token_b).or_default() += 1;
        }
        let weak: BTreeSet<TokenId> = degree
            .into_iter()
            .filter(|(_, d)| *d < min_degree)
            .map(|(t, _)| t.clone())
            .collect();
        if weak.is_empty() {
            return;
        }
        pools.retain(|c| !weak.contains(&c.pool.token_a) && !weak.contains(&c.pool.token_b));
    }
}

/// Applies the filtering pipeline in order:
///
/// 1. drop pools below `min_pool_tvl_usd`;
/// 2. drop pools with an unpriced token;
/// 3. repeatedly remove tokens with fewer than `min_degree` pools;
/// 4. while more than `target_max_pool_count` pools remain, remove the
///    lowest-TVL pool (ties to the smaller pool id) and redo step 3.
///
/// Degree counts parallel pools separately. Surviving pools are ordered by id.
pub fn build_filtered_graph(
    records: &[PoolRecord],
    prices: &PriceBook,
    date: NaiveDate,
    config: &FilterConfig,
) -> Result<TokenGraph> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::EmptySnapshot(format!("no pool readings on {date}")));
    }
    let mut priced = Vec::new();
    let mut unpriced = Vec::new();
    for r in records {
        let pool = r.to_pool(config.fee_rate)?;
        match pool_tvl(&pool, prices, date) {
            Ok(tvl) => priced.push(Candidate { pool, tvl }),
            Err(Error::MissingPrice { .. }) => unpriced.push(pool.pool_id),
            Err(e) => return Err(e),
        }
    }
    let before = priced.len();
    priced.retain(|c| c.tvl >= config.min_pool_tvl_usd);
    debug!(
        "{date}: {} pools below the TVL floor, {} without prices",
        before - priced.len(),
        unpriced.len()
    );

    let mut pools = priced;
    prune_low_degree(&mut pools, config.min_degree);
    while pools.len() > config.target_max_pool_count {
        let weakest = pools
            .iter()
            .enumerate()
            .min_by(|(_, x), (_, y)| x.tvl.total_cmp(&y.tvl).then_with(|| x.pool.pool_id.cmp(&y.pool.pool_id)))
            .map(|(i, _)| i)
            .expect("nonempty");
        let removed = pools.remove(weakest);
        debug!("{date}: removed pool {} (TVL {})", removed.pool.pool_id, removed.tvl);
        prune_low_degree(&mut pools, config.min_degree);
    }
    if pools.is_empty() {
        return Err(Error::EmptySnapshot(format!("no pools survive filtering on {date}")));
    }
    let mut pools: Vec<Pool> = pools.into_iter().map(|c| c.pool).collect();
    pools.sort_by(|a, b| a.pool_id.cmp(&b.pool_id));
    info!("{date}: filtered graph has {} pools", pools.len());
    TokenGraph::from_pools(pools)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 6, d).unwrap()
    }

    fn rec(id: &str, a: &str, b: &str, ra: f64, rb: f64) -> PoolRecord {
        PoolRecord {
            pool_address: id.into(),
            token0: TokenId::new(a),
            token1: TokenId::new(b),
            reserve0_raw: ra as u128,
            reserve1_raw: rb as u128,
            decimals0: 0,
            decimals1: 0,
            date: day(21),
        }
    }

    fn unit_prices(tokens: &[&str]) -> PriceBook {
        let mut p = PriceBook::new();
        for t in tokens {
            p.insert(&TokenId::new(*t), day(21), 1.0).unwrap();
        }
        p
    }

    #[test]
    fn decimal_adjustment() {
        assert_eq!(scale_down(1_000_000_000_000_000_000, 18), 1.0);
        assert_eq!(scale_down(2_500_000, 6), 2.5);
        assert_eq!(scale_down(7, 0), 7.0);
    }

    #[test]
    fn triangle_survives_unchanged() {
        let records = vec![
            rec("p1", "a", "b", 1e5, 1e5),
            rec("p2", "b", "c", 1e5, 1e5),
            rec("p3", "c", "a", 1e5, 1e5),
        ];
        let g = build_filtered_graph(&records, &unit_prices(&["a", "b", "c"]), day(21), &FilterConfig::default()).unwrap();
        assert_eq!(g.pools().len(), 3);
    }

    #[test]
    fn pendant_token_is_pruned() {
        let records = vec![
            rec("p1", "a", "b", 1e5, 1e5),
            rec("p2", "b", "c", 1e5, 1e5),
            rec("p3", "c", "a", 1e5, 1e5),
            rec("p4", "c", "d", 1e5, 1e5),
        ];
        let g = build_filtered_graph(&records, &unit_prices(&["a", "b", "c", "d"]), day(21), &FilterConfig::default())
            .unwrap();
        assert!(g.pool("p4").is_none());
        assert!(g.token("d").is_none());
    }

    #[test]
    fn tvl_and_price_filters() {
        let records = vec![
            rec("p1", "a", "b", 1e5, 1e5),
            rec("p2", "b", "c", 1e5, 1e5),
            rec("p3", "c", "a", 1e5, 1e5),
            rec("thin", "a", "b", 10.0, 10.0),
            rec("unpriced", "a", "x", 1e5, 1e5),
        ];
        let g = build_filtered_graph(&records, &unit_prices(&["a", "b", "c"]), day(21), &FilterConfig::default()).unwrap();
        assert_eq!(g.pools().iter().map(|p| p.pool_id.as_str()).collect::<Vec<_>>(), ["p1", "p2", "p3"]);
    }

    #[test]
    fn lowest_tvl_removed_with_id_tiebreak() {
        // Two triangles sharing token a; capping at three pools removes the
        // cheaper triangle. Its pools tie on TVL, so "q1" goes first and the
        // rest collapse through degree pruning.
        let records = vec![
            rec("p1", "a", "b", 1e6, 1e6),
            rec("p2", "b", "c", 1e6, 1e6),
            rec("p3", "c", "a", 1e6, 1e6),
            rec("q2", "a", "d", 1e5, 1e5),
            rec("q1", "d", "e", 1e5, 1e5),
            rec("q3", "e", "a", 1e5, 1e5),
        ];
        let config = FilterConfig {
            target_max_pool_count: 3,
            ..FilterConfig::default()
        };
        let g = build_filtered_graph(&records, &unit_prices(&["a", "b", "c", "d", "e"]), day(21), &config).unwrap();
        assert_eq!(g.pools().len(), 3);
        assert!(g.pool("p1").is_some());
    }

    #[test]
    fn everything_filtered_is_empty_snapshot() {
        let records = vec![rec("p1", "a", "b", 1e5, 1e5)];
        let err = build_filtered_graph(&records, &unit_prices(&["a", "b"]), day(21), &FilterConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptySnapshot(_)));
    }

    #[test]
    fn malformed_row_reports_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "pool_address,token0_address,token1_address,reserve0_raw,reserve1_raw,decimals0,decimals1,date").unwrap();
        writeln!(f, "0xp,0xa,0xb,100,200,18,6,2024-06-21").unwrap();
        writeln!(f, "0xq,0xa,0xb,abc,200,18,6,2024-06-21").unwrap();
        match read_pool_records(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decimals_above_limit_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "pool_address,token0_address,token1_address,reserve0_raw,reserve1_raw,decimals0,decimals1,date").unwrap();
        writeln!(f, "0xp,0xa,0xb,100,200,37,6,2024-06-21").unwrap();
        assert!(matches!(read_pool_records(f.path()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn addresses_are_lowercased_and_duplicates_keep_last() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "pool_address,token0_address,token1_address,reserve0_raw,reserve1_raw,decimals0,decimals1,date").unwrap();
        writeln!(f, "0xPP,0xAA,0xBB,100,200,0,0,2024-06-21").unwrap();
        writeln!(f, "0xpp,0xaa,0xbb,300,400,0,0,2024-06-21").unwrap();
        let (records, dups) = read_pool_records(f.path()).unwrap();
        assert_eq!(dups, 1);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].pool_address, "0xpp");
        assert_eq!(records[0].token0.address(), "0xaa");
        assert_eq!(records[0].reserve0(), 300.0);
    }
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use stap_core::amm::Phase;
use stap_core::arbitrage::{stap, TradePlan};
use stap_core::eigen::{build_rate_matrix, dominant_eigenpair, EigenReport, RateMode, DEFAULT_EIGEN_MAX_ITER, DEFAULT_EIGEN_TOL};
use stap_core::ingest::{build_filtered_graph, Dataset};
use stap_core::routing::{self, Route, RouteAlgo};
use stap_core::simulator::{generate_tasks, run_simulation, summarize, write_trace_csv, Summary, DEFAULT_BUDGET_USD, DEFAULT_TASKS};
use stap_core::verifier::{verify_pipeline, VerificationReport, MAX_CYCLE_LEN_CAP};
use stap_core::{graph_tvl, pool_tvl, PriceBook, TokenGraph, TokenId};

mod config;

use config::FileConfig;

const DEFAULT_SEED: u64 = 2024;
/// Exit status when `verify` runs cleanly but a check fails.
const VERIFY_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "stap", version, about = "Standardized total arbitrage profit toolkit for constant-product DEXes")]
struct Cli {
    /// Log filter, e.g. `info` or `stap_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    pools: Option<PathBuf>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// TOML settings file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load the inputs and report the filtered graph for one date.
    IngestCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        date: NaiveDate,
    },
    /// Daily TVL, TAP and STAP over a date range on a fixed topology.
    StapSeries {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        start: NaiveDate,
        /// Defaults to the start date.
        #[arg(long)]
        end: Option<NaiveDate>,
    },
    /// Replay random user trades and record TVL and STAP after each one.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshot_date: NaiveDate,
        #[arg(long, default_value_t = DEFAULT_TASKS)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_BUDGET_USD)]
        budget_usd: f64,
        #[arg(long, value_enum, default_value_t = AlgoChoice::Both)]
        algo: AlgoChoice,
        #[arg(long)]
        max_hops: Option<usize>,
    },
    /// Best single route for one swap.
    Route {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        date: NaiveDate,
        /// Token address or symbol.
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
        /// Input in token units.
        #[arg(long, conflicts_with = "usd", required_unless_present = "usd")]
        amount: Option<f64>,
        /// Input sized by USD value instead.
        #[arg(long)]
        usd: Option<f64>,
        #[arg(long, value_enum, default_value_t = AlgoArg::Lg)]
        algo: AlgoArg,
        #[arg(long)]
        max_hops: Option<usize>,
    },
    /// Execute the optimal arbitrage and check that no arbitrage remains.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        date: NaiveDate,
        /// 1 executes the trade without fee reinjection, 2 with it.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        phase: u8,
        #[arg(long)]
        max_cycle_len: Option<usize>,
    },
    /// Dominant eigenpair of the exchange-rate matrix.
    Eigen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        date: NaiveDate,
        #[arg(long, value_enum, default_value_t = ModeArg::Mid)]
        rate_mode: ModeArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Dfs,
    Lg,
}

impl From<AlgoArg> for RouteAlgo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Dfs => RouteAlgo::Dfs,
            AlgoArg::Lg => RouteAlgo::LineGraph,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoChoice {
    Dfs,
    Lg,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Mid,
    Marginal,
}

impl From<ModeArg> for RateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Mid => RateMode::Mid,
            ModeArg::Marginal => RateMode::Marginal,
        }
    }
}

/// Inputs resolved from flags and the optional config file.
struct Inputs {
    settings: FileConfig,
    pools: PathBuf,
    prices: PathBuf,
    mapping: PathBuf,
    out: Option<PathBuf>,
    seed: u64,
}

impl Inputs {
    fn resolve(common: &Common) -> Result<Self> {
        let settings = FileConfig::load(common.config.as_deref())?;
        let pick = |flag: &Option<PathBuf>, file: &Option<PathBuf>, name: &str| {
            flag.clone()
                .or_else(|| file.clone())
                .ok_or_else(|| anyhow!("--{name} is required (or set `{name}` in the config file)"))
        };
        Ok(Self {
            pools: pick(&common.pools, &settings.pools, "pools")?,
            prices: pick(&common.prices, &settings.prices, "prices")?,
            mapping: pick(&common.mapping, &settings.mapping, "mapping")?,
            out: common.out.clone(),
            seed: common.seed.or(settings.seed).unwrap_or(DEFAULT_SEED),
            settings,
        })
    }

    fn dataset(&self) -> Result<Dataset> {
        Dataset::load(&self.pools, &self.prices, &self.mapping).context("loading input files")
    }

    fn graph(&self, data: &Dataset, date: NaiveDate) -> Result<TokenGraph> {
        build_filtered_graph(data.records_on(date), &data.prices, date, &self.settings.filter)
            .with_context(|| format!("building the filtered graph for {date}"))
    }
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut w = writer(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn find_token<'g>(graph: &'g TokenGraph, key: &str) -> Result<&'g TokenId> {
    let key = key.to_lowercase();
    graph
        .tokens()
        .iter()
        .find(|t| t.address() == key || t.symbol().is_some_and(|s| s.to_lowercase() == key))
        .ok_or_else(|| anyhow!("token {key:?} is not in the filtered graph"))
}

#[derive(Serialize)]
struct TokenRow<'a> {
    address: &'a str,
    symbol: Option<&'a str>,
    degree: usize,
    usd_price: f64,
}

#[derive(Serialize)]
struct PoolRow<'a> {
    pool_id: &'a str,
    token_a: &'a str,
    token_b: &'a str,
    reserve_a: f64,
    reserve_b: f64,
    tvl_usd: f64,
}

#[derive(Serialize)]
struct IngestReport<'a> {
    date: NaiveDate,
    dates_available: Vec<NaiveDate>,
    rows_on_date: usize,
    dropped_unmapped: usize,
    duplicates: usize,
    tvl_usd: f64,
    tokens: Vec<TokenRow<'a>>,
    pools: Vec<PoolRow<'a>>,
}

fn ingest_check(common: &Common, date: NaiveDate) -> Result<()> {
    let ctx = Inputs::resolve(common)?;
    let data = ctx.dataset()?;
    let graph = ctx.graph(&data, date)?;
    let prices = &data.prices;
    let tokens = graph
        .tokens()
        .iter()
        .map(|t| {
            Ok(TokenRow {
                address: t.address(),
                symbol: t.symbol(),
                degree: graph.degree(t),
                usd_price: prices.get(t, date)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pools = graph
        .pools()
        .iter()
        .map(|p| {
            Ok(PoolRow {
                pool_id: &p.pool_id,
                token_a: p.token_a.label(),
                token_b: p.token_b.label(),
                reserve_a: p.reserve_a,
                reserve_b: p.reserve_b,
                tvl_usd: pool_tvl(p, prices, date)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = IngestReport {
        date,
        dates_available: data.dates().collect(),
        rows_on_date: data.records_on(date).len(),
        dropped_unmapped: data.dropped,
        duplicates: data.duplicates,
        tvl_usd: graph_tvl(&graph, prices, date)?,
        tokens,
        pools,
    };
    write_json(ctx.out.as_deref(), &report)
}

fn stap_series(common: &Common, start: NaiveDate, end: Option<NaiveDate>) -> Result<()> {
    let ctx = Inputs::resolve(common)?;
    let data = ctx.dataset()?;
    let end = end.unwrap_or(start);
    let series = data
        .series(start, end, &ctx.settings.filter)
        .with_context(|| format!("building snapshots from {start} to {end}"))?;
    let mut w = writer(ctx.out.as_deref())?;
    writeln!(w, "date,tvl_usd,tap_usd,stap")?;
    for (date, graph) in &series {
        let r = stap(graph, &data.prices, *date).with_context(|| format!("computing STAP for {date}"))?;
        writeln!(w, "{},{},{},{}", date, r.tvl_usd, r.tap_usd, r.stap)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SimulationSummary {
    snapshot_date: NaiveDate,
    seed: u64,
    n: usize,
    budget_usd: f64,
    snapshot_digest: String,
    runs: Vec<RunSummary>,
}

#[derive(Serialize)]
struct RunSummary {
    trace: PathBuf,
    #[serde(flatten)]
    summary: Summary,
}

fn algo_trace_path(out: &Path, algo: RouteAlgo) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let ext = out.extension().map_or("csv".into(), |e| e.to_string_lossy());
    out.with_file_name(format!("{stem}.{}.{ext}", algo.as_str()))
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.summary.json"))
}

fn simulate(
    common: &Common,
    date: NaiveDate,
    n: usize,
    budget_usd: f64,
    choice: AlgoChoice,
    max_hops: Option<usize>,
) -> Result<()> {
    let ctx = Inputs::resolve(common)?;
    let out = ctx.out.clone().ok_or_else(|| anyhow!("simulate needs --out for the trace CSV"))?;
    let data = ctx.dataset()?;
    let graph = ctx.graph(&data, date)?;
    let prices: PriceBook = data.prices.restricted_to(date);
    let mut config = ctx.settings.simulation;
    if let Some(h) = max_hops {
        config.max_hops = h;
    }
    let tasks = generate_tasks(&graph, &prices, date, n, ctx.seed, budget_usd)?;

    let algos: Vec<RouteAlgo> = match choice {
        AlgoChoice::Dfs => vec![RouteAlgo::Dfs],
        AlgoChoice::Lg => vec![RouteAlgo::LineGraph],
        AlgoChoice::Both => vec![RouteAlgo::Dfs, RouteAlgo::LineGraph],
    };
    // Each run works on its own copy of the snapshot.
    let traces = std::thread::scope(|scope| {
        let handles: Vec<_> = algos
            .iter()
            .map(|&algo| {
                let (graph, prices, tasks, config) = (&graph, &prices, &tasks, &config);
                scope.spawn(move || run_simulation(graph, prices, date, tasks, algo, ctx.seed, config))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })
    .with_context(|| format!("simulating trades on {date}"))?;

    let mut runs = Vec::new();
    for trace in &traces {
        let path = if algos.len() == 1 { out.clone() } else { algo_trace_path(&out, trace.algo) };
        let mut w = writer(Some(&path))?;
        write_trace_csv(trace, &mut w)?;
        w.flush()?;
        info!("wrote {}", path.display());
        runs.push(RunSummary {
            trace: path,
            summary: summarize(trace)?,
        });
    }
    let summary = SimulationSummary {
        snapshot_date: date,
        seed: ctx.seed,
        n,
        budget_usd,
        snapshot_digest: graph.digest(),
        runs,
    };
    write_json(Some(&summary_path(&out)), &summary)
}

#[derive(Serialize)]
struct RouteReport<'a> {
    algo: RouteAlgo,
    source: &'a str,
    target: &'a str,
    amount_in: f64,
    amount_out: f64,
    value_in_usd: f64,
    value_out_usd: f64,
    hops: &'a Route,
}

#[allow(clippy::too_many_arguments)]
fn route_cmd(
    common: &Common,
    date: NaiveDate,
    from: &str,
    to: &str,
    amount: Option<f64>,
    usd: Option<f64>,
    algo: RouteAlgo,
    max_hops: Option<usize>,
) -> Result<()> {
    let ctx = Inputs::resolve(common)?;
    let data = ctx.dataset()?;
    let graph = ctx.graph(&data, date)?;
    let source = find_token(&graph, from)?;
    let target = find_token(&graph, to)?;
    let price_in = data.prices.get(source, date)?;
    let price_out = data.prices.get(target, date)?;
    let amount_in = match (amount, usd) {
        (Some(a), _) => a,
        (None, Some(v)) => v / price_in,
        (None, None) => bail!("give --amount or --usd"),
    };
    let hops = max_hops.unwrap_or(ctx.settings.simulation.max_hops);
    let route = routing::route(&graph, algo, source, target, amount_in, hops)?;
    let report = RouteReport {
        algo,
        source: source.label(),
        target: target.label(),
        amount_in,
        amount_out: route.amount_out,
        value_in_usd: amount_in * price_in,
        value_out_usd: route.amount_out * price_out,
        hops: &route,
    };
    write_json(ctx.out.as_deref(), &report)
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    plan: &'a TradePlan,
    report: &'a VerificationReport,
}

fn verify(common: &Common, date: NaiveDate, phase: u8, max_cycle_len: Option<usize>) -> Result<bool> {
    let ctx = Inputs::resolve(common)?;
    let max_len = max_cycle_len.unwrap_or(ctx.settings.max_cycle_len);
    if !(2..=MAX_CYCLE_LEN_CAP).contains(&max_len) {
        bail!("--max-cycle-len must be between 2 and {MAX_CYCLE_LEN_CAP}");
    }
    let data = ctx.dataset()?;
    let graph = ctx.graph(&data, date)?;
    let phase = if phase == 1 { Phase::One } else { Phase::Two };
    let (plan, report) = verify_pipeline(&graph, &data.prices, date, phase, max_len, &ctx.settings.tolerances)
        .with_context(|| format!("verifying {date}"))?;
    write_json(ctx.out.as_deref(), &VerifyOutput { plan: &plan, report: &report })?;
    Ok(report.all_pass)
}

#[derive(Serialize)]
struct EigenOutput {
    date: NaiveDate,
    rate_mode: RateMode,
    stap: f64,
    #[serde(flatten)]
    report: EigenReport,
    matrix: Vec<Vec<f64>>,
}

fn eigen(common: &Common, date: NaiveDate, mode: RateMode) -> Result<()> {
    let ctx = Inputs::resolve(common)?;
    let data = ctx.dataset()?;
    let graph = ctx.graph(&data, date)?;
    let matrix = build_rate_matrix(&graph, &data.prices, date, mode)?;
    let report = dominant_eigenpair(&matrix, DEFAULT_EIGEN_TOL, DEFAULT_EIGEN_MAX_ITER)?
        .with_price_distance(&data.prices, date)?;
    let rows = (0..matrix.len())
        .map(|i| matrix.values.row(i).iter().copied().collect())
        .collect();
    let output = EigenOutput {
        date,
        rate_mode: mode,
        stap: stap(&graph, &data.prices, date)?.stap,
        report,
        matrix: rows,
    };
    write_json(ctx.out.as_deref(), &output)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::IngestCheck { common, date } => ingest_check(&common, date)?,
        Command::StapSeries { common, start, end } => stap_series(&common, start, end)?,
        Command::Simulate {
            common,
            snapshot_date,
            n,
            budget_usd,
            algo,
            max_hops,
        } => simulate(&common, snapshot_date, n, budget_usd, algo, max_hops)?,
        Command::Route {
            common,
            date,
            source,
            target,
            amount,
            usd,
            algo,
            max_hops,
        } => route_cmd(&common, date, &source, &target, amount, usd, algo.into(), max_hops)?,
        Command::Verify {
            common,
            date,
            phase,
            max_cycle_len,
        } => {
            if !verify(&common, date, phase, max_cycle_len)? {
                eprintln!("verification failed on {date}");
                return Ok(ExitCode::from(VERIFY_FAILED));
            }
        }
        Command::Eigen { common, date, rate_mode } => eigen(&common, date, rate_mode.into())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

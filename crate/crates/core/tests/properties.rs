use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stap_core::amm::{self, Phase};
use stap_core::arbitrage::{solve_tap_closed_form, stap};
use stap_core::barrier::{solve_tap_numeric, BarrierConfig};
use stap_core::config::Tolerances;
use stap_core::routing::{dfs_candidates, execute_route, line_graph_candidates, route_dfs, route_line_graph, LineGraph};
use stap_core::verifier::verify_pipeline;
use stap_core::{graph_tvl, Direction, Pool, PriceBook, TokenGraph, TokenId};

fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 6, 21).unwrap()
}

fn token(i: usize) -> TokenId {
    TokenId::new(format!("0x{i:04x}"))
}

/// Random multigraph: every token is in at least one pool, parallel pools
/// are allowed, reserves roughly match prices up to a random skew.
fn random_market(seed: u64, max_tokens: usize, max_pools: usize) -> (TokenGraph, PriceBook) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_tokens);
    let m = rng.gen_range(n.max(2)..=max_pools.max(n));
    let prices: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.gen_range(-3.0..4.0))).collect();
    let mut book = PriceBook::new();
    for (i, p) in prices.iter().enumerate() {
        book.insert(&token(i), day(), *p).unwrap();
    }
    let fees = [0.0, 0.003, 0.01];
    let mut pools = Vec::with_capacity(m);
    for k in 0..m {
        let i = if k < n { k } else { rng.gen_range(0..n) };
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let usd = 10f64.powf(rng.gen_range(3.0..7.0));
        let skew = 10f64.powf(rng.gen_range(-0.1..0.1));
        let ra = usd / prices[i];
        let rb = usd / prices[j] * skew;
        pools.push(Pool::new(format!("p{k:02}"), token(i), token(j), ra, rb, fees[rng.gen_range(0..3)]).unwrap());
    }
    (TokenGraph::from_pools(pools).unwrap(), book)
}

fn live_pool() -> impl Strategy<Value = (f64, f64, f64)> {
    (1e-3f64..1e9, 1e-3f64..1e9, prop_oneof![Just(0.0), Just(0.003), Just(0.01), 0.0f64..0.1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn phase_one_conserves_product((a, b, fee) in live_pool(), frac in 1e-9f64..10.0) {
        let pool = Pool::new("p", token(0), token(1), a, b, fee).unwrap();
        let q = amm::quote(&pool, Direction::SellA, frac * a).unwrap();
        let (a1, b1) = q.post_reserves(Phase::One);
        prop_assert!((a1 * b1 - a * b).abs() <= 1e-12 * a * b * 4.0);
    }

    #[test]
    fn phase_two_grows_product((a, b, fee) in live_pool(), frac in 1e-6f64..10.0) {
        prop_assume!(fee > 0.0);
        let pool = Pool::new("p", token(0), token(1), a, b, fee).unwrap();
        let q = amm::quote(&pool, Direction::SellB, frac * b).unwrap();
        let (a2, b2) = q.post_reserves(Phase::Two);
        prop_assert!(a2 * b2 > a * b);
    }

    #[test]
    fn round_trip_loses_with_fee((a, b, fee) in live_pool(), frac in 1e-6f64..10.0) {
        prop_assume!(fee > 1e-6);
        let pool = Pool::new("p", token(0), token(1), a, b, fee).unwrap();
        let x = frac * a;
        let q = amm::quote(&pool, Direction::SellA, x).unwrap();
        let g = TokenGraph::from_pools(vec![pool]).unwrap();
        let g = amm::execute(&g, &q).unwrap();
        let back = amm::quote(&g.pools()[0], Direction::SellB, q.amount_out).unwrap();
        prop_assert!(back.amount_out < x);
    }

    #[test]
    fn output_is_monotone_and_bounded((a, b, fee) in live_pool(), x in 1e-6f64..1e9, y in 1e-6f64..1e9) {
        let g = 1.0 - fee;
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        prop_assert!(amm::output_amount(a, b, g, lo) <= amm::output_amount(a, b, g, hi));
        prop_assert!(amm::output_amount(a, b, g, hi) < b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stap_is_price_scale_invariant(seed in any::<u64>(), q in prop_oneof![Just(0.1), Just(3.0), Just(1000.0)]) {
        let (g, p) = random_market(seed, 6, 12);
        let base = stap(&g, &p, day()).unwrap().stap;
        let scaled = stap(&g, &p.scaled(q), day()).unwrap().stap;
        prop_assert!((base - scaled).abs() <= 1e-12 * base.abs().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn tap_is_nonnegative_and_below_tvl(seed in any::<u64>()) {
        let (g, p) = random_market(seed, 6, 12);
        let plan = solve_tap_closed_form(&g, &p, day()).unwrap();
        prop_assert!(plan.tap_usd >= 0.0);
        prop_assert!(plan.tap_usd < graph_tvl(&g, &p, day()).unwrap());
    }

    #[test]
    fn line_graph_dominates_dfs(seed in any::<u64>(), usd in 1.0f64..1e5) {
        let (g, p) = random_market(seed, 5, 10);
        let tokens: Vec<_> = g.tokens().iter().cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let s = rng.gen_range(0..tokens.len());
        let t = (s + rng.gen_range(1..tokens.len())) % tokens.len();
        let amount = usd / p.get(&tokens[s], day()).unwrap();
        let dfs = route_dfs(&g, &tokens[s], &tokens[t], amount, 4);
        let lg = route_line_graph(&g, &tokens[s], &tokens[t], amount, 4);
        match (dfs, lg) {
            (Ok(d), Ok(l)) => prop_assert!(l.amount_out >= d.amount_out),
            (Err(_), _) => {}
            (Ok(_), Err(e)) => prop_assert!(false, "line graph failed where DFS routed: {e}"),
        }
        let line = LineGraph::build(&g);
        let lg_set = line_graph_candidates(&g, &line, &tokens[s], &tokens[t], 4);
        for path in dfs_candidates(&g, &tokens[s], &tokens[t], 4) {
            prop_assert!(lg_set.contains(&path));
        }
    }

    #[test]
    fn executed_route_delivers_quote(seed in any::<u64>(), usd in 1.0f64..1e5) {
        let (g, p) = random_market(seed, 5, 10);
        let tokens: Vec<_> = g.tokens().iter().cloned().collect();
        let amount = usd / p.get(&tokens[0], day()).unwrap();
        if let Ok(r) = route_line_graph(&g, &tokens[0], &tokens[1], amount, 4) {
            let mut g = g.clone();
            let got = execute_route(&mut g, &r).unwrap();
            prop_assert!((got - r.amount_out).abs() <= 1e-12 * r.amount_out);
        }
    }

    #[test]
    fn no_arbitrage_after_optimal_plan(seed in any::<u64>()) {
        let (g, p) = random_market(seed, 5, 8);
        let (_, report) = verify_pipeline(&g, &p, day(), Phase::Two, 4, &Tolerances::default()).unwrap();
        prop_assert!(report.all_pass);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn barrier_matches_closed_form(seed in any::<u64>()) {
        let (g, p) = random_market(seed, 5, 8);
        let closed = solve_tap_closed_form(&g, &p, day()).unwrap().tap_usd;
        let numeric = solve_tap_numeric(&g, &p, day(), &BarrierConfig::default()).unwrap().tap_usd;
        let tvl = graph_tvl(&g, &p, day()).unwrap();
        prop_assert!(Tolerances::default().tap_agrees(closed, numeric, tvl), "closed {closed} numeric {numeric} tvl {tvl}");
    }
}

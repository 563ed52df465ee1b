"""Regenerates the synthetic June 2024 snapshot in this directory.

Run from the repository root: python3 fixtures/make_fixture.py
"""

import csv
import hashlib
import json
import random
from datetime import date, timedelta
from decimal import Decimal, ROUND_HALF_EVEN, getcontext
from pathlib import Path

getcontext().prec = 80
OUT = Path(__file__).resolve().parent
DAYS = [date(2024, 6, 21) + timedelta(days=i) for i in range(7)]

# address, symbol, provider id, decimals, price on the first day
TOKENS = {
    "WETH": ("0xc02aaa39b223fe8d0a0e5c4f27ead9083c756cc2", "weth", 18, 3515.0),
    "USDC": ("0xa0b86991c6218b36c1d19d4a2e9eb0ce3606eb48", "usd-coin", 6, 1.0),
    "USDT": ("0xdac17f958d2ee523a2206206994597c13d831ec7", "tether", 6, 0.9995),
    "DAI": ("0x6b175474e89094c44da98b954eedeac495271d0f", "dai", 18, 1.0002),
    "WBTC": ("0x2260fac5e5542a773aa44fbcfedf7c193bc2c599", "wrapped-bitcoin", 8, 64050.0),
    "UNI": ("0x1f9840a85d5af5bf1d1762f925bdaddc4201f984", "uniswap", 18, 10.05),
    "LINK": ("0x514910771af9ca656af840dff83e8264ecf986ca", "chainlink", 18, 14.21),
    "PEPE": ("0x6982508145454ce325ddbe47a25d4ec3d2311933", "pepe", 18, 0.00001183),
    "SHIB": ("0x95ad61b0a150d79219dcf64e1e6cc01f0b64c4ce", "shiba-inu", 18, 0.00001765),
    "MKR": ("0x9f8f72aa9304c8b593d555f12ef6589cc3a579a2", "maker", 18, 2452.0),
    "AAVE": ("0x7fc66500c84a76ad7e9c93437c172133a9a5b7d0", "aave", 18, 88.4),
    "MATIC": ("0x7d1afa7b718fb893db30a3abc0cfc608aacfebb0", "matic-network", 18, 0.571),
    "LDO": ("0x5a98fcbea516cf06857215779fd812ca3bef1b32", "lido-dao", 18, 2.05),
    "CRV": ("0xd533a949740bb3306d119cc777fa900ba034cd52", "curve-dao-token", 18, 0.318),
    # Mapped but never priced.
    "FXS": ("0x3432b6a60d23ca0dfca7761b7ab56459d9c964d0", "frax-share", 18, None),
}
# Present in pools but absent from the mapping.
UNMAPPED = ("0x0000000000000000000000000000000000c0ffee", 18)

# name, token0, token1, TVL in USD, reserve skew of token1 relative to CEX
POOLS = [
    ("WETH/USDC", "WETH", "USDC", 2.0e6, 0.004),
    ("WETH/USDT", "WETH", "USDT", 1.0e6, -0.006),
    ("USDC/USDT", "USDC", "USDT", 5.0e5, 0.003),
    ("DAI/USDC", "DAI", "USDC", 4.0e5, -0.004),
    ("WBTC/WETH", "WBTC", "WETH", 1.5e6, 0.005),
    ("WBTC/USDC", "WBTC", "USDC", 1.5e5, -0.008),
    ("UNI/WETH", "UNI", "WETH", 6.0e5, 0.007),
    ("UNI/USDC", "UNI", "USDC", 7.5e4, -0.01),
    ("LINK/WETH", "LINK", "WETH", 4.5e5, -0.006),
    ("LINK/USDT", "LINK", "USDT", 6.0e4, 0.012),
    ("PEPE/WETH", "PEPE", "WETH", 7.5e5, 0.009),
    ("PEPE/USDT", "PEPE", "USDT", 5.0e4, -0.011),
    ("SHIB/WETH", "SHIB", "WETH", 3.5e5, -0.005),
    ("SHIB/USDC", "SHIB", "USDC", 4.0e4, 0.013),
    ("MKR/WETH", "MKR", "WETH", 2.5e5, 0.006),
    ("MKR/DAI", "MKR", "DAI", 4.5e4, -0.009),
    ("AAVE/WETH", "AAVE", "WETH", 2.0e5, -0.007),
    ("AAVE/USDC", "AAVE", "USDC", 3.5e4, 0.01),
    # Removed below the TVL floor.
    ("WETH/USDC thin", "WETH", "USDC", 5e3, 0.0),
    ("UNI/LINK thin", "UNI", "LINK", 3e3, 0.0),
    # Removed for the missing price.
    ("FXS/WETH", "FXS", "WETH", 1e5, 0.0),
    # Removed as a pendant token.
    ("MATIC/WETH", "MATIC", "WETH", 1e5, 0.0),
    # Removed one by one while above the pool target.
    ("LDO/WETH", "LDO", "WETH", 3.0e4, 0.0),
    ("CRV/USDC", "CRV", "USDC", 2.5e4, 0.0),
    ("CRV/LDO", "CRV", "LDO", 2.0e4, 0.0),
    ("DAI/USDT", "DAI", "USDT", 1.5e4, 0.0),
    ("WBTC/USDT", "WBTC", "USDT", 1.3e4, 0.0),
    ("UNI/LINK", "UNI", "LINK", 1.2e4, 0.0),
    ("LINK/DAI", "LINK", "DAI", 1.1e4, 0.0),
]


def pool_address(name):
    return "0x" + hashlib.sha256(name.encode()).hexdigest()[:40]


def raw(amount, decimals):
    scaled = Decimal(repr(amount)) * (Decimal(10) ** decimals)
    return int(scaled.quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def main():
    rng = random.Random(20240621)
    prices = {}
    for sym, (_, _, _, p0) in TOKENS.items():
        if p0 is None:
            continue
        series, p = [], p0
        for _ in DAYS:
            series.append(p)
            step = 0.0005 if sym in ("USDC", "USDT", "DAI") else 0.02
            p = p * (1.0 + rng.uniform(-step, step))
        prices[sym] = series

    pool_rows = []
    for name, t0, t1, tvl, skew in POOLS + [("BAR/WETH", None, "WETH", 5e4, 0.0)]:
        addr = pool_address(name)
        drift = 1.0
        for d, day in enumerate(DAYS):
            if name == "UNI/USDC" and d == 2:
                continue  # missing reading, carried forward on ingest
            p1 = prices[t1][d]
            p0 = prices[t0][d] if t0 in prices else p1
            half = tvl * drift / 2.0
            r0 = half / p0
            r1 = half / p1 * (1.0 + skew)
            a0, dec0 = (TOKENS[t0][0], TOKENS[t0][2]) if t0 else UNMAPPED
            a1, dec1 = TOKENS[t1][0], TOKENS[t1][2]
            pool_rows.append([addr, a0, a1, raw(r0, dec0), raw(r1, dec1), dec0, dec1, day.isoformat()])
            drift *= 1.0 + rng.uniform(-0.01, 0.01)

    # A stale duplicate row for the first day, overridden by the row after it.
    first = next(r for r in pool_rows if r[0] == pool_address("WETH/USDC") and r[7] == DAYS[0].isoformat())
    stale = list(first)
    stale[3] = first[3] // 2
    pool_rows.insert(pool_rows.index(first), stale)

    with open(OUT / "pools.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pool_address", "token0_address", "token1_address", "reserve0_raw", "reserve1_raw",
                    "decimals0", "decimals1", "date"])
        # Mixed-case addresses on one row exercise lowercasing.
        for i, row in enumerate(pool_rows):
            if i == 5:
                row = [row[0].upper().replace("0X", "0x")] + row[1:]
            w.writerow(row)

    with open(OUT / "prices.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["token_address", "date", "usd_price"])
        for sym, series in prices.items():
            for day, p in zip(DAYS, series):
                w.writerow([TOKENS[sym][0], day.isoformat(), repr(p)])

    mapping = {a: {"id": pid, "symbol": sym} for sym, (a, pid, _, _) in TOKENS.items()}
    with open(OUT / "mapping.json", "w") as f:
        json.dump(mapping, f, indent=2, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()

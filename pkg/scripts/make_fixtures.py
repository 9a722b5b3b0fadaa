#!/usr/bin/env python3
"""Regenerate the synthetic fixture data under fixtures/.

The shipped fixtures stand in for the vendor market data the experiments
were designed around (daily index levels, FX middle rates, and an option
chain). Everything is produced from fixed seeds, so re-running this script
reproduces the committed files byte for byte.
"""

from __future__ import annotations

import math
import os
from datetime import date, timedelta

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "fixtures")

N_DAYS = 1855
X0 = 2000.0
ASSET_MU, ASSET_VOL = 0.07, 0.12  # annualized
PERIODS = 252

FX_SPECS = {
    # name: (spot, annual vol, correlation with the asset shock, holidays dropped)
    "eur_usd_synthetic": (0.80, 0.06, -0.03, 14),
    "gbp_usd_synthetic": (0.65, 0.07, -0.05, 12),
    "cad_usd_synthetic": (1.05, 0.05, 0.02, 10),
}


def business_days(start, count):
    days = []
    d = start
    while len(days) < count:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return days


def gbm_levels(s0, mu_annual, vol_annual, shocks):
    mu = mu_annual / PERIODS
    vol = vol_annual / math.sqrt(PERIODS)
    log_increments = (mu - 0.5 * vol * vol) + vol * shocks
    return s0 * np.exp(np.concatenate([[0.0], np.cumsum(log_increments)]))


def write_series(name, days, levels, fmt):
    path = os.path.join(OUT, f"{name}.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("date,price\n")
        for d, p in zip(days, levels):
            f.write(f"{d.isoformat()},{fmt % p}\n")
    print(f"wrote {path} ({len(days)} rows)")


def main():
    os.makedirs(OUT, exist_ok=True)
    days = business_days(date(2011, 1, 3), N_DAYS)
    rng = np.random.default_rng(np.random.SeedSequence(20180131))

    z_asset = rng.standard_normal(N_DAYS - 1)
    asset = gbm_levels(X0, ASSET_MU, ASSET_VOL, z_asset)
    write_series("sp500_synthetic", days, asset, "%.4f")

    for name, (spot, vol, corr, n_holidays) in FX_SPECS.items():
        z_own = rng.standard_normal(N_DAYS - 1)
        shocks = corr * z_asset + math.sqrt(1.0 - corr * corr) * z_own
        levels = gbm_levels(spot, 0.0, vol, shocks)
        drop = set(rng.choice(np.arange(1, N_DAYS - 1), size=n_holidays, replace=False))
        kept_days = [d for i, d in enumerate(days) if i not in drop]
        kept_levels = [p for i, p in enumerate(levels) if i not in drop]
        write_series(name, kept_days, kept_levels, "%.6f")

    write_option_chain(days[-1], float(asset[-1]), rng)


def write_option_chain(quote_date, spot, rng):
    """50 call quotes: 47 consistent with European bounds, 3 deliberately not."""
    from quanto_bayes.pricing import bs_call

    r_f = 0.025 / PERIODS
    rows = []
    moneyness = np.linspace(0.90, 1.10, 16)
    for maturity in (30, 51, 90):
        for i, m in enumerate(moneyness):
            if len(rows) >= 47:
                break
            strike = round(spot * m, 1)
            smile = 1.0 + 0.3 * (m - 1.0) ** 2 * 25.0
            vol = (ASSET_VOL / math.sqrt(PERIODS)) * smile
            price = bs_call(spot, strike, vol, r_f, maturity)
            price *= 1.0 + 0.01 * float(rng.standard_normal())
            price = max(price, max(spot - strike * math.exp(-r_f * maturity), 0.0))
            rows.append((strike, maturity, round(price, 4)))
    # quotes that violate no-arbitrage bounds; the loader keeps them, the filter drops them
    rows.append((round(spot * 0.80, 1), 30, round(spot * 0.10, 4)))   # below intrinsic
    rows.append((round(spot * 0.85, 1), 51, round(spot * 0.12, 4)))   # below intrinsic
    rows.append((round(spot * 1.05, 1), 90, round(spot * 1.10, 4)))   # above spot
    path = os.path.join(OUT, "option_chain_synthetic.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("quote_date,strike,maturity_days,price,spot\n")
        for strike, maturity, price in rows:
            f.write(f"{quote_date.isoformat()},{strike},{maturity},{price},{spot:.4f}\n")
    print(f"wrote {path} ({len(rows)} rows)")


if __name__ == "__main__":
    main()

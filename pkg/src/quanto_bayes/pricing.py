"""Posterior-predictive Monte Carlo pricing of the four quanto payoffs,
with a closed-form anchor for the fixed-rate payoff and Black-Scholes
baselines.

``price_predictive`` consumes one posterior draw per simulated path: the
retained chain is thinned to ``n_paths`` evenly spaced entries, each path
simulates ``horizon_s`` daily return pairs under the domestic risk-neutral
measure, and the discounted payoffs are averaged. Randomness is consumed in
a fixed order (per step: one batch of asset shocks, then one batch of
exchange-rate shocks; the fixed-rate payoff F3 uses only the asset batch),
so a fixed seed reproduces the result bit for bit and common random numbers
apply across strikes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .diagnostics import hpdi
from .inference import Chain, mwg_sample
from .model import MarketConfig, ReturnPanel, SpotState, Theta, payoff, risk_neutral_drifts

__all__ = [
    "PricingRequest",
    "PricingResult",
    "SequentialSettings",
    "price_predictive",
    "predictive_samples",
    "summarize_payoffs",
    "thinned_draw_count",
    "closed_form_v3",
    "bs_call",
    "implied_vol",
    "relative_pricing_error",
]

MODES = ("static", "sequential-update")


@dataclass(frozen=True)
class PricingRequest:
    """One pricing job: payoff kind, contract terms and simulation settings.

    ``strike`` is in the currency the kind calls for (domestic for F1,
    foreign for F2/F3, exchange-rate units for F4). ``horizon_s`` counts
    trading days to maturity; 0 is allowed and returns the intrinsic value
    exactly. In ``sequential-update`` mode the posterior is refreshed every
    ``refresh_interval`` simulated days from the path's own extended panel.
    """

    kind: str
    strike: float
    horizon_s: int
    spot: SpotState
    market: MarketConfig
    n_paths: int = 100_000
    seed: int = 0
    mode: str = "static"
    refresh_interval: int = 1

    def __post_init__(self):
        if self.kind not in ("F1", "F2", "F3", "F4"):
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if self.strike < 0.0:
            raise ValueError(f"strike must be non-negative, got {self.strike}")
        if self.horizon_s < 0:
            raise ValueError(f"horizon_s must be non-negative, got {self.horizon_s}")
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be at least 1, got {self.n_paths}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.refresh_interval < 1:
            raise ValueError(
                f"refresh_interval must be at least 1, got {self.refresh_interval}"
            )


@dataclass(frozen=True)
class PricingResult:
    """Monte Carlo price with its sampling error.

    ``hpdi_99`` is the 99 percent highest-density interval of the per-draw
    discounted payoffs; ``n_effective_draws`` counts the distinct posterior
    draws consumed after thinning.
    """

    price: float
    mc_std_error: float
    hpdi_99: tuple
    n_effective_draws: int


@dataclass(frozen=True)
class SequentialSettings:
    """Inputs required by sequential-update mode.

    The historical panel is extended with each path's own simulated returns
    and the posterior is refreshed by a short Metropolis-within-Gibbs run
    started from the path's current parameter draw.
    """

    panel: ReturnPanel
    specs: tuple
    refresh_draws: int = 2000
    refresh_burn_in: int = 500

    def __post_init__(self):
        if not 0 <= self.refresh_burn_in < self.refresh_draws:
            raise ValueError("need refresh_draws > refresh_burn_in >= 0")


def _thin_indices(n_available, n_paths):
    return (np.arange(n_paths, dtype=np.int64) * n_available) // n_paths


def thinned_draw_count(chain: Chain, n_paths):
    """Distinct post-burn-in draws consumed when thinning to n_paths paths."""
    retained = chain.post_burn_in()
    if retained.shape[0] == 0:
        raise ValueError("chain has no post-burn-in draws")
    return int(np.unique(_thin_indices(retained.shape[0], n_paths)).size)


def summarize_payoffs(discounted, n_effective_draws) -> PricingResult:
    """Wrap per-draw discounted payoffs into a :class:`PricingResult`."""
    discounted = np.asarray(discounted, dtype=float)
    n = discounted.size
    price = float(discounted.mean())
    se = float(discounted.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if n >= 10:
        interval = hpdi(discounted, 0.99)
    else:
        interval = (float(discounted.min()), float(discounted.max()))
    return PricingResult(
        price=price, mc_std_error=se, hpdi_99=interval,
        n_effective_draws=n_effective_draws,
    )


def price_predictive(request: PricingRequest, chain: Chain,
                     sequential: SequentialSettings | None = None) -> PricingResult:
    """Posterior-predictive Monte Carlo price of one quanto option.

    Each retained posterior draw theta^(k) drives one simulated path of
    ``horizon_s`` return pairs under the domestic risk-neutral measure; the
    terminal levels feed the requested payoff, which is discounted at the
    domestic rate over the full horizon and averaged across paths. For F3
    only the asset return matters and it is drawn from its marginal normal.
    """
    if request.horizon_s == 0:
        value = float(
            payoff(request.kind, request.spot.x0, request.spot.h0, request.strike,
                   request.market)
        )
        return PricingResult(
            price=value, mc_std_error=0.0, hpdi_99=(value, value), n_effective_draws=0
        )
    return summarize_payoffs(
        predictive_samples(request, chain, sequential),
        thinned_draw_count(chain, request.n_paths),
    )


def predictive_samples(request: PricingRequest, chain: Chain,
                       sequential: SequentialSettings | None = None):
    """Per-draw discounted payoffs backing :func:`price_predictive`.

    This is the sample whose mean is the price and whose histogram is the
    predictive density of the discounted payoff.
    """
    retained = chain.post_burn_in()
    if retained.shape[0] == 0:
        raise ValueError("chain has no post-burn-in draws")
    if request.horizon_s == 0:
        value = float(
            payoff(request.kind, request.spot.x0, request.spot.h0, request.strike,
                   request.market)
        )
        return np.full(request.n_paths, value)
    market = request.market
    spot = request.spot
    s = request.horizon_s

    idx = _thin_indices(retained.shape[0], request.n_paths)
    thetas = retained[idx]

    if request.mode == "sequential-update":
        if sequential is None:
            raise ValueError("sequential-update mode needs SequentialSettings")
        return _simulate_sequential(request, thetas, sequential)

    sx = thetas[:, 0]
    sh = thetas[:, 1]
    rho = thetas[:, 2]
    mean_x = market.r_f - rho * sx * sh - 0.5 * sx * sx
    mean_h = market.r_d - market.r_f - 0.5 * sh * sh
    comp = np.sqrt(1.0 - rho * rho)

    n = request.n_paths
    rng = np.random.default_rng(request.seed)
    acc_x = np.zeros(n)
    acc_h = np.zeros(n)
    only_x = request.kind == "F3"
    for _ in range(s):
        z1 = rng.standard_normal(n)
        acc_x += mean_x + sx * z1
        if not only_x:
            z2 = rng.standard_normal(n)
            acc_h += mean_h + sh * (rho * z1 + comp * z2)

    x_term = spot.x0 * np.exp(acc_x)
    h_term = spot.h0 if only_x else spot.h0 * np.exp(acc_h)
    values = payoff(request.kind, x_term, h_term, request.strike, market)
    return math.exp(-market.r_d * s) * values


def _simulate_sequential(request, thetas, settings: SequentialSettings):
    """Per-path simulation with periodic posterior refreshes.

    Each path owns a deterministic substream derived from (seed, path index).
    With ``refresh_interval >= horizon_s`` no refresh triggers and the path
    reduces to a fixed-parameter simulation. Both return legs are simulated
    even for F3 because the panel refresh needs the pair.
    """
    market = request.market
    spot = request.spot
    s = request.horizon_s
    interval = request.refresh_interval
    out = np.empty(thetas.shape[0])
    for i in range(thetas.shape[0]):
        rng = np.random.default_rng(np.random.SeedSequence((request.seed, i)))
        theta = Theta(*thetas[i])
        xs = []
        hs = []
        for j in range(1, s + 1):
            mean_x, mean_h = risk_neutral_drifts(market, theta)
            z1 = rng.standard_normal()
            z2 = rng.standard_normal()
            x = mean_x + theta.sigma_x * z1
            h = mean_h + theta.sigma_h * (
                theta.rho * z1 + math.sqrt(1.0 - theta.rho ** 2) * z2
            )
            xs.append(x)
            hs.append(h)
            if j % interval == 0 and j < s:
                extended = settings.panel.extend(xs, hs)
                refresh = mwg_sample(
                    extended,
                    settings.specs,
                    settings.refresh_draws,
                    settings.refresh_burn_in,
                    init=theta,
                    seed=int(rng.integers(2 ** 63)),
                )
                theta = refresh.draw(len(refresh) - 1)
        x_term = spot.x0 * math.exp(sum(xs))
        h_term = spot.h0 * math.exp(sum(hs))
        value = payoff(request.kind, x_term, h_term, request.strike, market)
        out[i] = math.exp(-market.r_d * s) * value
    return out


def closed_form_v3(theta: Theta, spot: SpotState, strike_f, horizon_s,
                   market: MarketConfig):
    """Analytic price of the fixed-rate quanto call F3 at fixed parameters.

    The asset forward under the domestic measure carries the quanto drift
    adjustment: F = X * exp((r_f - rho*sigma_x*sigma_h) * s). A zero strike
    collapses to the discounted forward exactly.
    """
    if strike_f < 0.0:
        raise ValueError(f"strike must be non-negative, got {strike_f}")
    if horizon_s <= 0:
        raise ValueError(f"horizon_s must be positive, got {horizon_s}")
    s = float(horizon_s)
    fwd = spot.x0 * math.exp((market.r_f - theta.rho * theta.sigma_x * theta.sigma_h) * s)
    disc = math.exp(-market.r_d * s) * market.h_fix
    if strike_f == 0.0:
        return disc * fwd
    sd = theta.sigma_x * math.sqrt(s)
    d1 = (math.log(fwd / strike_f) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    return disc * (fwd * ndtr(d1) - strike_f * ndtr(d2))


def bs_call(spot_x, strike, vol_per_period, rate_per_period, horizon_s):
    """Standard Black-Scholes call with per-period vol and rate.

    The zero-volatility limit is the discounted intrinsic value.
    """
    if spot_x <= 0.0 or strike <= 0.0:
        raise ValueError("spot and strike must be positive")
    if horizon_s <= 0:
        raise ValueError(f"horizon_s must be positive, got {horizon_s}")
    s = float(horizon_s)
    if vol_per_period <= 0.0:
        return max(spot_x - strike * math.exp(-rate_per_period * s), 0.0)
    sd = vol_per_period * math.sqrt(s)
    d1 = (math.log(spot_x / strike) + (rate_per_period + 0.5 * vol_per_period ** 2) * s) / sd
    d2 = d1 - sd
    return spot_x * ndtr(d1) - strike * math.exp(-rate_per_period * s) * ndtr(d2)


def implied_vol(price, spot_x, strike, rate_per_period, horizon_s,
                price_tol=1e-10):
    """Per-period implied volatility of a call by bisection on [1e-8, 5].

    Prices outside the no-arbitrage band [max(S - K*exp(-r*s), 0), S) have
    no solution and raise.
    """
    if spot_x <= 0.0 or strike <= 0.0:
        raise ValueError("spot and strike must be positive")
    lower = max(spot_x - strike * math.exp(-rate_per_period * horizon_s), 0.0)
    if price < lower - 1e-12 or price >= spot_x:
        raise ValueError(
            f"no implied volatility: price {price} outside [{lower}, {spot_x})"
        )
    lo, hi = 1e-8, 5.0
    if bs_call(spot_x, strike, hi, rate_per_period, horizon_s) < price:
        raise ValueError(f"no implied volatility below {hi} per period for price {price}")
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        diff = bs_call(spot_x, strike, mid, rate_per_period, horizon_s) - price
        if abs(diff) <= price_tol:
            return mid
        if diff > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14:
            break
    return mid


def relative_pricing_error(model_price, market_price):
    """|model - market| / market."""
    if market_price <= 0.0:
        raise ValueError(f"market price must be positive, got {market_price}")
    return abs(model_price - market_price) / market_price

"""Batch front-end: parameter estimation, option pricing and full
experiment grids, driven by a flat ``key = value`` config file.

Subcommands
-----------
estimate    run every requested candidate family and emit a summary table
            plus raw post-burn-in draws files
price       price an option chain from a draws file; emits the pricing
            table, predictive-density histograms and the filter report
experiment  estimate + price over the (fx series x window x family) grid;
            emits aggregated pricing-performance and plot-data files
diagnose    summarize an existing draws file

Every run writes a manifest (config echo, seed, versions); outputs contain
no timestamps, so a fixed config and seed reproduce them byte for byte.
Unavailable cells are written as ``NA``.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import zlib
from dataclasses import dataclass, fields

import numpy as np
import scipy

from .data_io import (
    align_series,
    construct_quanto,
    filter_options,
    load_option_chain,
    load_price_series,
    moneyness_bucket,
)
from .diagnostics import summarize
from .inference import (
    Chain,
    FAMILY_CODES,
    NiwHyperparams,
    PARAMETERS,
    conjugate_sample,
    default_proposals,
    mle_estimate,
    mwg_sample,
)
from .model import MarketConfig, ReturnPanel, SpotState, log_returns
from .pricing import (
    PricingRequest,
    SequentialSettings,
    bs_call,
    implied_vol,
    predictive_samples,
    relative_pricing_error,
    summarize_payoffs,
    thinned_draw_count,
)

__all__ = ["ExperimentConfig", "load_config", "main"]

ALL_FAMILIES = FAMILY_CODES + ("mnc", "mle")


class ConfigError(ValueError):
    """Invalid configuration or missing inputs; exit code 1."""


@dataclass
class ExperimentConfig:
    """Run settings; field names double as config-file keys."""

    asset_series: str = ""
    fx_series: tuple = ()
    option_chain: str = ""
    out_dir: str = "out"
    r_d_annual: float = 0.015
    r_f_annual: float = 0.025
    h_fix: float = 1.0
    periods_per_year: int = 252
    draws: int = 300_000
    burn_in: int = 100_000
    seed: int = 0
    families: tuple = ALL_FAMILIES
    n_paths: int = 100_000
    mode: str = "static"
    refresh_interval: int = 10
    refresh_draws: int = 2000
    refresh_burn_in: int = 500
    windows: tuple = (140,)
    rho_step: float = 0.1
    tt_df: float = 5.0
    ig_shape: float = 0.0  # 0 = size the shape from the sample length
    vol_scale_multiplier: float = 2.0
    mnc_kappa: float = 1.0
    mnc_df: float = 4.0
    mnc_scale: float = 1e-4

    def validate(self):
        if self.draws <= self.burn_in or self.burn_in < 0:
            raise ConfigError(
                f"need draws > burn_in >= 0, got draws={self.draws} burn_in={self.burn_in}"
            )
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be positive, got {self.n_paths}")
        if self.mode not in ("static", "sequential-update"):
            raise ConfigError(f"mode must be static or sequential-update, got {self.mode!r}")
        if self.refresh_draws <= self.refresh_burn_in or self.refresh_burn_in < 0:
            raise ConfigError("need refresh_draws > refresh_burn_in >= 0")
        for family in self.families:
            if family not in ALL_FAMILIES:
                raise ConfigError(
                    f"unknown family {family!r}; expected a subset of {ALL_FAMILIES}"
                )
        if not self.windows or any(w < 2 for w in self.windows):
            raise ConfigError(f"windows must be integers >= 2, got {self.windows}")

    def market(self):
        return MarketConfig.from_annual(
            self.r_d_annual, self.r_f_annual, self.h_fix, self.periods_per_year
        )

    def niw(self):
        return NiwHyperparams(
            kappa=self.mnc_kappa, df=self.mnc_df, scale=self.mnc_scale * np.eye(2)
        )


_TUPLE_KEYS = {"families", "fx_series", "windows"}
_PATH_KEYS = {"asset_series", "option_chain"}


def load_config(path, **overrides) -> ExperimentConfig:
    """Parse a flat ``key = value`` config file; '#' starts a comment.

    Relative input paths are resolved against the config file's directory.
    Keyword overrides win over file values.
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, text = line.partition("=")
            key = key.strip()
            text = text.strip()
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _convert(key, text, base)
    for key, value in overrides.items():
        if value is None:
            continue
        values[key] = value
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def _convert(key, text, base):
    if key in _TUPLE_KEYS:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if key == "windows":
            return tuple(int(p) for p in parts)
        if key == "fx_series":
            return tuple(_resolve(p, base) for p in parts)
        return tuple(p.lower() for p in parts)
    if key in _PATH_KEYS:
        return _resolve(text, base)
    if key in ("out_dir",):
        return _resolve(text, base)
    if key in ("mode",):
        return text
    if key in ("periods_per_year", "draws", "burn_in", "seed", "n_paths",
               "refresh_interval", "refresh_draws", "refresh_burn_in"):
        return int(text)
    return float(text)


def _resolve(path, base):
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base, path))


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(value, spec="%.12g"):
    if value is None:
        return "NA"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if not math.isfinite(v):
        return "NA"
    return spec % v


def _write_csv(path, header, rows, spec="%.12g"):
    """Write a table atomically; cells are formatted with ``_fmt``."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(_fmt(cell, spec) for cell in row) + "\n")
    os.replace(tmp, path)


def _write_manifest(out_dir, cfg: ExperimentConfig, command, extra=()):
    lines = [f"command = {command}"]
    for f in sorted(fields(ExperimentConfig), key=lambda f: f.name):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    from . import __version__

    lines += list(extra)
    lines.append(f"quanto_bayes = {__version__}")
    lines.append(f"numpy = {np.__version__}")
    lines.append(f"scipy = {scipy.__version__}")
    lines.append(f"python = {sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}")
    os.makedirs(out_dir, exist_ok=True)
    tmp = os.path.join(out_dir, "manifest.txt.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
    os.replace(tmp, os.path.join(out_dir, "manifest.txt"))


def _derive_seed(base_seed, *parts):
    ints = [int(base_seed) & 0xFFFFFFFF] + [zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(ints).generate_state(1)[0])


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


# ---------------------------------------------------------------------------
# Shared pipeline pieces
# ---------------------------------------------------------------------------

def _build_panel(cfg: ExperimentConfig, fx_path, window=None):
    """Aligned return panel plus the latest aligned levels (x, h)."""
    if not cfg.asset_series:
        raise ConfigError("config needs asset_series")
    asset = load_price_series(cfg.asset_series)
    fx = load_price_series(fx_path)
    asset, fx = align_series(asset, fx)
    panel = ReturnPanel(log_returns(asset), log_returns(fx))
    if window is not None:
        if window > panel.n_obs:
            raise ConfigError(
                f"window {window} exceeds the {panel.n_obs} available returns"
            )
        panel = panel.tail(window)
    return panel, float(asset.prices[-1]), float(fx.prices[-1])


def _sample_family(family, panel, cfg: ExperimentConfig, seed) -> Chain:
    if family == "mnc":
        return conjugate_sample(panel, cfg.niw(), cfg.draws, cfg.burn_in, seed)
    specs = default_proposals(
        family,
        panel,
        rho_step=cfg.rho_step,
        tt_df=cfg.tt_df,
        ig_shape=cfg.ig_shape or None,
        scale_multiplier=cfg.vol_scale_multiplier,
    )
    init = mle_estimate(panel).theta_hat
    return mwg_sample(panel, specs, cfg.draws, cfg.burn_in, init=init, seed=seed)


_SUMMARY_HEADER = (
    "family", "parameter", "mean", "std_dev", "hpdi95_lo", "hpdi95_hi",
    "nse", "cd", "acceptance_rate",
)


def _summary_rows(family, panel=None, chain=None):
    rows = []
    if family == "mle":
        est = mle_estimate(panel).theta_hat
        for name in PARAMETERS:
            rows.append((family, name, getattr(est, name),
                         None, None, None, None, None, None))
        return rows
    for name in PARAMETERS:
        s = summarize(chain, name)
        rows.append((
            family, name, s.mean, s.std_dev, s.hpdi_95[0], s.hpdi_95[1],
            s.nse, s.cd, s.acceptance_rate,
        ))
    return rows


def _write_draws(path, chain: Chain):
    _write_csv(path, PARAMETERS, chain.post_burn_in(), spec="%.17g")


def _load_draws(path) -> Chain:
    if not os.path.exists(path):
        raise ConfigError(f"draws file not found: {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ConfigError(f"{path}: expected 3 columns, got {data.shape[1]}")
    return Chain(
        draws=data,
        burn_in=0,
        acceptance_counts=np.full(3, data.shape[0], dtype=int),
        seed=0,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_estimate(cfg: ExperimentConfig, out_dir=None, fx_path=None, window=None):
    """Estimate every requested family; returns {family: draws-file path}."""
    out_dir = out_dir or cfg.out_dir
    fx_path = fx_path or (cfg.fx_series[0] if cfg.fx_series else None)
    if fx_path is None:
        raise ConfigError("config needs at least one fx_series entry")
    window = window if window is not None else cfg.windows[0]
    panel, _, _ = _build_panel(cfg, fx_path, window)

    rows = []
    draws_files = {}
    for family in cfg.families:
        if family == "mle":
            rows.extend(_summary_rows("mle", panel=panel))
            continue
        seed = _derive_seed(cfg.seed, family)
        chain = _sample_family(family, panel, cfg, seed)
        rows.extend(_summary_rows(family, chain=chain))
        path = os.path.join(out_dir, f"draws_{family}.csv")
        _write_draws(path, chain)
        draws_files[family] = path
    _write_csv(os.path.join(out_dir, "estimate_summary.csv"), _SUMMARY_HEADER, rows)
    return draws_files


_PRICING_HEADER = (
    "strike", "maturity_days", "spot", "bucket",
    "market_price", "quanto_market_price",
    "model_price", "mc_std_error", "hpdi99_lo", "hpdi99_hi", "n_effective_draws",
    "bs_i_price", "bs_h_price",
    "rpe_model", "rpe_bs_i", "rpe_bs_h",
)


def _price_chain_against_quotes(cfg, chain, quotes, market, panel, h_level,
                                seed, sequential_family=None):
    """Pricing rows plus histogram rows for one draws source."""
    hist_vol = mle_estimate(panel).theta_hat.sigma_x
    sequential = None
    if cfg.mode == "sequential-update":
        family = sequential_family or next(
            (f for f in cfg.families if f in FAMILY_CODES), "tnn"
        )
        sequential = SequentialSettings(
            panel=panel,
            specs=default_proposals(family, panel, rho_step=cfg.rho_step,
                                    tt_df=cfg.tt_df, ig_shape=cfg.ig_shape or None,
                                    scale_multiplier=cfg.vol_scale_multiplier),
            refresh_draws=cfg.refresh_draws,
            refresh_burn_in=cfg.refresh_burn_in,
        )
    rows = []
    hist_rows = []
    for quote in quotes:
        quanto = construct_quanto(quote, market, cfg.h_fix)
        request = PricingRequest(
            kind="F3",
            strike=quote.strike,
            horizon_s=quote.maturity_days,
            spot=SpotState(quote.underlying_spot, h_level),
            market=market,
            n_paths=cfg.n_paths,
            seed=seed,
            mode=cfg.mode,
            refresh_interval=cfg.refresh_interval,
        )
        samples = predictive_samples(request, chain, sequential)
        result = summarize_payoffs(samples, thinned_draw_count(chain, cfg.n_paths))

        disc = math.exp(-market.r_d * quote.maturity_days) * cfg.h_fix
        try:
            vol_i = implied_vol(quote.market_price, quote.underlying_spot,
                                quote.strike, market.r_f, quote.maturity_days)
            bs_i = disc * bs_call(quote.underlying_spot, quote.strike, vol_i,
                                  market.r_f, quote.maturity_days)
        except ValueError:
            bs_i = None
        bs_h = disc * bs_call(quote.underlying_spot, quote.strike, hist_vol,
                              market.r_f, quote.maturity_days)

        if quanto.market_price > 0.0:
            rpe_model = relative_pricing_error(result.price, quanto.market_price)
            rpe_bs_i = (relative_pricing_error(bs_i, quanto.market_price)
                        if bs_i is not None else None)
            rpe_bs_h = relative_pricing_error(bs_h, quanto.market_price)
        else:
            rpe_model = rpe_bs_i = rpe_bs_h = None

        rows.append((
            quote.strike, quote.maturity_days, quote.underlying_spot,
            moneyness_bucket(quote.strike, quote.underlying_spot),
            quote.market_price, quanto.market_price,
            result.price, result.mc_std_error,
            result.hpdi_99[0], result.hpdi_99[1], result.n_effective_draws,
            bs_i, bs_h, rpe_model, rpe_bs_i, rpe_bs_h,
        ))
        counts, edges = np.histogram(samples, bins=50)
        for b in range(counts.size):
            hist_rows.append((quote.strike, quote.maturity_days,
                              edges[b], edges[b + 1], int(counts[b])))
    return rows, hist_rows


def cmd_price(cfg: ExperimentConfig, draws_path, out_dir=None, fx_path=None,
              window=None):
    """Price the configured option chain with an existing draws file."""
    out_dir = out_dir or cfg.out_dir
    if not cfg.option_chain:
        raise ConfigError("config needs option_chain")
    fx_path = fx_path or (cfg.fx_series[0] if cfg.fx_series else None)
    if fx_path is None:
        raise ConfigError("config needs at least one fx_series entry")
    window = window if window is not None else cfg.windows[0]

    chain = _load_draws(draws_path)
    market = cfg.market()
    panel, _, h_level = _build_panel(cfg, fx_path, window)
    quotes = load_option_chain(cfg.option_chain)
    retained, rejected = filter_options(quotes, market, quotes[0].underlying_spot)
    if not retained:
        raise ConfigError("no quotes survive the early-exercise filter")

    seed = _derive_seed(cfg.seed, "price", _stem(draws_path))
    rows, hist_rows = _price_chain_against_quotes(
        cfg, chain, retained, market, panel, h_level, seed
    )
    _write_csv(os.path.join(out_dir, "pricing.csv"), _PRICING_HEADER, rows)
    _write_csv(
        os.path.join(out_dir, "price_density.csv"),
        ("strike", "maturity_days", "bin_lo", "bin_hi", "count"),
        hist_rows,
    )
    _write_csv(
        os.path.join(out_dir, "filter_report.csv"),
        ("strike", "maturity_days", "reason"),
        [(q.strike, q.maturity_days, reason) for q, reason in rejected],
    )
    return rows


def cmd_diagnose(cfg: ExperimentConfig, draws_path, out_dir=None):
    """Summary table for an existing draws file."""
    out_dir = out_dir or cfg.out_dir
    chain = _load_draws(draws_path)
    rows = []
    for name in PARAMETERS:
        s = summarize(chain, name)
        rows.append((name, s.mean, s.std_dev, s.hpdi_95[0], s.hpdi_95[1],
                     s.nse, s.cd))
    _write_csv(
        os.path.join(out_dir, "diagnose_summary.csv"),
        ("parameter", "mean", "std_dev", "hpdi95_lo", "hpdi95_hi", "nse", "cd"),
        rows,
    )
    return rows


def cmd_experiment(cfg: ExperimentConfig):
    """Full grid: (fx series x window x family) estimation and pricing.

    Failures are recorded per cell and the grid keeps going; per-bucket
    pricing performance lands in pricing_performance.csv and per-option
    curves in pricing_curves.csv.
    """
    if not cfg.fx_series:
        raise ConfigError("config needs at least one fx_series entry")
    if not cfg.option_chain:
        raise ConfigError("config needs option_chain")
    out_dir = cfg.out_dir
    market = cfg.market()
    quotes_all = load_option_chain(cfg.option_chain)
    retained, rejected = filter_options(quotes_all, market, quotes_all[0].underlying_spot)
    if not retained:
        raise ConfigError("no quotes survive the early-exercise filter")
    _write_csv(
        os.path.join(out_dir, "filter_report.csv"),
        ("strike", "maturity_days", "reason"),
        [(q.strike, q.maturity_days, reason) for q, reason in rejected],
    )

    performance = []
    curves = []
    failures = []
    for fx_path in cfg.fx_series:
        fx_name = _stem(fx_path)
        for window in cfg.windows:
            cell_dir = os.path.join(out_dir, "cells", fx_name, f"w{window}")
            try:
                panel, _, h_level = _build_panel(cfg, fx_path, window)
            except (ConfigError, ValueError, OSError) as exc:
                failures.append((fx_name, window, "*", "panel", str(exc)))
                continue

            est_rows = []
            chains = {}
            for family in cfg.families:
                try:
                    if family == "mle":
                        est_rows.extend(_summary_rows("mle", panel=panel))
                        continue
                    seed = _derive_seed(cfg.seed, family, fx_name, window)
                    chain = _sample_family(family, panel, cfg, seed)
                    est_rows.extend(_summary_rows(family, chain=chain))
                    _write_draws(os.path.join(cell_dir, f"draws_{family}.csv"), chain)
                    chains[family] = chain
                except (ConfigError, ValueError) as exc:
                    failures.append((fx_name, window, family, "estimate", str(exc)))
            _write_csv(os.path.join(cell_dir, "estimate_summary.csv"),
                       _SUMMARY_HEADER, est_rows)

            baseline_rows = None
            for family, chain in chains.items():
                try:
                    seed = _derive_seed(cfg.seed, "price", family, fx_name, window)
                    rows, _ = _price_chain_against_quotes(
                        cfg, chain, retained, market, panel, h_level, seed,
                        sequential_family=family if family in FAMILY_CODES else None,
                    )
                except (ConfigError, ValueError) as exc:
                    failures.append((fx_name, window, family, "price", str(exc)))
                    continue
                _write_csv(os.path.join(cell_dir, f"pricing_{family}.csv"),
                           _PRICING_HEADER, rows)
                if baseline_rows is None:
                    baseline_rows = rows
                performance.extend(_aggregate_buckets(fx_name, window, family, rows,
                                                      rpe_col=13, nse_col=7))
                for row in rows:
                    curves.append((fx_name, window, family, row[0], row[1],
                                   row[5], row[6]))
            if baseline_rows is not None:
                for model, rpe_col, price_col in (("bs_i", 14, 11), ("bs_h", 15, 12)):
                    performance.extend(_aggregate_buckets(fx_name, window, model,
                                                          baseline_rows,
                                                          rpe_col=rpe_col, nse_col=None))
                    for row in baseline_rows:
                        curves.append((fx_name, window, model, row[0], row[1],
                                       row[5], row[price_col]))

    _write_csv(
        os.path.join(out_dir, "pricing_performance.csv"),
        ("fx", "window", "model", "bucket", "mean_rpe", "mean_nse", "n_quotes"),
        performance,
    )
    _write_csv(
        os.path.join(out_dir, "pricing_curves.csv"),
        ("fx", "window", "model", "strike", "maturity_days",
         "quanto_market_price", "model_price"),
        curves,
    )
    _write_csv(
        os.path.join(out_dir, "failures.csv"),
        ("fx", "window", "family", "stage", "error"),
        failures,
    )
    return failures


def _aggregate_buckets(fx_name, window, model, rows, rpe_col, nse_col):
    out = []
    for bucket in ("ITM", "ATM", "OTM"):
        sel = [r for r in rows if r[3] == bucket]
        rpes = [r[rpe_col] for r in sel if r[rpe_col] is not None]
        mean_rpe = sum(rpes) / len(rpes) if rpes else None
        if nse_col is None:
            mean_nse = None
        else:
            nses = [r[nse_col] for r in sel if r[nse_col] is not None]
            mean_nse = sum(nses) / len(nses) if nses else None
        out.append((fx_name, window, model, bucket, mean_rpe, mean_nse, len(sel)))
    return out


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="quanto-bayes",
        description="Bayesian estimation and Monte Carlo pricing of quanto options",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("estimate", "run the samplers and emit the parameter summary table"),
        ("price", "price the option chain from an existing draws file"),
        ("experiment", "run the full fx x window x family grid"),
        ("diagnose", "summarize an existing draws file"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="path to the key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--families", default=None,
                       help="comma list from ttn,tnn,ign,mnc,mle")
        p.add_argument("--paths", type=int, default=None, help="override n_paths")
        p.add_argument("--mode", default=None, choices=["static", "sequential"],
                       help="pricing mode")
        if name in ("price", "diagnose"):
            p.add_argument("--draws", required=True, help="draws file from 'estimate'")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "out_dir": os.path.abspath(args.out) if args.out else None,
        "n_paths": args.paths,
    }
    if args.families:
        overrides["families"] = tuple(f.strip().lower() for f in args.families.split(","))
    if args.mode:
        overrides["mode"] = "sequential-update" if args.mode == "sequential" else args.mode

    try:
        cfg = load_config(args.config, **overrides)
        if args.command in ("estimate", "experiment"):
            missing = [p for p in (cfg.asset_series, *cfg.fx_series) if not os.path.exists(p)]
            if missing:
                raise ConfigError(f"input files not found: {missing}")
        _write_manifest(cfg.out_dir, cfg, args.command,
                        extra=[f"draws = {getattr(args, 'draws', '')}"]
                        if hasattr(args, "draws") else ())
        if args.command == "estimate":
            cmd_estimate(cfg)
        elif args.command == "price":
            cmd_price(cfg, args.draws)
        elif args.command == "diagnose":
            cmd_diagnose(cfg, args.draws)
        else:
            cmd_experiment(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

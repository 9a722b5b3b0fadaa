"""Loading and preparation of price series and option chains.

File formats are comma-separated with a header row, UTF-8, decimal point:

* price series: ``date,price`` with ISO-8601 dates;
* option chains: ``quote_date,strike,maturity_days,price,spot``.

Custom column names are accepted via the loaders' column arguments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date as Date

from .model import MarketConfig, PriceSeries

__all__ = [
    "OptionQuote",
    "QuantoQuote",
    "load_price_series",
    "load_option_chain",
    "align_series",
    "filter_options",
    "construct_quanto",
    "moneyness_bucket",
]


@dataclass(frozen=True)
class OptionQuote:
    """One European call quote on the foreign asset."""

    quote_date: Date
    strike: float
    maturity_days: int
    market_price: float
    underlying_spot: float

    def __post_init__(self):
        if self.strike <= 0.0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if self.maturity_days < 1:
            raise ValueError(f"maturity_days must be >= 1, got {self.maturity_days}")
        if self.market_price < 0.0:
            raise ValueError(f"market price must be non-negative, got {self.market_price}")
        if self.underlying_spot <= 0.0:
            raise ValueError(f"spot must be positive, got {self.underlying_spot}")


@dataclass(frozen=True)
class QuantoQuote(OptionQuote):
    """A call quote restated as a fixed-rate quanto: price discounted at the
    domestic rate and scaled by the contractual exchange rate."""

    h_fix: float = 1.0


def _parse_date(text, row):
    try:
        return Date.fromisoformat(text.strip())
    except ValueError:
        raise ValueError(f"row {row}: invalid ISO date {text!r}") from None


def _parse_float(text, row, column):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ValueError(f"row {row}: non-numeric {column} {text!r}") from None


def load_price_series(path, date_column="date", price_column="price"):
    """Read a dated price series, sort by date, and validate it.

    Duplicate dates and non-positive or non-numeric prices are rejected with
    the offending date or row named.
    """
    rows = []
    seen = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or date_column not in reader.fieldnames \
                or price_column not in reader.fieldnames:
            raise ValueError(
                f"{path}: expected columns {date_column!r} and {price_column!r}, "
                f"got {reader.fieldnames}"
            )
        for i, record in enumerate(reader, start=2):
            day = _parse_date(record[date_column], i)
            price = _parse_float(record[price_column], i, price_column)
            if day in seen:
                raise ValueError(f"duplicate date {day.isoformat()} at row {i}")
            if not (math.isfinite(price) and price > 0.0):
                raise ValueError(f"row {i}: non-positive price {price!r}")
            seen[day] = price
            rows.append(day)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    rows.sort()
    return PriceSeries(rows, [seen[d] for d in rows])


def load_option_chain(path):
    """Read an option chain file into a list of quotes."""
    quotes = []
    columns = ("quote_date", "strike", "maturity_days", "price", "spot")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        missing = [c for c in columns if reader.fieldnames is None or c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for i, record in enumerate(reader, start=2):
            quotes.append(
                OptionQuote(
                    quote_date=_parse_date(record["quote_date"], i),
                    strike=_parse_float(record["strike"], i, "strike"),
                    maturity_days=int(_parse_float(record["maturity_days"], i, "maturity_days")),
                    market_price=_parse_float(record["price"], i, "price"),
                    underlying_spot=_parse_float(record["spot"], i, "spot"),
                )
            )
    if not quotes:
        raise ValueError(f"{path}: no data rows")
    return quotes


def align_series(a: PriceSeries, b: PriceSeries):
    """Restrict two series to their common dates, order preserved."""
    common = set(a.dates) & set(b.dates)
    if not common:
        raise ValueError("series share no dates")
    dates_a = [d for d in a.dates if d in common]
    prices_a = [p for d, p in zip(a.dates, a.prices) if d in common]
    dates_b = [d for d in b.dates if d in common]
    prices_b = [p for d, p in zip(b.dates, b.prices) if d in common]
    return PriceSeries(dates_a, prices_a), PriceSeries(dates_b, prices_b)


def filter_options(quotes, market: MarketConfig, spot):
    """Drop quotes violating European lower-bound consistency.

    Retains quotes with price in [max(spot - strike*exp(-r_d*maturity), 0),
    spot]; everything else is returned in the rejects list with a reason
    code (``below_lower_bound`` or ``above_spot``).
    """
    retained = []
    rejected = []
    for quote in quotes:
        bound = max(spot - quote.strike * math.exp(-market.r_d * quote.maturity_days), 0.0)
        if quote.market_price < bound:
            rejected.append((quote, "below_lower_bound"))
        elif quote.market_price > spot:
            rejected.append((quote, "above_spot"))
        else:
            retained.append(quote)
    return retained, rejected


def construct_quanto(call_quote: OptionQuote, market: MarketConfig, h_fix):
    """Synthetic fixed-rate quanto quote: QC = exp(-r_d * maturity) * h_fix * C."""
    if h_fix <= 0.0:
        raise ValueError(f"h_fix must be positive, got {h_fix}")
    scaled = math.exp(-market.r_d * call_quote.maturity_days) * h_fix * call_quote.market_price
    return QuantoQuote(
        quote_date=call_quote.quote_date,
        strike=call_quote.strike,
        maturity_days=call_quote.maturity_days,
        market_price=scaled,
        underlying_spot=call_quote.underlying_spot,
        h_fix=h_fix,
    )


def moneyness_bucket(strike, spot):
    """Classify strike/spot into ITM (< 0.98), ATM ([0.98, 1.02]) or OTM (> 1.02)."""
    if strike <= 0.0 or spot <= 0.0:
        raise ValueError("strike and spot must be positive")
    ratio = strike / spot
    if ratio < 0.98:
        return "ITM"
    if ratio > 1.02:
        return "OTM"
    return "ATM"

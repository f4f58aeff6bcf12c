"""Seeded synthetic OHLCV generator for fixtures, demos and benchmarks."""

from __future__ import annotations

import datetime as dt

import numpy as np

from .marketdata import BarSeries, Universe


def business_days(start: dt.date, end: dt.date) -> list[dt.date]:
    days = np.arange(np.datetime64(start), np.datetime64(end) + 1, dtype="datetime64[D]")
    days = days[np.is_busday(days)]
    return [d.item() for d in days]


def random_walk_bars(
    symbol: str,
    start: dt.date,
    end: dt.date,
    seed: int,
    price0: float = 100.0,
    drift: float = 0.0004,
    vol: float = 0.018,
) -> BarSeries:
    """Geometric random-walk daily bars with cent-rounded prices.

    Open gaps from the previous close, high/low extend beyond the body, and
    volume is log-normal. Every bar satisfies the OHLC ordering invariants.
    """
    rng = np.random.default_rng(seed)
    dates = business_days(start, end)
    n = len(dates)
    log_ret = drift + vol * rng.standard_normal(n)
    close = price0 * np.exp(np.cumsum(log_ret))
    prev = np.concatenate(([price0], close[:-1]))
    open_ = prev * np.exp(0.3 * vol * rng.standard_normal(n))
    body_hi = np.maximum(open_, close)
    body_lo = np.minimum(open_, close)
    high = body_hi * (1 + np.abs(rng.standard_normal(n)) * vol * 0.5)
    low = body_lo * (1 - np.abs(rng.standard_normal(n)) * vol * 0.5)

    open_, close, high, low = (np.round(x, 2) for x in (open_, close, high, low))
    open_ = np.maximum(open_, 0.01)
    close = np.maximum(close, 0.01)
    high = np.maximum.reduce([high, open_, close])
    low = np.maximum(np.minimum.reduce([low, open_, close]), 0.01)
    volume = np.round(np.exp(rng.normal(14.0, 0.5, n)))
    return BarSeries(
        symbol=symbol,
        dates=tuple(dates),
        open=open_,
        high=high,
        low=low,
        close=close,
        volume=volume,
        adj_close=close,
    )


def synthetic_universe(
    name: str,
    n_symbols: int,
    start: dt.date,
    end: dt.date,
    seed: int,
    prefix: str = "SYN",
) -> tuple[Universe, dict[str, BarSeries]]:
    """``n_symbols`` independent random walks with varied drift and volatility."""
    rng = np.random.default_rng(seed)
    data = {}
    for k in range(n_symbols):
        symbol = f"{prefix}{k:03d}"
        data[symbol] = random_walk_bars(
            symbol,
            start,
            end,
            seed=int(rng.integers(0, 2**31)),
            price0=float(rng.uniform(20, 300)),
            drift=float(rng.normal(0.0004, 0.0004)),
            vol=float(rng.uniform(0.01, 0.03)),
        )
    return Universe(name, tuple(data), start, end), data

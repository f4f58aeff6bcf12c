"""Next-bar, all-in/all-out long-only execution simulator."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptySeries, MacdLabError, MisalignedSeries
from .marketdata import BarSeries, Universe, ValidatedBarSeries, validate, window
from .signals import IndicatorCache, SignalSeries, StrategySpec, compute_signals


class FillPrice(str, enum.Enum):
    NEXT_OPEN = "NextOpen"
    NEXT_CLOSE = "NextClose"


@dataclass(frozen=True)
class ExecutionConfig:
    initial_cash: float = 80_000.0
    fill_price: FillPrice = FillPrice.NEXT_OPEN
    force_close_at_end: bool = True

    def __post_init__(self):
        object.__setattr__(self, "fill_price", FillPrice(self.fill_price))
        object.__setattr__(self, "initial_cash", float(self.initial_cash))
        if not self.initial_cash > 0:
            raise ValueError(f"initial_cash must be positive, got {self.initial_cash}")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExecutionConfig":
        unknown = set(doc) - {"initial_cash", "fill_price", "force_close_at_end"}
        if unknown:
            raise ValueError(f"unknown execution settings: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {
            "initial_cash": self.initial_cash,
            "fill_price": self.fill_price.value,
            "force_close_at_end": self.force_close_at_end,
        }


@dataclass(frozen=True)
class Trade:
    entry_date: dt.date
    exit_date: dt.date
    entry_price: float
    exit_price: float
    shares: int
    pnl: float
    ret: float
    forced_exit: bool = False

    @classmethod
    def close(cls, entry_date, exit_date, entry_price, exit_price, shares, forced=False) -> "Trade":
        return cls(
            entry_date=entry_date,
            exit_date=exit_date,
            entry_price=entry_price,
            exit_price=exit_price,
            shares=shares,
            pnl=shares * (exit_price - entry_price),
            ret=exit_price / entry_price - 1.0,
            forced_exit=forced,
        )


@dataclass(frozen=True, eq=False)
class TradeLedger:
    symbol: str
    trades: tuple[Trade, ...]
    dates: tuple[dt.date, ...]
    cash: np.ndarray
    shares: np.ndarray
    equity: np.ndarray

    @property
    def final_equity(self) -> float:
        return float(self.equity[-1])

    @property
    def equity_curve(self) -> list[tuple[float, int, float]]:
        return list(zip(self.cash.tolist(), self.shares.tolist(), self.equity.tolist()))


def run_backtest(
    series: BarSeries, signals: SignalSeries, cfg: ExecutionConfig = ExecutionConfig()
) -> TradeLedger:
    """Simulate the signals over ``series``.

    A signal at bar t executes at bar t+1 (its open, or its close with
    ``NextClose``). A Buy while flat spends all cash on whole shares, a Sell
    while long liquidates; other signals are no-ops. Signals on the last bar
    have nowhere to execute. A Buy that would fill on the last bar is
    skipped, since the position could never be closed on a later date. With
    ``force_close_at_end`` a position still open at the end is sold at the
    final close.
    """
    n = len(series)
    if n == 0:
        raise EmptySeries(f"{series.symbol}: empty series")
    if len(signals) != n:
        raise MisalignedSeries(f"{series.symbol}: {len(signals)} signals for {n} bars")

    closes = series.close.tolist()
    fills = (series.open if cfg.fill_price is FillPrice.NEXT_OPEN else series.close).tolist()
    codes = signals.codes.tolist()
    dates = series.dates

    cash = cfg.initial_cash
    held = 0
    entry_i = -1
    trades: list[Trade] = []
    cash_curve = [0.0] * n
    share_curve = [0] * n
    equity_curve = [0.0] * n
    pending = 0

    for t in range(n):
        if pending == 1 and held == 0 and t < n - 1:
            price = fills[t]
            qty = int(cash // price)
            if qty * price > cash:
                qty -= 1
            if qty >= 1:
                cash -= qty * price
                held = qty
                entry_i = t
        elif pending == -1 and held > 0:
            price = fills[t]
            cash += held * price
            trades.append(Trade.close(dates[entry_i], dates[t], fills[entry_i], price, held))
            held = 0
        pending = codes[t]

        if t == n - 1 and held > 0 and cfg.force_close_at_end:
            price = closes[t]
            cash += held * price
            trades.append(Trade.close(dates[entry_i], dates[t], fills[entry_i], price, held, forced=True))
            held = 0

        cash_curve[t] = cash
        share_curve[t] = held
        equity_curve[t] = cash + held * closes[t]

    return TradeLedger(
        symbol=series.symbol,
        trades=tuple(trades),
        dates=tuple(dates),
        cash=np.array(cash_curve),
        shares=np.array(share_curve, dtype=np.int64),
        equity=np.array(equity_curve),
    )


def replay(series: BarSeries, trades: Sequence[Trade], initial_cash: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rebuild (cash, shares, equity) per bar from a trade list and the bar data."""
    index = {d: i for i, d in enumerate(series.dates)}
    entries = {index[t.entry_date]: t for t in trades}
    exits: dict[int, list[Trade]] = {}
    for t in trades:
        exits.setdefault(index[t.exit_date], []).append(t)
    closes = series.close.tolist()
    n = len(series)
    cash, held = float(initial_cash), 0
    out_cash, out_shares, out_eq = np.zeros(n), np.zeros(n, dtype=np.int64), np.zeros(n)
    for i in range(n):
        for t in exits.get(i, ()):
            if not t.forced_exit:
                cash += t.shares * t.exit_price
                held = 0
        if i in entries:
            t = entries[i]
            cash -= t.shares * t.entry_price
            held = t.shares
        for t in exits.get(i, ()):
            if t.forced_exit:
                cash += t.shares * t.exit_price
                held = 0
        out_cash[i], out_shares[i], out_eq[i] = cash, held, cash + held * closes[i]
    return out_cash, out_shares, out_eq


# -- universe runs ------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    symbol: str
    message: str


@dataclass
class UniverseRun:
    universe: str
    strategy: str
    ledgers: list[TradeLedger] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)


def _prepare_symbol(universe: Universe, symbol: str, data: Mapping[str, BarSeries]) -> ValidatedBarSeries:
    if symbol not in data:
        raise KeyError("no data supplied")
    windowed = window(data[symbol], universe.start, universe.end)
    if len(windowed) == 0:
        raise EmptySeries(f"no bars between {universe.start} and {universe.end}")
    return validate(windowed).require()


def run_panel(
    universe: Universe,
    specs: Sequence[StrategySpec],
    cfg: ExecutionConfig,
    data: Mapping[str, BarSeries],
) -> list[UniverseRun]:
    """Backtest every strategy on every symbol, sharing indicators per symbol.

    Each symbol is funded separately with ``initial_cash``. Ledgers are
    ordered by symbol. Missing or unusable symbols become diagnostics.
    """
    runs = [UniverseRun(universe.name, spec.label) for spec in specs]
    for symbol in sorted(universe.symbols):
        try:
            series = _prepare_symbol(universe, symbol, data)
        except (MacdLabError, KeyError, ValueError) as exc:
            for run in runs:
                run.diagnostics.append(Diagnostic(symbol, _describe(exc)))
            continue
        cache = IndicatorCache(series)
        for spec, run in zip(specs, runs):
            try:
                run.ledgers.append(run_backtest(series, compute_signals(series, spec, cache), cfg))
            except (MacdLabError, ValueError) as exc:
                run.diagnostics.append(Diagnostic(symbol, _describe(exc)))
    return runs


def run_universe(
    universe: Universe,
    spec: StrategySpec,
    cfg: ExecutionConfig,
    data: Mapping[str, BarSeries],
) -> UniverseRun:
    return run_panel(universe, [spec], cfg, data)[0]


def _describe(exc: BaseException) -> str:
    text = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
    return f"{type(exc).__name__}: {text}"


# -- CSV export ------------------------------------------------------------------

TRADE_COLUMNS = ("entry_date", "exit_date", "entry_price", "exit_price", "shares", "pnl", "ret", "forced_exit")
EQUITY_COLUMNS = ("date", "cash", "shares", "equity")


def trades_to_csv(trades: Iterable[Trade]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRADE_COLUMNS)
    for t in trades:
        w.writerow(
            [
                t.entry_date.isoformat(),
                t.exit_date.isoformat(),
                repr(t.entry_price),
                repr(t.exit_price),
                t.shares,
                repr(t.pnl),
                repr(t.ret),
                "true" if t.forced_exit else "false",
            ]
        )
    return out.getvalue()


def trades_from_csv(text: str) -> list[Trade]:
    """Inverse of :func:`trades_to_csv`; ``#`` comment lines are skipped."""
    rows = csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#"))
    return [
        Trade(
            entry_date=dt.date.fromisoformat(r["entry_date"]),
            exit_date=dt.date.fromisoformat(r["exit_date"]),
            entry_price=float(r["entry_price"]),
            exit_price=float(r["exit_price"]),
            shares=int(r["shares"]),
            pnl=float(r["pnl"]),
            ret=float(r["ret"]),
            forced_exit=r["forced_exit"] == "true",
        )
        for r in rows
    ]


def equity_to_csv(ledger: TradeLedger) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(EQUITY_COLUMNS)
    for d, c, s, e in zip(ledger.dates, ledger.cash.tolist(), ledger.shares.tolist(), ledger.equity.tolist()):
        w.writerow([d.isoformat(), repr(c), s, repr(e)])
    return out.getvalue()

"""Performance statistics for trade ledgers.

Undefined statistics (no trades, zero variance, no losers...) are reported
as ``None`` rather than 0 or NaN so they are never mistaken for a value.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .backtest import Trade, TradeLedger

TRADING_DAYS = 252
# relative std below which a return stream counts as constant
_FLAT = 1e-12


def win_rate(trades: Sequence[Trade]) -> float | None:
    if not trades:
        return None
    return sum(1 for t in trades if t.pnl > 0) / len(trades)


def pnl_ratio(trades: Sequence[Trade]) -> float | None:
    """Mean winner gain over mean loser magnitude."""
    gains = [t.pnl for t in trades if t.pnl > 0]
    losses = [-t.pnl for t in trades if t.pnl < 0]
    if not gains or not losses:
        return None
    return (sum(gains) / len(gains)) / (sum(losses) / len(losses))


def daily_returns(equity: Sequence[float]) -> np.ndarray:
    eq = np.asarray(equity, dtype=np.float64)
    return eq[1:] / eq[:-1] - 1.0


def _is_flat(std: float, mean: float) -> bool:
    return std == 0.0 or std <= _FLAT * abs(mean)


def sharpe_from_returns(returns: Sequence[float], rf: float = 0.0, periods: float = TRADING_DAYS) -> float | None:
    r = np.asarray(returns, dtype=np.float64) - rf
    if len(r) < 2:
        return None
    mean, std = r.mean(), r.std()
    if _is_flat(std, mean):
        return None
    return float(mean / std * math.sqrt(periods))


def sortino_from_returns(returns: Sequence[float], rf: float = 0.0, periods: float = TRADING_DAYS) -> float | None:
    r = np.asarray(returns, dtype=np.float64) - rf
    downside = r[r < 0]
    if len(r) < 2 or len(downside) == 0:
        return None
    std = downside.std()
    if _is_flat(std, downside.mean()):
        return None
    return float(r.mean() / std * math.sqrt(periods))


def sharpe(equity_curve: Sequence[float], rf: float = 0.0) -> float | None:
    """Annualised Sharpe ratio of daily simple equity returns (population std)."""
    if len(equity_curve) < 3:
        return None
    return sharpe_from_returns(daily_returns(equity_curve), rf)


def sortino(equity_curve: Sequence[float], rf: float = 0.0) -> float | None:
    """Like :func:`sharpe` with the population std of the negative returns as denominator."""
    if len(equity_curve) < 3:
        return None
    return sortino_from_returns(daily_returns(equity_curve), rf)


def max_drawdown(equity_curve: Sequence[float]) -> float:
    eq = np.asarray(equity_curve, dtype=np.float64)
    if len(eq) == 0:
        return 0.0
    peak = np.maximum.accumulate(eq)
    return float(((peak - eq) / peak).max())


@dataclass(frozen=True)
class AccumulatedProfit:
    gain: float
    loss: float
    ap: float


def accumulated_profit(ledgers: Iterable[TradeLedger]) -> AccumulatedProfit:
    gain = loss = 0.0
    for ledger in ledgers:
        for t in ledger.trades:
            if t.pnl > 0:
                gain += t.pnl
            elif t.pnl < 0:
                loss += t.pnl
    return AccumulatedProfit(gain, loss, gain + loss)


@dataclass(frozen=True)
class ReturnMoments:
    mean: float | None
    skewness: float | None
    kurtosis: float | None


def return_moments(returns: Sequence[float], excess_kurtosis: bool = False) -> ReturnMoments:
    """Mean, Fisher-Pearson skewness and (raw by default) kurtosis of per-trade returns."""
    r = np.asarray(returns, dtype=np.float64)
    if len(r) == 0:
        return ReturnMoments(None, None, None)
    mean = float(r.mean())
    dev = r - mean
    m2 = float((dev**2).mean())
    if _is_flat(math.sqrt(m2), mean):
        return ReturnMoments(mean, None, None)
    skew = float((dev**3).mean()) / m2**1.5
    kurt = float((dev**4).mean()) / m2**2
    return ReturnMoments(mean, skew, kurt - 3.0 if excess_kurtosis else kurt)


@dataclass(frozen=True)
class AggregationPolicy:
    """How per-symbol results are combined into one report row.

    Trade statistics always pool trades across symbols. Curve statistics
    (Sharpe, Sortino, MDD) are computed per symbol and averaged with equal
    weight over the symbols where they are defined. ``sharpe_basis="trade"``
    swaps the daily equity returns for per-trade returns (not annualised).
    """

    trade_stats: str = "pooled"
    curve_stats: str = "per_symbol_mean"
    sharpe_basis: str = "equity"
    excess_kurtosis: bool = False

    def __post_init__(self):
        if self.trade_stats != "pooled" or self.curve_stats != "per_symbol_mean":
            raise ValueError("only pooled trade stats and per-symbol-mean curve stats are supported")
        if self.sharpe_basis not in ("equity", "trade"):
            raise ValueError(f"sharpe_basis must be 'equity' or 'trade', got {self.sharpe_basis!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "AggregationPolicy":
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StrategyReport:
    strategy: str
    universe: str
    symbols: int
    nt: int
    wins: int
    losses: int
    flat: int
    win_rate: float | None
    pnl_ratio: float | None
    sharpe: float | None
    sortino: float | None
    mdd: float | None
    accumulated_gain: float
    accumulated_loss: float
    accumulated_profit: float
    mean_ret: float | None
    skewness: float | None
    kurtosis: float | None
    policy: AggregationPolicy = field(default_factory=AggregationPolicy)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["policy"] = self.policy.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "StrategyReport":
        doc = dict(doc)
        doc["policy"] = AggregationPolicy.from_dict(doc.get("policy", {}))
        return cls(**doc)


def _mean_defined(values: Iterable[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def _curve_stats(ledger: TradeLedger, policy: AggregationPolicy) -> tuple[float | None, float | None]:
    if policy.sharpe_basis == "trade":
        rets = [t.ret for t in ledger.trades]
        return sharpe_from_returns(rets, periods=1), sortino_from_returns(rets, periods=1)
    return sharpe(ledger.equity), sortino(ledger.equity)


def aggregate(
    ledgers: Sequence[TradeLedger],
    policy: AggregationPolicy = AggregationPolicy(),
    strategy: str = "",
    universe: str = "",
) -> StrategyReport:
    # fixed order so floating-point sums do not depend on how ledgers were passed
    ledgers = sorted(ledgers, key=lambda ledger: ledger.symbol)
    trades = [t for ledger in ledgers for t in ledger.trades]
    ap = accumulated_profit(ledgers)
    moments = return_moments([t.ret for t in trades], policy.excess_kurtosis)
    curves = [_curve_stats(ledger, policy) for ledger in ledgers]
    wins = sum(1 for t in trades if t.pnl > 0)
    losses = sum(1 for t in trades if t.pnl < 0)
    return StrategyReport(
        strategy=strategy,
        universe=universe,
        symbols=len(ledgers),
        nt=len(trades),
        wins=wins,
        losses=losses,
        flat=len(trades) - wins - losses,
        win_rate=win_rate(trades),
        pnl_ratio=pnl_ratio(trades),
        sharpe=_mean_defined(s for s, _ in curves),
        sortino=_mean_defined(s for _, s in curves),
        mdd=_mean_defined(max_drawdown(ledger.equity) for ledger in ledgers),
        accumulated_gain=ap.gain,
        accumulated_loss=ap.loss,
        accumulated_profit=ap.ap,
        mean_ret=moments.mean,
        skewness=moments.skewness,
        kurtosis=moments.kurtosis,
        policy=policy,
    )

import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_series
from macdlab.backtest import ExecutionConfig, Trade, TradeLedger, run_backtest, run_universe
from macdlab.marketdata import Bar, BarSeries
from macdlab.metrics import (
    AggregationPolicy,
    StrategyReport,
    accumulated_profit,
    aggregate,
    max_drawdown,
    pnl_ratio,
    return_moments,
    sharpe,
    sortino,
    win_rate,
)
from macdlab.signals import SignalSeries, all_strategies

D = dt.date


def trade(pnl, ret=None):
    ret = pnl / 100.0 if ret is None else ret
    return Trade(D(2020, 1, 1), D(2020, 1, 2), 100.0, 100.0 * (1 + ret), 1, float(pnl), float(ret))


def ledger(symbol, trades=(), equity=(1.0, 1.0, 1.0)):
    eq = np.asarray(equity, dtype=np.float64)
    n = len(eq)
    dates = tuple(D.fromordinal(D(2020, 1, 1).toordinal() + i) for i in range(n))
    return TradeLedger(symbol, tuple(trades), dates, eq.copy(), np.zeros(n, dtype=np.int64), eq)


def test_win_rate_examples():
    assert win_rate([trade(1), trade(-1)]) == 0.5
    assert win_rate([trade(3), trade(2)]) == 1.0
    assert win_rate([trade(0), trade(2)]) == 0.5  # zero pnl counts only in the denominator
    assert win_rate([]) is None


def test_pnl_ratio_examples():
    assert pnl_ratio([trade(2), trade(-1)]) == 2.0
    assert pnl_ratio([trade(5), trade(-5), trade(5), trade(-5)]) == 1.0
    assert pnl_ratio([trade(2)]) is None
    assert pnl_ratio([trade(-2)]) is None


def test_sharpe_degenerate():
    assert sharpe([100.0] * 10) is None
    assert sharpe([100.0 * 1.01**i for i in range(30)]) is None
    assert sharpe([100.0, 101.0]) is None


def test_sharpe_value():
    eq = [100, 110, 99, 120, 118]
    r = np.diff(eq) / np.asarray(eq[:-1], float)
    assert sharpe(eq) == pytest.approx(r.mean() / r.std() * math.sqrt(252), rel=1e-12)


def test_sortino_degenerate_and_value():
    assert sortino([100.0] * 5) is None
    assert sortino([100, 101, 103, 110]) is None
    # both losses are -10%, so the downside spread is zero
    assert sortino([100, 90, 99, 89.1, 120]) is None
    eq = [100, 90, 99, 79.2, 120]
    r = np.diff(eq) / np.asarray(eq[:-1], float)
    assert sortino(eq) == pytest.approx(r.mean() / r[r < 0].std() * math.sqrt(252), rel=1e-12)


def test_max_drawdown_examples():
    assert max_drawdown([100, 50, 75]) == 0.5
    assert max_drawdown([1, 2, 3, 4]) == 0.0
    assert max_drawdown([100, 120, 60, 200, 150]) == 0.5


def test_accumulated_profit_examples():
    ap = accumulated_profit([ledger("A")])
    assert (ap.gain, ap.loss, ap.ap) == (0, 0, 0)
    ap = accumulated_profit([ledger("A", [trade(5)]), ledger("B", [trade(-2)])])
    assert (ap.gain, ap.loss, ap.ap) == (5, -2, 3)


def test_return_moments_examples():
    m = return_moments([-0.1, 0.1])
    assert m.mean == 0 and m.skewness == 0 and m.kurtosis == pytest.approx(1.0)
    m = return_moments([0.02] * 7)
    assert m.mean == pytest.approx(0.02) and m.skewness is None and m.kurtosis is None
    assert return_moments([]).mean is None
    x = [0.1, -0.05, 0.3, 0.0, -0.2]
    assert return_moments(x, excess_kurtosis=True).kurtosis == pytest.approx(return_moments(x).kurtosis - 3)


def test_moments_match_oracle_random():
    rng = np.random.default_rng(5)
    for _ in range(50):
        x = rng.standard_t(4, size=int(rng.integers(2, 80))).tolist()
        m = return_moments(x)
        mean, skew, kurt = oracles.moments(x)
        assert m.mean == pytest.approx(mean, rel=1e-12, abs=1e-15)
        assert m.skewness == pytest.approx(skew, rel=1e-10, abs=1e-12)
        assert m.kurtosis == pytest.approx(kurt, rel=1e-10)


# -- aggregation ------------------------------------------------------------------

def _compare_report(rep: StrategyReport, expected: dict, tol=1e-10):
    for key, want in expected.items():
        got = getattr(rep, key)
        if want is None:
            assert got is None, key
        else:
            assert got == pytest.approx(want, rel=tol, abs=tol), key


def test_fixture_reports_match_oracle(stocks10):
    universe, data = stocks10
    for spec in all_strategies():
        run = run_universe(universe, spec, ExecutionConfig(), data)
        rep = aggregate(run.ledgers)
        _compare_report(rep, oracles.report(run.ledgers))
        assert rep.nt == rep.wins + rep.losses + rep.flat
        assert rep.accumulated_profit == rep.accumulated_gain + rep.accumulated_loss
        assert rep.policy == AggregationPolicy()


def test_single_symbol_equals_per_symbol():
    series = random_series(11, 400)
    led = run_backtest(series, SignalSeries(np.random.default_rng(1).choice([-1, 0, 0, 1], 400)))
    rep = aggregate([led])
    assert rep.win_rate == win_rate(led.trades)
    assert rep.pnl_ratio == pnl_ratio(led.trades)
    assert rep.sharpe == sharpe(led.equity) and rep.sortino == sortino(led.equity)
    assert rep.mdd == max_drawdown(led.equity)


def test_two_identical_symbols_same_ratios():
    series = random_series(12, 400)
    led = run_backtest(series, SignalSeries(np.random.default_rng(2).choice([-1, 0, 0, 1], 400)))
    twin = TradeLedger("TWIN", led.trades, led.dates, led.cash, led.shares, led.equity)
    one, two = aggregate([led]), aggregate([led, twin])
    for key in ("win_rate", "pnl_ratio", "sharpe", "sortino", "mdd", "mean_ret"):
        assert getattr(two, key) == pytest.approx(getattr(one, key), rel=1e-12), key
    # counts and currency totals are sums, so they double
    assert two.nt == 2 * one.nt
    assert two.accumulated_profit == pytest.approx(2 * one.accumulated_profit)


def test_permutation_invariance(stocks10):
    universe, data = stocks10
    run = run_universe(universe, all_strategies()[0], ExecutionConfig(), data)
    base = aggregate(run.ledgers).to_dict()
    rng = np.random.default_rng(0)
    for _ in range(5):
        shuffled = [run.ledgers[i] for i in rng.permutation(len(run.ledgers))]
        assert aggregate(shuffled).to_dict() == base


def test_undefined_symbols_skipped_in_mean():
    flat = ledger("F", equity=[5.0] * 10)
    moving = ledger("M", equity=[100, 90, 120, 80, 130])
    rep = aggregate([flat, moving])
    assert rep.sharpe == sharpe(moving.equity)
    assert rep.mdd == pytest.approx((0.0 + max_drawdown(moving.equity)) / 2)
    assert aggregate([]).sharpe is None and aggregate([]).nt == 0


def test_trade_basis_policy():
    trades = [trade(1, 0.1), trade(-1, -0.05), trade(2, 0.2)]
    rep = aggregate([ledger("A", trades)], AggregationPolicy(sharpe_basis="trade"))
    r = np.array([0.1, -0.05, 0.2])
    assert rep.sharpe == pytest.approx(r.mean() / r.std())
    with pytest.raises(ValueError):
        AggregationPolicy(sharpe_basis="weekly")
    with pytest.raises(ValueError):
        AggregationPolicy(trade_stats="per_symbol")


def test_report_roundtrip():
    rep = aggregate([ledger("A", [trade(3), trade(-1)], [100, 103, 102])], strategy="s", universe="u")
    assert StrategyReport.from_dict(rep.to_dict()) == rep


# -- properties -------------------------------------------------------------------

def _bars(prices):
    start = D(2021, 1, 4).toordinal()
    return BarSeries.from_bars(
        "P", [Bar(D.fromordinal(start + i), p, p, p, p, 100.0) for i, p in enumerate(prices)]
    )


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.sampled_from([1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]), min_size=3, max_size=8),
    st.lists(st.sampled_from([-1, 0, 1]), min_size=8, max_size=8),
)
def test_doubling_cash_with_divisible_prices(prices, codes):
    series = _bars(prices)
    signals = SignalSeries(np.array(codes[: len(prices)]))
    a = run_backtest(series, signals, ExecutionConfig(initial_cash=2.0**30))
    b = run_backtest(series, signals, ExecutionConfig(initial_cash=2.0**31))
    assert [t.ret for t in a.trades] == [t.ret for t in b.trades]
    assert win_rate(a.trades) == win_rate(b.trades)
    assert sharpe(a.equity) == sharpe(b.equity)
    assert sortino(a.equity) == sortino(b.equity)
    assert max_drawdown(a.equity) == max_drawdown(b.equity)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 40))
def test_hold_tail_keeps_trade_stats(seed, tail):
    full = random_series(seed, 120 + tail)
    head = full.slice(0, 120)
    codes = np.random.default_rng(seed).choice([-1, 0, 0, 0, 1], 120)
    # a signal in the last two bars cannot fill without the tail, so it would change the trades
    codes[-2:] = 0
    short = run_backtest(head, SignalSeries(codes))
    assume(not any(t.forced_exit for t in short.trades))
    long = run_backtest(full, SignalSeries(np.concatenate([codes, np.zeros(tail, dtype=int)])))
    assert long.trades == short.trades
    assert max_drawdown(long.equity) <= max_drawdown(short.equity)
    assert return_moments([t.ret for t in long.trades]) == return_moments([t.ret for t in short.trades])

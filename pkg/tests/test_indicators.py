import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import close_list, random_series
from macdlab.errors import NonPositiveMiddle, SeriesTooShort, WindowTooLarge, ZeroVolumeWindow
from macdlab.indicators import (
    IndicatorSeries,
    MacdParams,
    bbw,
    bollinger,
    daily_volatility,
    ema,
    macd,
    mfi,
    rsi,
    sar,
    sar_trace,
    sma,
    typical_price,
    vpvma,
    vwma,
)
from macdlab.marketdata import Bar, BarSeries

D = __import__("datetime").date


def bars_from(close, high=None, low=None, open_=None, volume=None):
    n = len(close)
    high = high if high is not None else [c + 1 for c in close]
    low = low if low is not None else [c - 1 for c in close]
    open_ = open_ if open_ is not None else list(close)
    volume = volume if volume is not None else [1000.0] * n
    start = D(2020, 1, 1).toordinal()
    return BarSeries.from_bars(
        "T", [Bar(D.fromordinal(start + i), open_[i], high[i], low[i], close[i], volume[i]) for i in range(n)]
    )


# -- IndicatorSeries -----------------------------------------------------------

def test_series_warmup_contract():
    s = sma([1, 2, 3, 4], 2)
    assert s.warmup_len == 1 and len(s) == 4
    assert s.to_list() == [None, 1.5, 2.5, 3.5]
    assert not s.is_defined(0) and s.is_defined(1)
    with pytest.raises(ValueError):
        s.values[1] = 0.0


# -- SMA / EMA -------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 3, 7])
def test_sma_constant(n):
    assert all(v == 4.25 for v in sma([4.25] * 10, n).defined)


def test_sma_random_oracle():
    x = np.random.default_rng(1).normal(size=50).tolist()
    close_list(sma(x, 14).to_list(), oracles.sma(x, 14), 1e-12)


def test_window_too_large():
    with pytest.raises(WindowTooLarge):
        sma([1, 2, 3], 4)
    with pytest.raises(WindowTooLarge):
        ema([1, 2, 3], 4)
    with pytest.raises(WindowTooLarge):
        rsi([1, 2, 3], 3)


def test_ema_constant_and_hand_recursion():
    assert all(v == 7.0 for v in ema([7.0] * 20, 5).defined)
    assert ema([1, 2, 3], 2).to_list() == [None, 1.5, 2.5]


def test_ema_random_oracle_and_bounded():
    x = np.random.default_rng(2).normal(10, 3, size=200)
    e = ema(x, 9)
    close_list(e.to_list(), oracles.ema(x.tolist(), 9), 1e-12)
    # an average never leaves the range of what it has seen
    for t in range(8, 200):
        seen = x[: t + 1]
        assert seen.min() - 1e-12 <= e.values[t] <= seen.max() + 1e-12


# -- MACD -------------------------------------------------------------------------

def test_macd_constant_zero():
    lines = macd([50.0] * 60)
    for s in lines:
        assert np.allclose(s.defined, 0.0, atol=1e-12)
    assert lines.hist.warmup_len == 25 + 8
    assert lines.macd.warmup_len == 25


def test_macd_ramp_converges_positive():
    ramp = [100 + 0.5 * t for t in range(400)]
    line = macd(ramp).macd.values
    oracle = oracles.macd(ramp, 12, 26, 9)[0]
    close_list(line.tolist()[25:], oracle[25:], 1e-10)
    assert (line[25:] > 0).all()
    # EMA lag on a ramp of slope s with period n tends to s*(n-1)/2
    assert line[-1] == pytest.approx(0.5 * (25 - 11) / 2, rel=1e-9)
    assert abs(line[-1] - line[-2]) < 1e-9


def test_macd_fixture_oracle(stocks10):
    for series in stocks10[1].values():
        ours = macd(series.close, MacdParams(12, 26, 9))
        ref = oracles.macd(series.close.tolist(), 12, 26, 9)
        for a, b in zip(ours, ref):
            close_list(a.to_list(), b, 1e-10)


def test_macd_params_validated():
    with pytest.raises(ValueError):
        macd([1.0] * 100, MacdParams(26, 12, 9))
    with pytest.raises(ValueError):
        macd([1.0] * 100, MacdParams(5, 10, 0))
    with pytest.raises(WindowTooLarge):
        macd([1.0] * 30, MacdParams(12, 26, 9))


# -- Bollinger / BBW ---------------------------------------------------------------

def test_bollinger_constant_collapses():
    b = bollinger([3.0] * 30)
    assert np.array_equal(b.lower.defined, b.upper.defined)
    assert np.allclose(bbw(*b).defined, 0.0)


def test_bollinger_alternating_offset():
    b = bollinger([1, 3] * 10, n=2, k=2)
    assert np.allclose(b.upper.defined - b.middle.defined, 2.0)
    assert np.allclose(b.middle.defined - b.lower.defined, 2.0)


def test_bbw_arithmetic():
    lo = IndicatorSeries(np.array([8.0]), 0)
    mid = IndicatorSeries(np.array([10.0]), 0)
    up = IndicatorSeries(np.array([12.0]), 0)
    assert bbw(lo, mid, up).values[0] == pytest.approx(0.4)
    with pytest.raises(NonPositiveMiddle):
        bbw(lo, IndicatorSeries(np.array([0.0]), 0), up)


def test_bollinger_fixture_oracle(stocks10):
    series = next(iter(stocks10[1].values()))
    close = series.close.tolist()
    for ours, ref in zip(bollinger(series.close), oracles.bollinger(close)):
        close_list(ours.to_list(), ref, 1e-10)
    close_list(bbw(*bollinger(series.close)).to_list(), oracles.bbw(close), 1e-10)
    sample = bollinger(series.close, ddof=1)
    close_list(sample.upper.to_list(), oracles.bollinger(close, sample=True)[2], 1e-10)


# -- RSI --------------------------------------------------------------------------

def test_rsi_monotone_limits():
    assert set(rsi(list(range(1, 40))).defined) == {100.0}
    assert set(rsi(list(range(40, 1, -1))).defined) == {0.0}
    assert rsi(list(range(1, 40)), 14).warmup_len == 14


def test_rsi_fixture_oracle(stocks10):
    for series in stocks10[1].values():
        close_list(rsi(series.close).to_list(), oracles.rsi(series.close.tolist()), 1e-10)


# -- TP / MFI ----------------------------------------------------------------------

def test_typical_price():
    s = bars_from([10.0], high=[12.0], low=[8.0])
    assert typical_price(s).values[0] == 10.0
    s = bars_from([5.0], high=[5.0], low=[5.0])
    assert typical_price(s).values[0] == 5.0


def test_mfi_monotone_limits():
    up = [float(10 + t) for t in range(30)]
    assert set(mfi(bars_from(up)).defined) == {100.0}
    down = up[::-1]
    assert set(mfi(bars_from(down)).defined) == {0.0}


def test_mfi_unchanged_tp_counts_in_neither():
    close = [10.0, 11.0, 11.0, 10.0]
    m = mfi(bars_from(close), n=3).values[3]
    # flows: +11*1000, none, -10*1000
    assert m == pytest.approx(100 - 100 / (1 + 11 / 10))


def test_tp_mfi_fixture_oracle(stocks10):
    for series in stocks10[1].values():
        bars = series.bars
        close_list(typical_price(series).to_list(), oracles.typical_price(bars), 1e-12)
        close_list(mfi(series).to_list(), oracles.mfi(bars), 1e-10)


# -- SAR --------------------------------------------------------------------------

def test_sar_rising_stays_below_and_af_ratchets():
    close = [100 + t for t in range(40)]
    s = bars_from(close, high=[c + 0.5 for c in close], low=[c - 0.5 for c in close])
    trace = sar_trace(s)
    assert all(st.uptrend for st in trace[1:])
    assert all(st.sar <= lo for st, lo in zip(trace[1:], s.low[1:]))
    assert trace[-1].af == pytest.approx(0.2)


def test_sar_reversal_fixture(sar_fixture):
    trace = sar_trace(sar_fixture)
    flips = [t for t in range(2, len(trace)) if trace[t].uptrend != trace[t - 1].uptrend]
    assert flips == [6]
    assert sar_fixture.low[6] <= 10.625712 + 1e-12
    expected = [None, 9.5, 9.5, 9.6, 9.804, 10.13968, 15.0, 15.0]
    close_list(sar(sar_fixture).to_list(), expected, 1e-12)
    assert trace[6].ep == 9.0 and trace[6].af == 0.02
    assert trace[7].ep == 8.8 and trace[7].af == pytest.approx(0.04)


def test_sar_fixture_oracle_trace(stocks10):
    for series in stocks10[1].values():
        ours = sar_trace(series)
        ref = oracles.sar_trace(series.bars)
        assert ours[0] is None and ref[0] is None
        for a, b in zip(ours[1:], ref[1:]):
            assert a.uptrend == b["up"]
            assert a.sar == pytest.approx(b["sar"], abs=1e-10)
            assert a.ep == b["ep"]
            assert a.af == pytest.approx(b["af"], abs=1e-12)


def test_sar_state_invariants(stocks10):
    for series in stocks10[1].values():
        for t, s in enumerate(sar_trace(series)[1:], start=1):
            assert 0.02 - 1e-12 <= s.af <= 0.2 + 1e-12
            if s.uptrend:
                assert s.sar <= series.low[t]
            else:
                assert s.sar >= series.high[t]


def test_sar_too_short():
    with pytest.raises(SeriesTooShort):
        sar(bars_from([1.0]))


# -- VWMA / DV / VPVMA ----------------------------------------------------------------

def test_vwma_examples():
    assert vwma([10, 20], [1, 3], 2).values[1] == 17.5
    assert set(vwma([4.0] * 6, [1, 5, 2, 8, 3, 9], 3).defined) == {4.0}
    with pytest.raises(ZeroVolumeWindow):
        vwma([1, 2, 3], [1, 0, 0], 2)


def test_daily_volatility_examples():
    assert daily_volatility(Bar(D(2020, 1, 1), 5, 5, 5, 5, 1)) == 0.0
    assert daily_volatility(Bar(D(2020, 1, 1), 8, 12, 10, 10, 1)) == pytest.approx(math.sqrt(2))


def test_vpvma_constant_price_is_zero():
    flat = bars_from([10.0] * 80, high=[10.0] * 80, low=[10.0] * 80)
    lines = vpvma(flat)
    assert np.all(lines.vpvma.defined == 0) and np.all(lines.vpvmas.defined == 0)
    varying = bars_from([10.0] * 80, high=[10.0] * 80, low=[10.0] * 80, volume=[100.0 + 37 * (t % 5) for t in range(80)])
    assert np.all(vpvma(varying).vpvma.defined == 0)


def test_vpvma_fixture_oracle(stocks10):
    for series in stocks10[1].values():
        ours = vpvma(series, MacdParams(12, 26, 9))
        ref = oracles.vpvma(series.bars, 12, 26, 9)
        close_list(ours.vpvma.to_list(), ref[0], 1e-9)
        close_list(ours.vpvmas.to_list(), ref[1], 1e-9)


def test_vwma_dv_fixture_oracle(stocks10):
    series = next(iter(stocks10[1].values()))
    tp = oracles.typical_price(series.bars)
    close_list(vwma(tp, series.volume, 12).to_list(), oracles.vwma(tp, series.volume.tolist(), 12), 1e-10)
    for bar in series.bars[:50]:
        assert daily_volatility(bar) == pytest.approx(oracles.daily_volatility(bar), abs=1e-12)


# -- properties -------------------------------------------------------------------

def _all_indicators(series):
    lines = macd(series.close)
    vp = vpvma(series)
    return {
        "sma": sma(series.close, 14),
        "ema": ema(series.close, 14),
        "macd": lines.macd,
        "signal": lines.signal,
        "hist": lines.hist,
        "bbw": bbw(*bollinger(series.close)),
        "rsi": rsi(series.close),
        "mfi": mfi(series),
        "tp": typical_price(series),
        "vwma": vwma(typical_price(series).values, series.volume, 14),
        "vpvma": vp.vpvma,
        "vpvmas": vp.vpvmas,
    }


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_ranges(seed):
    series = random_series(seed, 200)
    ind = _all_indicators(series)
    for name in ("rsi", "mfi"):
        v = ind[name].defined
        assert ((v >= 0) & (v <= 100)).all()
    assert (ind["bbw"].defined >= 0).all()
    for name, s in ind.items():
        assert len(s) == len(series)
        assert np.isfinite(s.defined).all(), name
        assert np.isnan(s.values[: s.warmup_len]).all(), name


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.25, 0.5, 2.0, 4.0, 1024.0]))
def test_scale_covariance(seed, lam):
    # powers of two scale floating-point values exactly
    series = random_series(seed, 200)
    scaled = series.scaled(lam)
    a, b = macd(series.close), macd(scaled.close)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(y.defined, lam * x.defined)
    np.testing.assert_allclose(rsi(scaled.close).defined, rsi(series.close).defined, rtol=0, atol=1e-9)
    np.testing.assert_allclose(mfi(scaled).defined, mfi(series).defined, rtol=0, atol=1e-9)
    np.testing.assert_array_equal(sar(scaled).defined, lam * sar(series).defined)


WINDOWED = ("sma", "bbw", "mfi", "tp", "vwma")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 60))
def test_shift_equivariance_windowed(seed, k):
    series = random_series(seed, 260)
    full = _all_indicators(series)
    tail = _all_indicators(series.slice(k))
    for name in WINDOWED:
        f, t = full[name], tail[name]
        start = t.warmup_len
        np.testing.assert_allclose(t.values[start:], f.values[k + start :], rtol=1e-9, atol=1e-9, err_msg=name)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 60))
def test_shift_equivariance_recursive_converges(seed, k):
    # seeded recursions (EMA, Wilder RSI, SAR) remember where they started, so
    # the suffix result only converges to the full-series result
    series = random_series(seed, 600)
    full = _all_indicators(series)
    full["sar"] = sar(series)
    tail = _all_indicators(series.slice(k))
    tail["sar"] = sar(series.slice(k))
    for name in full:
        if name in WINDOWED:
            continue
        f, t = full[name].values[-100:], tail[name].values[-100:]
        scale = max(1.0, float(np.abs(f).max()))
        assert np.abs(f - t).max() <= 1e-6 * scale, name


def test_no_defined_value_depends_on_undefined(stocks10):
    # warm-up entries are NaN, so any defined value computed from one would be NaN too
    series = next(iter(stocks10[1].values()))
    for name, s in _all_indicators(series).items():
        assert np.isfinite(s.defined).all(), name
    line = macd(series.close).macd
    sig = ema(line, 9)
    assert sig.warmup_len == line.warmup_len + 8

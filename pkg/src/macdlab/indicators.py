"""Technical indicators over daily bars.

Every function returns :class:`IndicatorSeries` aligned 1:1 with its input,
with an explicit warm-up prefix of NaN. Inputs that already carry a warm-up
(for instance the MACD line fed into the signal EMA) are handled by running
the computation on the defined suffix only, so a defined output never
depends on an undefined input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter

from .errors import NonPositiveMiddle, SeriesTooShort, WindowTooLarge, ZeroVolumeWindow
from .marketdata import Bar, BarSeries


@dataclass(frozen=True, eq=False)
class IndicatorSeries:
    values: np.ndarray
    warmup_len: int

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if not 0 <= self.warmup_len <= len(vals):
            raise ValueError(f"warmup_len {self.warmup_len} out of range for length {len(vals)}")

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    @property
    def defined(self) -> np.ndarray:
        return self.values[self.warmup_len:]

    def is_defined(self, i: int) -> bool:
        return i >= self.warmup_len

    def to_list(self) -> list[float | None]:
        return [None if i < self.warmup_len else float(v) for i, v in enumerate(self.values)]

    def __sub__(self, other: "IndicatorSeries") -> "IndicatorSeries":
        return _combine(self, other, np.subtract)

    def __mul__(self, other: "IndicatorSeries") -> "IndicatorSeries":
        return _combine(self, other, np.multiply)


SeriesLike = Union[IndicatorSeries, np.ndarray, Sequence[float]]


class MacdParams(NamedTuple):
    fast: int = 12
    slow: int = 26
    signal: int = 9

    def check(self) -> "MacdParams":
        if not (1 <= self.fast < self.slow and self.signal >= 1):
            raise ValueError(f"invalid MACD parameters {tuple(self)}: need 1 <= fast < slow and signal >= 1")
        return self


class MacdLines(NamedTuple):
    macd: IndicatorSeries
    signal: IndicatorSeries
    hist: IndicatorSeries


class BollingerBands(NamedTuple):
    lower: IndicatorSeries
    middle: IndicatorSeries
    upper: IndicatorSeries


class VpvmaLines(NamedTuple):
    vpvma: IndicatorSeries
    vpvmas: IndicatorSeries


@dataclass(frozen=True)
class SarState:
    uptrend: bool
    sar: float
    ep: float
    af: float


def _split(x: SeriesLike) -> tuple[np.ndarray, int]:
    """Return (values, warm-up length) for any accepted series input."""
    if isinstance(x, IndicatorSeries):
        return x.values, x.warmup_len
    arr = np.asarray(x, dtype=np.float64)
    nan = np.isnan(arr)
    warm = int(np.argmin(nan)) if not nan.all() else len(arr)
    if nan[warm:].any():
        raise ValueError("undefined values after the warm-up prefix")
    return arr, warm


def _pack(defined: np.ndarray, total: int) -> IndicatorSeries:
    out = np.full(total, np.nan)
    warm = total - len(defined)
    out[warm:] = defined
    return IndicatorSeries(out, warm)


def _combine(a: IndicatorSeries, b: IndicatorSeries, op) -> IndicatorSeries:
    if len(a) != len(b):
        raise ValueError(f"length mismatch {len(a)} vs {len(b)}")
    warm = max(a.warmup_len, b.warmup_len)
    return _pack(op(a.values[warm:], b.values[warm:]), len(a))


def _check_window(n: int, available: int, what: str) -> None:
    if n < 1:
        raise ValueError(f"{what} window must be >= 1, got {n}")
    if n > available:
        raise WindowTooLarge(f"{what} window {n} exceeds {available} defined values")


def sma(values: SeriesLike, n: int) -> IndicatorSeries:
    arr, warm = _split(values)
    data = arr[warm:]
    _check_window(n, len(data), "SMA")
    return _pack(sliding_window_view(data, n).mean(axis=1), len(arr))


def ema(values: SeriesLike, n: int) -> IndicatorSeries:
    """Exponential moving average, alpha = 2/(n+1), seeded with the SMA of the first n values."""
    arr, warm = _split(values)
    data = arr[warm:]
    _check_window(n, len(data), "EMA")
    alpha = 2.0 / (n + 1)
    seed = data[:n].mean()
    tail, _ = lfilter([alpha], [1.0, alpha - 1.0], data[n:], zi=[(1.0 - alpha) * seed])
    return _pack(np.concatenate(([seed], tail)), len(arr))


def macd(close: SeriesLike, p: MacdParams = MacdParams()) -> MacdLines:
    p = MacdParams(*p).check()
    line = ema(close, p.fast) - ema(close, p.slow)
    signal = ema(line, p.signal)
    return MacdLines(line, signal, line - signal)


def rolling_std(values: SeriesLike, n: int, ddof: int = 0) -> IndicatorSeries:
    arr, warm = _split(values)
    data = arr[warm:]
    _check_window(n, len(data), "std")
    if n <= ddof:
        raise ValueError(f"std window {n} too small for ddof={ddof}")
    return _pack(sliding_window_view(data, n).std(axis=1, ddof=ddof), len(arr))


def bollinger(close: SeriesLike, n: int = 14, k: float = 2.0, ddof: int = 0) -> BollingerBands:
    """Bands at ``k`` rolling standard deviations (population by default) around the SMA."""
    if n < 2:
        raise ValueError(f"Bollinger window must be >= 2, got {n}")
    middle = sma(close, n)
    offset = rolling_std(close, n, ddof).values * k
    return BollingerBands(
        IndicatorSeries(middle.values - offset, middle.warmup_len),
        middle,
        IndicatorSeries(middle.values + offset, middle.warmup_len),
    )


def bbw(lower: IndicatorSeries, middle: IndicatorSeries, upper: IndicatorSeries) -> IndicatorSeries:
    warm = max(lower.warmup_len, middle.warmup_len, upper.warmup_len)
    mid = middle.values[warm:]
    if (mid <= 0).any():
        raise NonPositiveMiddle("Bollinger middle band is not positive")
    return _pack((upper.values[warm:] - lower.values[warm:]) / mid, len(middle))


def _oscillator(up: np.ndarray, down: np.ndarray) -> np.ndarray:
    """100 - 100/(1 + up/down) with the 0/0, x/0 and 0/x limits closed off."""
    out = np.full(len(up), 50.0)
    both = (up > 0) & (down > 0)
    out[both] = 100.0 - 100.0 / (1.0 + up[both] / down[both])
    out[(up > 0) & (down == 0)] = 100.0
    out[(up == 0) & (down > 0)] = 0.0
    return out


def wilder_average(x: np.ndarray, n: int) -> np.ndarray:
    """Mean of the first ``n`` values, then ``(prev*(n-1) + x_t)/n``; length ``len(x)-n+1``."""
    seed = x[:n].mean()
    k = (n - 1) / n
    tail, _ = lfilter([1.0 / n], [1.0, -k], x[n:], zi=[k * seed])
    return np.concatenate(([seed], tail))


def rsi(close: SeriesLike, n: int = 14) -> IndicatorSeries:
    """Wilder RSI; the first value sits at index ``n`` (needs n price changes)."""
    arr, warm = _split(close)
    data = arr[warm:]
    if n < 1:
        raise ValueError(f"RSI window must be >= 1, got {n}")
    if len(data) <= n:
        raise WindowTooLarge(f"RSI window {n} needs more than {n} prices, got {len(data)}")
    change = np.diff(data)
    gain = np.maximum(change, 0.0)
    loss = np.maximum(-change, 0.0)
    return _pack(_oscillator(wilder_average(gain, n), wilder_average(loss, n)), len(arr))


def _columns(bars) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(bars, BarSeries):
        return bars.open, bars.high, bars.low, bars.close, bars.volume
    bars = list(bars)
    cols = np.array([(b.open, b.high, b.low, b.close, b.volume) for b in bars], dtype=np.float64).reshape(-1, 5)
    return tuple(cols.T)


def typical_price(bars) -> IndicatorSeries:
    _, h, l, c, _ = _columns(bars)
    return IndicatorSeries((h + l + c) / 3.0, 0)


def mfi(bars, n: int = 14) -> IndicatorSeries:
    """Money Flow Index over the trailing ``n`` typical-price changes.

    Days whose typical price is unchanged add to neither flow sum.
    """
    _, h, l, c, v = _columns(bars)
    if n < 1:
        raise ValueError(f"MFI window must be >= 1, got {n}")
    if len(c) <= n:
        raise WindowTooLarge(f"MFI window {n} needs more than {n} bars, got {len(c)}")
    tp = (h + l + c) / 3.0
    flow = (tp * v)[1:]
    up = tp[1:] > tp[:-1]
    down = tp[1:] < tp[:-1]
    pos = sliding_window_view(np.where(up, flow, 0.0), n).sum(axis=1)
    neg = sliding_window_view(np.where(down, flow, 0.0), n).sum(axis=1)
    return _pack(_oscillator(pos, neg), len(c))


def _sar_loop(high, low, close, af0: float, afmax: float, record: bool):
    n = len(close)
    out = [float("nan")] * n
    states: list[SarState | None] = [None] * n
    up = close[1] >= close[0]
    if up:
        sar, ep = min(low[0], low[1]), max(high[0], high[1])
    else:
        sar, ep = max(high[0], high[1]), min(low[0], low[1])
    af = af0
    out[1] = sar
    if record:
        states[1] = SarState(up, sar, ep, af)
    for t in range(2, n):
        sar = sar + af * (ep - sar)
        if up:
            sar = min(sar, low[t - 1], low[t - 2])
            if low[t] <= sar:
                up = False
                sar = max(ep, high[t], high[t - 1])
                ep, af = low[t], af0
            elif high[t] > ep:
                ep, af = high[t], min(af + af0, afmax)
        else:
            sar = max(sar, high[t - 1], high[t - 2])
            if high[t] >= sar:
                up = True
                sar = min(ep, low[t], low[t - 1])
                ep, af = high[t], af0
            elif low[t] < ep:
                ep, af = low[t], min(af + af0, afmax)
        out[t] = sar
        if record:
            states[t] = SarState(up, sar, ep, af)
    return out, states


def _check_sar_args(bars, af0: float, afmax: float):
    _, h, l, c, _ = _columns(bars)
    if len(c) < 2:
        raise SeriesTooShort(f"SAR needs at least 2 bars, got {len(c)}")
    if not 0 < af0 <= afmax:
        raise ValueError(f"need 0 < af0 <= afmax, got {af0}, {afmax}")
    return h.tolist(), l.tolist(), c.tolist()


def sar(bars, af0: float = 0.02, afmax: float = 0.2) -> IndicatorSeries:
    """Parabolic stop-and-reverse, first defined at bar 1.

    The initial trend comes from the first two closes. Each bar's SAR is
    clamped outside the previous two bars' range; a touch or penetration
    flips the trend, moves SAR to the old extreme point (kept outside the
    current and previous bar) and resets the acceleration factor.
    """
    out, _ = _sar_loop(*_check_sar_args(bars, af0, afmax), af0, afmax, record=False)
    return IndicatorSeries(np.array(out), 1)


def sar_trace(bars, af0: float = 0.02, afmax: float = 0.2) -> list[SarState | None]:
    """Per-bar SAR state (``None`` at bar 0)."""
    _, states = _sar_loop(*_check_sar_args(bars, af0, afmax), af0, afmax, record=True)
    return states


def vwma(tp: SeriesLike, volume: SeriesLike, n: int) -> IndicatorSeries:
    """Volume-weighted mean of ``tp`` over the trailing ``n`` bars."""
    price, warm_p = _split(tp)
    vol, warm_v = _split(volume)
    if len(price) != len(vol):
        raise ValueError(f"length mismatch {len(price)} vs {len(vol)}")
    warm = max(warm_p, warm_v)
    p, v = price[warm:], vol[warm:]
    _check_window(n, len(p), "VWMA")
    den = sliding_window_view(v, n).sum(axis=1)
    if (den <= 0).any():
        first = int(np.flatnonzero(den <= 0)[0]) + warm + n - 1
        raise ZeroVolumeWindow(f"zero total volume in the window ending at index {first}")
    num = sliding_window_view(p * v, n).sum(axis=1)
    return _pack(num / den, len(price))


def daily_volatility(bar: Bar) -> float:
    """Population standard deviation of one bar's open, high, low and close."""
    return float(np.std([bar.high, bar.low, bar.close, bar.open]))


def daily_volatility_series(bars) -> IndicatorSeries:
    o, h, l, c, _ = _columns(bars)
    return IndicatorSeries(np.std(np.vstack([h, l, c, o]), axis=0), 0)


def vpvma(bars, p: MacdParams = MacdParams()) -> VpvmaLines:
    """Volume-price-volatility MACD analogue and its SMA signal line."""
    p = MacdParams(*p).check()
    tp = typical_price(bars)
    _, _, _, _, volume = _columns(bars)
    dv = daily_volatility_series(bars)
    short_leg = ema(vwma(tp, volume, p.fast) * dv, p.fast)
    long_leg = ema(vwma(tp, volume, p.slow) * dv, p.slow)
    line = short_leg - long_leg
    return VpvmaLines(line, sma(line, p.signal))

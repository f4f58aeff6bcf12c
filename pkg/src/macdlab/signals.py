"""Per-bar Buy/Sell/Hold rules for the MACD strategy family.

Every rule is vectorised over the whole series and yields Hold wherever an
input it looks at (including the look-back bars) is still in warm-up.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import indicators as ind
from .errors import MisalignedSeries
from .indicators import IndicatorSeries, MacdParams
from .marketdata import BarSeries


class Signal(enum.IntEnum):
    SELL = -1
    HOLD = 0
    BUY = 1


@dataclass(frozen=True, eq=False)
class SignalSeries:
    codes: np.ndarray

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.int8)
        if not np.isin(codes, (-1, 0, 1)).all():
            raise ValueError("signal codes must be -1, 0 or 1")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @classmethod
    def from_masks(cls, buy: np.ndarray, sell: np.ndarray) -> "SignalSeries":
        # a bar meeting both conditions is ambiguous and stays Hold
        codes = buy.astype(np.int8) - sell.astype(np.int8)
        return cls(codes)

    @classmethod
    def hold(cls, n: int) -> "SignalSeries":
        return cls(np.zeros(n, dtype=np.int8))

    def __len__(self) -> int:
        return len(self.codes)

    def __getitem__(self, i: int) -> Signal:
        return Signal(int(self.codes[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SignalSeries):
            return NotImplemented
        return np.array_equal(self.codes, other.codes)

    __hash__ = None

    @property
    def signals(self) -> list[Signal]:
        return [Signal(int(c)) for c in self.codes]

    def buy_indices(self) -> list[int]:
        return np.flatnonzero(self.codes == 1).tolist()

    def sell_indices(self) -> list[int]:
        return np.flatnonzero(self.codes == -1).tolist()


def _aligned(*series) -> int:
    lengths = {len(s) for s in series}
    if len(lengths) != 1:
        raise MisalignedSeries(f"inputs have differing lengths {sorted(lengths)}")
    return lengths.pop()


def _vals(s) -> np.ndarray:
    return s.values if isinstance(s, IndicatorSeries) else np.asarray(s, dtype=np.float64)


def _ready(n: int, first: int) -> np.ndarray:
    """Mask of bars at index >= first."""
    mask = np.zeros(n, dtype=bool)
    mask[max(first, 0):] = True
    return mask


def _warm(*series) -> int:
    return max(s.warmup_len if isinstance(s, IndicatorSeries) else 0 for s in series)


def _prev(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    out[0] = np.nan
    out[1:] = x[:-1]
    return out


def _crossings(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Strict up/down crossings of ``a`` through ``b`` between t-1 and t."""
    pa, pb = _prev(a), _prev(b)
    return (pa < pb) & (a > b), (pa > pb) & (a < b)


# -- MACD rules ------------------------------------------------------------------

def macd_crossover_sig(macd: IndicatorSeries, signal: IndicatorSeries) -> SignalSeries:
    n = _aligned(macd, signal)
    ok = _ready(n, _warm(macd, signal) + 1)
    up, down = _crossings(_vals(macd), _vals(signal))
    return SignalSeries.from_masks(up & ok, down & ok)


def macd_crossover_zero(macd: IndicatorSeries) -> SignalSeries:
    n = len(macd)
    ok = _ready(n, _warm(macd) + 1)
    up, down = _crossings(_vals(macd), np.zeros(n))
    return SignalSeries.from_masks(up & ok, down & ok)


def macd_hist_rule(hist: IndicatorSeries) -> SignalSeries:
    """Buy on a strict negative V in the last three bars, sell on a strict positive peak."""
    h = _vals(hist)
    n = len(h)
    buy = np.zeros(n, dtype=bool)
    sell = np.zeros(n, dtype=bool)
    start = _warm(hist) + 2
    if n > start:
        a, b, c = h[start - 2 : n - 2], h[start - 1 : n - 1], h[start:]
        buy[start:] = (a < 0) & (b < 0) & (c < 0) & (b < a) & (b < c)
        sell[start:] = (a > 0) & (b > 0) & (c > 0) & (b > a) & (b > c)
    return SignalSeries.from_masks(buy, sell)


def macd_crossover_sig_above0(macd: IndicatorSeries, signal: IndicatorSeries) -> SignalSeries:
    n = _aligned(macd, signal)
    ok = _ready(n, _warm(macd, signal) + 1)
    m = _vals(macd)
    up, down = _crossings(m, _vals(signal))
    return SignalSeries.from_masks(up & (m > 0) & ok, down & (m < 0) & ok)


def macd_bb_rule(
    macd: IndicatorSeries,
    signal: IndicatorSeries,
    bbw: IndicatorSeries,
    short_win: int = 10,
    long_win: int = 50,
) -> SignalSeries:
    """Level rule: MACD vs signal agrees with short vs long SMA of band width."""
    n = _aligned(macd, signal, bbw)
    fast, slow = ind.sma(bbw, short_win), ind.sma(bbw, long_win)
    ok = _ready(n, _warm(macd, signal, fast, slow))
    m, s, f, l = _vals(macd), _vals(signal), _vals(fast), _vals(slow)
    return SignalSeries.from_masks((m > s) & (f > l) & ok, (m < s) & (f < l) & ok)


def _sar_flips(sar: IndicatorSeries, close) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = _aligned(sar, close)
    ok = _ready(n, _warm(sar) + 1)
    p, c = _vals(sar), _vals(close)
    below = (_prev(p) > _prev(c)) & (p < c)
    above = (_prev(p) < _prev(c)) & (p > c)
    return below & ok, above & ok, ok


def macd_sar_rule(
    macd: IndicatorSeries, signal: IndicatorSeries, sar: IndicatorSeries, close
) -> SignalSeries:
    _aligned(macd, signal, sar, close)
    flip_below, flip_above, _ = _sar_flips(sar, close)
    ok = _ready(len(macd), _warm(macd, signal))
    m, s = _vals(macd), _vals(signal)
    return SignalSeries.from_masks((m > s) & flip_below & ok, (m < s) & flip_above & ok)


def _trailing(osc: IndicatorSeries, lookback: int, test: Callable[[np.ndarray], np.ndarray], quantifier: str):
    """Per-bar: does ``test`` hold for all (or any) of the last ``lookback`` values."""
    if lookback < 1:
        raise ValueError(f"lookback must be >= 1, got {lookback}")
    if quantifier not in ("all", "any"):
        raise ValueError(f"quantifier must be 'all' or 'any', got {quantifier!r}")
    v = _vals(osc)
    n = len(v)
    out = np.zeros(n, dtype=bool)
    start = _warm(osc) + lookback - 1
    if n > start:
        hits = sliding_window_view(test(v[start - lookback + 1 :]), lookback)
        out[start:] = hits.all(axis=1) if quantifier == "all" else hits.any(axis=1)
    return out


def _macd_oscillator_rule(macd, signal, osc, lower, upper, lookback, quantifier):
    n = _aligned(macd, signal, osc)
    if not lower < upper:
        raise ValueError(f"lower threshold {lower} must be below upper {upper}")
    ok = _ready(n, _warm(macd, signal))
    m, s = _vals(macd), _vals(signal)
    oversold = _trailing(osc, lookback, lambda x: x <= lower, quantifier)
    overbought = _trailing(osc, lookback, lambda x: x >= upper, quantifier)
    return SignalSeries.from_masks((m > s) & oversold & ok, (m < s) & overbought & ok)


def macd_mfi_rule(
    macd: IndicatorSeries,
    signal: IndicatorSeries,
    mfi: IndicatorSeries,
    lower: float = 25,
    upper: float = 70,
    lookback: int = 6,
    quantifier: str = "all",
) -> SignalSeries:
    return _macd_oscillator_rule(macd, signal, mfi, lower, upper, lookback, quantifier)


def macd_rsi_rule(
    macd: IndicatorSeries,
    signal: IndicatorSeries,
    rsi: IndicatorSeries,
    lower: float = 35,
    upper: float = 70,
    lookback: int = 6,
    quantifier: str = "all",
) -> SignalSeries:
    return _macd_oscillator_rule(macd, signal, rsi, lower, upper, lookback, quantifier)


def vpvma_rule(
    vpvma: IndicatorSeries,
    vpvmas: IndicatorSeries,
    bandwidth: float = 0.1,
    sell_mode: str = "literal",
) -> SignalSeries:
    """Band-filtered VPVMA crossover.

    ``sell_mode="literal"`` requires the previous VPVMA to sit at or below its
    signal line for a sell as well as a buy; ``"corrected"`` requires it at or
    above for a sell.
    """
    if bandwidth < 0:
        raise ValueError(f"bandwidth must be >= 0, got {bandwidth}")
    if sell_mode not in ("literal", "corrected"):
        raise ValueError(f"sell_mode must be 'literal' or 'corrected', got {sell_mode!r}")
    n = _aligned(vpvma, vpvmas)
    ok = _ready(n, _warm(vpvma, vpvmas) + 1)
    v, s = _vals(vpvma), _vals(vpvmas)
    pv, ps = _prev(v), _prev(s)
    buy = (v > (1 + bandwidth) * s) & (pv <= ps)
    sell = (v < (1 - 2 * bandwidth) * s) & ((pv <= ps) if sell_mode == "literal" else (pv >= ps))
    return SignalSeries.from_masks(buy & ok, sell & ok)


# -- single-indicator building blocks ----------------------------------------------

def rsi_rule(rsi: IndicatorSeries, lower: float = 30, upper: float = 70) -> SignalSeries:
    ok = _ready(len(rsi), _warm(rsi))
    v = _vals(rsi)
    return SignalSeries.from_masks((v <= lower) & ok, (v >= upper) & ok)


def mfi_rule(mfi: IndicatorSeries, lower: float = 25, upper: float = 75) -> SignalSeries:
    ok = _ready(len(mfi), _warm(mfi))
    v = _vals(mfi)
    return SignalSeries.from_masks((v <= lower) & ok, (v >= upper) & ok)


def bbw_rule(bbw: IndicatorSeries, short_win: int = 10, long_win: int = 50) -> SignalSeries:
    fast, slow = ind.sma(bbw, short_win), ind.sma(bbw, long_win)
    ok = _ready(len(bbw), _warm(fast, slow))
    f, l = _vals(fast), _vals(slow)
    return SignalSeries.from_masks((f > l) & ok, (f < l) & ok)


def sar_rule(sar: IndicatorSeries, close) -> SignalSeries:
    below, above, _ = _sar_flips(sar, close)
    return SignalSeries.from_masks(below, above)


# -- strategies ----------------------------------------------------------------

class StrategyKind(str, enum.Enum):
    MacdCrossoverSig = "MacdCrossoverSig"
    MacdCrossoverZero = "MacdCrossoverZero"
    MacdHist = "MacdHist"
    MacdCrossoverSigAbove0 = "MacdCrossoverSigAbove0"
    MacdBB = "MacdBB"
    MacdSAR = "MacdSAR"
    MacdMFI = "MacdMFI"
    MacdRSI = "MacdRSI"
    VPVMA = "VPVMA"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    StrategyKind.MacdCrossoverSig: "MACD_crossoversig",
    StrategyKind.MacdCrossoverZero: "MACD_crossoverzero",
    StrategyKind.MacdHist: "MACD_hist",
    StrategyKind.MacdCrossoverSigAbove0: "MACD_crossoversigabout0",
    StrategyKind.MacdBB: "MACD&BB",
    StrategyKind.MacdSAR: "MACD&SAR",
    StrategyKind.MacdMFI: "MACD&MFI",
    StrategyKind.MacdRSI: "MACD&RSI",
    StrategyKind.VPVMA: "VPVMA",
}

MACD_RULES = (
    StrategyKind.MacdCrossoverSig,
    StrategyKind.MacdCrossoverZero,
    StrategyKind.MacdHist,
    StrategyKind.MacdCrossoverSigAbove0,
)


@dataclass(frozen=True)
class StrategyParams:
    macd: MacdParams = MacdParams()
    bb_window: int = 14
    bb_k: float = 2.0
    bb_ddof: int = 0
    bbw_short: int = 10
    bbw_long: int = 50
    sar_af0: float = 0.02
    sar_afmax: float = 0.2
    mfi_window: int = 14
    mfi_lower: float = 25
    mfi_upper: float = 70
    rsi_window: int = 14
    rsi_lower: float = 35
    rsi_upper: float = 70
    lookback: int = 6
    quantifier: str = "all"
    bandwidth: float = 0.1
    vpvma_sell_mode: str = "literal"

    def __post_init__(self):
        object.__setattr__(self, "macd", MacdParams(*self.macd).check())
        if not self.mfi_lower < self.mfi_upper:
            raise ValueError("mfi_lower must be below mfi_upper")
        if not self.rsi_lower < self.rsi_upper:
            raise ValueError("rsi_lower must be below rsi_upper")
        if not self.bbw_short < self.bbw_long:
            raise ValueError("bbw_short must be below bbw_long")
        if self.bandwidth < 0:
            raise ValueError("bandwidth must be >= 0")
        if self.lookback < 1:
            raise ValueError("lookback must be >= 1")
        if self.quantifier not in ("all", "any"):
            raise ValueError("quantifier must be 'all' or 'any'")
        if self.vpvma_sell_mode not in ("literal", "corrected"):
            raise ValueError("vpvma_sell_mode must be 'literal' or 'corrected'")

    @classmethod
    def from_dict(cls, doc: dict) -> "StrategyParams":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown strategy parameters: {sorted(unknown)}")
        if "macd" in doc:
            doc["macd"] = MacdParams(*doc["macd"])
        return cls(**doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["macd"] = list(self.macd)
        return doc


@dataclass(frozen=True)
class StrategySpec:
    kind: StrategyKind
    params: StrategyParams = field(default_factory=StrategyParams)
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))

    @property
    def label(self) -> str:
        return self.name or self.kind.label

    def with_macd(self, p: MacdParams) -> "StrategySpec":
        return replace(self, params=replace(self.params, macd=MacdParams(*p)))

    @classmethod
    def from_dict(cls, doc: dict) -> "StrategySpec":
        return cls(
            kind=StrategyKind(doc["kind"]),
            params=StrategyParams.from_dict(doc.get("params", {})),
            name=doc.get("name"),
        )

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "name": self.label, "params": self.params.to_dict()}


def all_strategies() -> list[StrategySpec]:
    """All nine strategies with their default parameter bundles."""
    return [StrategySpec(kind) for kind in StrategyKind]


class IndicatorCache:
    """Memoises indicators for one series so strategies sharing inputs compute them once."""

    def __init__(self, series: BarSeries):
        self.series = series
        self._memo: dict[tuple, object] = {}

    def _get(self, key: tuple, make):
        if key not in self._memo:
            self._memo[key] = make()
        return self._memo[key]

    def macd(self, p: MacdParams) -> ind.MacdLines:
        return self._get(("macd", tuple(p)), lambda: ind.macd(self.series.close, p))

    def bbw(self, n: int, k: float, ddof: int) -> IndicatorSeries:
        return self._get(("bbw", n, k, ddof), lambda: ind.bbw(*ind.bollinger(self.series.close, n, k, ddof)))

    def rsi(self, n: int) -> IndicatorSeries:
        return self._get(("rsi", n), lambda: ind.rsi(self.series.close, n))

    def mfi(self, n: int) -> IndicatorSeries:
        return self._get(("mfi", n), lambda: ind.mfi(self.series, n))

    def sar(self, af0: float, afmax: float) -> IndicatorSeries:
        return self._get(("sar", af0, afmax), lambda: ind.sar(self.series, af0, afmax))

    def vpvma(self, p: MacdParams) -> ind.VpvmaLines:
        return self._get(("vpvma", tuple(p)), lambda: ind.vpvma(self.series, p))


def compute_signals(series: BarSeries, spec: StrategySpec, cache: IndicatorCache | None = None) -> SignalSeries:
    """Run one strategy's indicators and rule over ``series``."""
    cache = cache or IndicatorCache(series)
    p = spec.params
    kind = spec.kind
    if kind is StrategyKind.VPVMA:
        lines = cache.vpvma(p.macd)
        return vpvma_rule(lines.vpvma, lines.vpvmas, p.bandwidth, p.vpvma_sell_mode)
    m = cache.macd(p.macd)
    if kind is StrategyKind.MacdCrossoverSig:
        return macd_crossover_sig(m.macd, m.signal)
    if kind is StrategyKind.MacdCrossoverZero:
        return macd_crossover_zero(m.macd)
    if kind is StrategyKind.MacdHist:
        return macd_hist_rule(m.hist)
    if kind is StrategyKind.MacdCrossoverSigAbove0:
        return macd_crossover_sig_above0(m.macd, m.signal)
    if kind is StrategyKind.MacdBB:
        return macd_bb_rule(m.macd, m.signal, cache.bbw(p.bb_window, p.bb_k, p.bb_ddof), p.bbw_short, p.bbw_long)
    if kind is StrategyKind.MacdSAR:
        return macd_sar_rule(m.macd, m.signal, cache.sar(p.sar_af0, p.sar_afmax), series.close)
    if kind is StrategyKind.MacdMFI:
        return macd_mfi_rule(
            m.macd, m.signal, cache.mfi(p.mfi_window), p.mfi_lower, p.mfi_upper, p.lookback, p.quantifier
        )
    if kind is StrategyKind.MacdRSI:
        return macd_rsi_rule(
            m.macd, m.signal, cache.rsi(p.rsi_window), p.rsi_lower, p.rsi_upper, p.lookback, p.quantifier
        )
    raise ValueError(f"unhandled strategy kind {kind}")

"""Daily OHLCV ingestion, validation and windowing.

Bars are stored column-wise (one numpy array per field) so indicators can
work on whole columns; :class:`Bar` objects are materialised on demand.
"""

from __future__ import annotations

import bisect
import csv
import datetime as dt
import io
import json
import math
import os
import tempfile
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateDate,
    EmptySeries,
    InvalidSeries,
    InvertedRange,
    MalformedHeader,
    MalformedRow,
    NetworkFailure,
    ProviderRejection,
)

CSV_HEADER = ("Date", "Open", "High", "Low", "Close", "Adj Close", "Volume")
REQUIRED_COLUMNS = ("Date", "Open", "High", "Low", "Close", "Volume")

STUDY_START = dt.date(2015, 1, 1)
STUDY_END = dt.date(2021, 8, 28)


@dataclass(frozen=True)
class Bar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: float
    adj_close: float = math.nan


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BarSeries:
    """Ordered daily bars for one symbol.

    Dates must be strictly increasing. The price/volume columns are
    read-only numpy arrays aligned with ``dates``.
    """

    symbol: str
    dates: tuple[dt.date, ...]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    adj_close: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        for name in ("open", "high", "low", "close", "volume", "adj_close"):
            arr = getattr(self, name)
            if not isinstance(arr, np.ndarray) or arr.flags.writeable or arr.dtype != np.float64:
                arr = _frozen(arr)
                object.__setattr__(self, name, arr)
            if arr.shape != (n,):
                raise ValueError(f"column {name} has length {arr.shape}, expected {n}")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise ValueError(f"dates not strictly increasing at {b}")

    @classmethod
    def from_bars(cls, symbol: str, bars: Iterable[Bar]) -> "BarSeries":
        bars = list(bars)
        return cls(
            symbol=symbol,
            dates=tuple(b.date for b in bars),
            open=_frozen([b.open for b in bars]),
            high=_frozen([b.high for b in bars]),
            low=_frozen([b.low for b in bars]),
            close=_frozen([b.close for b in bars]),
            volume=_frozen([b.volume for b in bars]),
            adj_close=_frozen([b.adj_close for b in bars]),
        )

    @property
    def bars(self) -> list[Bar]:
        return [self.bar(i) for i in range(len(self))]

    def bar(self, i: int) -> Bar:
        return Bar(
            date=self.dates[i],
            open=float(self.open[i]),
            high=float(self.high[i]),
            low=float(self.low[i]),
            close=float(self.close[i]),
            volume=float(self.volume[i]),
            adj_close=float(self.adj_close[i]),
        )

    def __len__(self) -> int:
        return len(self.dates)

    def slice(self, start: int, stop: int | None = None) -> "BarSeries":
        """Positional sub-series, same type as ``self``."""
        sl = slice(start, stop)
        return type(self)(
            symbol=self.symbol,
            dates=self.dates[sl],
            open=self.open[sl],
            high=self.high[sl],
            low=self.low[sl],
            close=self.close[sl],
            volume=self.volume[sl],
            adj_close=self.adj_close[sl],
        )

    def scaled(self, factor: float) -> "BarSeries":
        """Copy with every price multiplied by ``factor`` (volume untouched)."""
        return type(self)(
            symbol=self.symbol,
            dates=self.dates,
            open=self.open * factor,
            high=self.high * factor,
            low=self.low * factor,
            close=self.close * factor,
            volume=self.volume,
            adj_close=self.adj_close * factor,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, BarSeries):
            return NotImplemented
        if self.symbol != other.symbol or self.dates != other.dates:
            return False
        return all(
            np.array_equal(getattr(self, c), getattr(other, c), equal_nan=True)
            for c in ("open", "high", "low", "close", "volume", "adj_close")
        )

    __hash__ = None


class ValidatedBarSeries(BarSeries):
    """A :class:`BarSeries` that passed :func:`validate` with no violations."""


@dataclass(frozen=True)
class Universe:
    name: str
    symbols: tuple[str, ...]
    start: dt.date
    end: dt.date

    def __post_init__(self):
        if not self.start < self.end:
            raise InvertedRange(f"universe {self.name!r}: start {self.start} is not before end {self.end}")
        deduped = tuple(dict.fromkeys(self.symbols))
        if not deduped:
            raise ValueError(f"universe {self.name!r} has no symbols")
        object.__setattr__(self, "symbols", deduped)

    @classmethod
    def from_dict(cls, doc: dict) -> "Universe":
        period = doc.get("period", {})
        return cls(
            name=str(doc["name"]),
            symbols=tuple(str(s) for s in doc["symbols"]),
            start=dt.date.fromisoformat(period["start"]),
            end=dt.date.fromisoformat(period["end"]),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "symbols": list(self.symbols),
            "period": {"start": self.start.isoformat(), "end": self.end.isoformat()},
        }


def load_universe(path: str | os.PathLike) -> Universe:
    with open(path, encoding="utf-8") as fh:
        return Universe.from_dict(json.load(fh))


# -- CSV ----------------------------------------------------------------------

def _parse_float(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise MalformedRow(line, f"{column}={text!r} is not a number") from None
    if not math.isfinite(value):
        raise MalformedRow(line, f"{column}={text!r} is not finite")
    return value


def parse_csv(text: str, symbol: str) -> BarSeries:
    """Parse a ``Date,Open,High,Low,Close[,Adj Close],Volume`` payload.

    Column order is free and extra columns are ignored. Rows are re-sorted by
    date; a duplicated date is an error, as is any unparsable or missing
    required field. Line numbers in errors are 1-based and count the header;
    lines starting with ``#`` are ignored.
    """
    # comment lines become blank so line numbers stay true to the source
    lines = ("\n" if line.startswith("#") else line for line in io.StringIO(text))
    reader = csv.reader(lines)
    header: list[str] = []
    for header in reader:
        if header and any(cell.strip() for cell in header):
            break
    else:
        raise MalformedHeader("empty payload")
    index = {name.strip().lower(): i for i, name in enumerate(header)}
    missing = [c for c in REQUIRED_COLUMNS if c.lower() not in index]
    if missing:
        raise MalformedHeader(f"missing columns: {', '.join(missing)}")
    adj_idx = index.get("adj close")

    rows: list[tuple[int, Bar]] = []
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise MalformedRow(line, f"expected {len(header)} fields, got {len(row)}")

        def cell(col: str) -> str:
            return row[index[col.lower()]].strip()

        try:
            date = dt.date.fromisoformat(cell("Date"))
        except ValueError:
            raise MalformedRow(line, f"Date={cell('Date')!r} is not YYYY-MM-DD") from None
        adj = math.nan
        if adj_idx is not None and row[adj_idx].strip():
            adj = _parse_float(row[adj_idx].strip(), "Adj Close", line)
        rows.append(
            (
                line,
                Bar(
                    date=date,
                    open=_parse_float(cell("Open"), "Open", line),
                    high=_parse_float(cell("High"), "High", line),
                    low=_parse_float(cell("Low"), "Low", line),
                    close=_parse_float(cell("Close"), "Close", line),
                    volume=_parse_float(cell("Volume"), "Volume", line),
                    adj_close=adj,
                ),
            )
        )
    if not rows:
        raise EmptySeries(f"{symbol}: no data rows")

    rows.sort(key=lambda item: item[1].date)
    for (_, prev), (line, cur) in zip(rows, rows[1:]):
        if prev.date == cur.date:
            raise DuplicateDate(line, f"duplicate date {cur.date.isoformat()}")
    return BarSeries.from_bars(symbol, (bar for _, bar in rows))


def _fmt(value: float) -> str:
    if math.isnan(value):
        return ""
    return repr(float(value))


def serialize_csv(series: BarSeries) -> str:
    """Emit the series in the canonical CSV layout; ``parse_csv`` inverts it exactly."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for i, date in enumerate(series.dates):
        vol = float(series.volume[i])
        writer.writerow(
            [
                date.isoformat(),
                _fmt(series.open[i]),
                _fmt(series.high[i]),
                _fmt(series.low[i]),
                _fmt(series.close[i]),
                _fmt(series.adj_close[i]),
                str(int(vol)) if vol.is_integer() and abs(vol) < 2**53 else _fmt(vol),
            ]
        )
    return out.getvalue()


def read_csv_file(path: str | os.PathLike, symbol: str | None = None) -> BarSeries:
    path = Path(path)
    return parse_csv(path.read_text(encoding="utf-8"), symbol or path.stem)


# -- validation -----------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    date: dt.date
    code: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.date.isoformat()}: {self.code}" + (f" ({self.detail})" if self.detail else "")


@dataclass(frozen=True)
class ValidationResult:
    series: BarSeries
    violations: tuple[Violation, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.violations

    def require(self) -> ValidatedBarSeries:
        """Return the validated series or raise listing every violation."""
        if self.violations:
            listing = "; ".join(str(v) for v in self.violations[:10])
            more = f" (+{len(self.violations) - 10} more)" if len(self.violations) > 10 else ""
            raise InvalidSeries(f"{self.series.symbol}: {listing}{more}")
        assert isinstance(self.series, ValidatedBarSeries)
        return self.series


def validate(series: BarSeries) -> ValidationResult:
    """Check every bar invariant; violations are returned, never raised."""
    if len(series) == 0:
        raise EmptySeries(f"{series.symbol}: nothing to validate")
    o, h, l, c, v = series.open, series.high, series.low, series.close, series.volume
    checks = (
        ("high<low", h < l),
        ("open>high", o > h),
        ("close>high", c > h),
        ("open<low", o < l),
        ("close<low", c < l),
        ("nonpositive_price", (o <= 0) | (h <= 0) | (l <= 0) | (c <= 0)),
        ("negative_volume", v < 0),
    )
    found: list[Violation] = []
    for i in np.flatnonzero(np.logical_or.reduce([mask for _, mask in checks])):
        b = series.bar(int(i))
        detail = f"O={b.open} H={b.high} L={b.low} C={b.close} V={b.volume}"
        found.extend(Violation(b.date, code, detail) for code, mask in checks if mask[i])
    if found:
        return ValidationResult(series, tuple(found))
    return ValidationResult(_as_validated(series))


def _as_validated(series: BarSeries) -> ValidatedBarSeries:
    if isinstance(series, ValidatedBarSeries):
        return series
    return ValidatedBarSeries(
        symbol=series.symbol,
        dates=series.dates,
        open=series.open,
        high=series.high,
        low=series.low,
        close=series.close,
        volume=series.volume,
        adj_close=series.adj_close,
    )


def window(series: BarSeries, start: dt.date, end: dt.date) -> BarSeries:
    """Bars with ``start <= date <= end``; an empty result is legal."""
    if start > end:
        raise InvertedRange(f"window start {start} is after end {end}")
    lo = bisect.bisect_left(series.dates, start)
    hi = bisect.bisect_right(series.dates, end)
    return series.slice(lo, max(lo, hi))


# -- remote fetch -----------------------------------------------------------------

Opener = Callable[[str, float], "object"]


def cache_path(cache_dir: str | os.PathLike, symbol: str, start: dt.date, end: dt.date) -> Path:
    return Path(cache_dir) / symbol / f"{start.isoformat()}_{end.isoformat()}.csv"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _epoch(day: dt.date) -> int:
    return int(dt.datetime(day.year, day.month, day.day, tzinfo=dt.timezone.utc).timestamp())


def fetch_remote(
    symbol: str,
    start: dt.date,
    end: dt.date,
    url_template: str,
    cache_dir: str | os.PathLike,
    timeout: float = 30.0,
    opener: Opener | None = None,
) -> str:
    """Download a quote CSV, caching it under ``cache/<symbol>/<start>_<end>.csv``.

    ``url_template`` is formatted with ``symbol``, ``start``/``end`` (ISO
    dates) and ``period1``/``period2`` (UTC epoch seconds, ``period2`` is the
    day after ``end``). A cached payload is returned without touching the
    network. Cache writes are atomic, and nothing is written unless the
    payload parses.
    """
    if start > end:
        raise InvertedRange(f"fetch start {start} is after end {end}")
    target = cache_path(cache_dir, symbol, start, end)
    if target.exists():
        return target.read_text(encoding="utf-8")

    url = url_template.format(
        symbol=symbol,
        start=start.isoformat(),
        end=end.isoformat(),
        period1=_epoch(start),
        period2=_epoch(end + dt.timedelta(days=1)),
    )
    open_url = opener or (lambda u, t: urllib.request.urlopen(u, timeout=t))
    try:
        with open_url(url, timeout) as resp:
            payload = resp.read().decode("utf-8")
    except urllib.error.HTTPError as exc:
        body = exc.read().decode("utf-8", errors="replace").strip()
        raise ProviderRejection(f"{symbol}: HTTP {exc.code}: {body or exc.reason}") from exc
    except (urllib.error.URLError, OSError, TimeoutError) as exc:
        raise NetworkFailure(f"{symbol}: {exc}") from exc

    try:
        parse_csv(payload, symbol)
    except (MalformedHeader, MalformedRow, EmptySeries) as exc:
        snippet = payload.strip().splitlines()[0][:200] if payload.strip() else "<empty>"
        raise ProviderRejection(f"{symbol}: unusable payload ({exc}): {snippet}") from exc
    _atomic_write(target, payload)
    return payload


def load_symbol(
    symbol: str,
    csv_dir: str | os.PathLike | None = None,
    remote: dict | None = None,
    start: dt.date | None = None,
    end: dt.date | None = None,
) -> BarSeries:
    """Load one symbol from ``<csv_dir>/<symbol>.csv`` or, failing that, the remote source."""
    if csv_dir is not None:
        path = Path(csv_dir) / f"{symbol}.csv"
        if path.exists():
            return read_csv_file(path, symbol)
    if remote is not None and start is not None and end is not None:
        text = fetch_remote(
            symbol,
            start,
            end,
            url_template=remote["url_template"],
            cache_dir=remote.get("cache_dir", "cache"),
            timeout=float(remote.get("timeout", 30.0)),
        )
        return parse_csv(text, symbol)
    raise FileNotFoundError(f"no data for {symbol}")


def prepare(series: BarSeries, start: dt.date, end: dt.date) -> ValidatedBarSeries:
    """Window to the test period then validate; raises on any violation."""
    windowed = window(series, start, end)
    if len(windowed) == 0:
        raise EmptySeries(f"{series.symbol}: no bars between {start} and {end}")
    return validate(windowed).require()


def symbols_in(csv_dir: str | os.PathLike) -> Sequence[str]:
    return sorted(p.stem for p in Path(csv_dir).glob("*.csv"))

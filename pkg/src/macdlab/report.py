"""Panel reports: per-(universe, strategy) metric rows and their renderings."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import __version__
from .backtest import Diagnostic, UniverseRun, run_panel
from .config import RunConfig
from .marketdata import BarSeries, Universe
from .metrics import StrategyReport, aggregate

PANEL_COLUMNS = (
    "universe",
    "strategy",
    "symbols",
    "nt",
    "win_rate",
    "pnl_ratio",
    "sharpe",
    "sortino",
    "mdd",
    "accumulated_gain",
    "accumulated_loss",
    "accumulated_profit",
    "mean_ret",
    "skewness",
    "kurtosis",
)


@dataclass
class PanelReport:
    rows: list[StrategyReport]
    metadata: dict
    diagnostics: list[dict] = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return self.metadata["config_hash"]

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "rows": [r.to_dict() for r in self.rows],
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "PanelReport":
        return cls(
            rows=[StrategyReport.from_dict(r) for r in doc["rows"]],
            metadata=doc["metadata"],
            diagnostics=list(doc.get("diagnostics", [])),
        )


def _date_range(data: Mapping[str, BarSeries], universes: Sequence[Universe]) -> dict | None:
    firsts, lasts = [], []
    for u in universes:
        for s in u.symbols:
            series = data.get(s)
            if series is None:
                continue
            inside = [d for d in series.dates if u.start <= d <= u.end]
            if inside:
                firsts.append(inside[0])
                lasts.append(inside[-1])
    if not firsts:
        return None
    return {"start": min(firsts).isoformat(), "end": max(lasts).isoformat()}


def build_panel(
    cfg: RunConfig,
    data: Mapping[str, BarSeries],
    load_errors: Mapping[str, str] | None = None,
) -> tuple[PanelReport, list[UniverseRun]]:
    """Run every configured strategy on every universe and aggregate the rows.

    ``load_errors`` maps symbols that could not be loaded to the reason, which
    then replaces the generic missing-data diagnostic.
    """
    load_errors = load_errors or {}
    rows: list[StrategyReport] = []
    diagnostics: list[dict] = []
    all_runs: list[UniverseRun] = []
    for universe in cfg.universes:
        runs = run_panel(universe, cfg.strategies, cfg.execution, data)
        for run in runs:
            run.diagnostics = [
                Diagnostic(d.symbol, load_errors.get(d.symbol, d.message)) for d in run.diagnostics
            ]
            rows.append(aggregate(run.ledgers, cfg.aggregation, strategy=run.strategy, universe=universe.name))
            diagnostics.extend(_diag(universe.name, run.strategy, d) for d in run.diagnostics)
        all_runs.extend(runs)
    metadata = {
        "config_hash": cfg.config_hash,
        "software_version": __version__,
        "aggregation_policy": cfg.aggregation.to_dict(),
        "execution": cfg.execution.to_dict(),
        "data_range": _date_range(data, cfg.universes),
        "universes": [u.to_dict() for u in cfg.universes],
    }
    return PanelReport(rows, metadata, diagnostics), all_runs


def _diag(universe: str, strategy: str, d: Diagnostic) -> dict:
    return {"universe": universe, "strategy": strategy, "symbol": d.symbol, "message": d.message}


# -- formatting ---------------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def tag(text: str, config_hash: str | None) -> str:
    """Prefix a CSV payload with its ``# config_hash=`` comment line."""
    return text if config_hash is None else f"# config_hash={config_hash}\n{text}"


def table_csv(header: Sequence[str], rows: Iterable[Sequence], config_hash: str | None) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return tag(out.getvalue(), config_hash)


def panel_csv(panel: PanelReport) -> str:
    rows = ([getattr(r, c) for c in PANEL_COLUMNS] for r in panel.rows)
    return table_csv(PANEL_COLUMNS, rows, panel.config_hash)


def _num(value, digits: int) -> str:
    if value is None:
        return "-"
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return f"{value:.{digits}f}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines)


def _by_universe(rows: Sequence[StrategyReport]) -> dict[str, list[StrategyReport]]:
    grouped: dict[str, list[StrategyReport]] = {}
    for r in rows:
        grouped.setdefault(r.universe, []).append(r)
    return grouped


def ap_ranking(rows: Sequence[StrategyReport]) -> list[StrategyReport]:
    """Rows sorted by accumulated profit, highest first (stable on ties)."""
    return sorted(rows, key=lambda r: -r.accumulated_profit)


def render_text(panel: PanelReport) -> str:
    out = [f"config_hash: {panel.config_hash}", f"software_version: {panel.metadata.get('software_version')}"]
    rng = panel.metadata.get("data_range")
    if rng:
        out.append(f"data_range: {rng['start']} .. {rng['end']}")
    policy = panel.metadata.get("aggregation_policy", {})
    out.append("aggregation: " + ", ".join(f"{k}={v}" for k, v in sorted(policy.items())))
    for universe, rows in _by_universe(panel.rows).items():
        out.append("")
        out.append(f"== {universe}: performance ==")
        out.append(
            _table(
                ("strategy", "NT", "WR", "P&L", "SR", "Sortino", "MDD", "AP"),
                [
                    (
                        r.strategy,
                        str(r.nt),
                        _num(r.win_rate, 2),
                        _num(r.pnl_ratio, 2),
                        _num(r.sharpe, 2),
                        _num(r.sortino, 2),
                        _num(r.mdd, 2),
                        _num(r.accumulated_profit, 2),
                    )
                    for r in rows
                ],
            )
        )
        out.append("")
        out.append(f"== {universe}: per-trade return moments ==")
        out.append(
            _table(
                ("strategy", "Mean", "Skewness", "Kurtosis"),
                [(r.strategy, _num(r.mean_ret, 4), _num(r.skewness, 4), _num(r.kurtosis, 4)) for r in rows],
            )
        )
        out.append("")
        out.append(f"== {universe}: accumulated profit ranking ==")
        out.append(
            _table(
                ("strategy", "Gain", "Loss", "AP"),
                [
                    (r.strategy, _num(r.accumulated_gain, 2), _num(r.accumulated_loss, 2), _num(r.accumulated_profit, 2))
                    for r in ap_ranking(rows)
                ],
            )
        )
    if panel.diagnostics:
        out.append("")
        out.append("== diagnostics ==")
        out.extend(f"{d['universe']} / {d['strategy']} / {d['symbol']}: {d['message']}" for d in panel.diagnostics)
    return "\n".join(out) + "\n"


def moments_csv(panel: PanelReport) -> str:
    rows = ((r.universe, r.strategy, r.mean_ret, r.skewness, r.kurtosis) for r in panel.rows)
    return table_csv(("universe", "strategy", "mean_ret", "skewness", "kurtosis"), rows, panel.config_hash)


def ap_csv(panel: PanelReport) -> str:
    rows = []
    for universe, group in _by_universe(panel.rows).items():
        for rank, r in enumerate(ap_ranking(group), start=1):
            rows.append((universe, rank, r.strategy, r.accumulated_gain, r.accumulated_loss, r.accumulated_profit))
    return table_csv(("universe", "rank", "strategy", "gain", "loss", "ap"), rows, panel.config_hash)


# -- plot data ----------------------------------------------------------------------

def histogram(values: Sequence[float], bin_width: float = 0.05) -> list[tuple[float, float, int]]:
    """Counts over contiguous bins ``[k*w, (k+1)*w)`` spanning the data; empty input -> no bins."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if not values:
        return []
    keys = []
    for v in values:
        k = math.floor(v / bin_width)
        # keep edge values in the bin they belong to despite division rounding
        if (k + 1) * bin_width <= v:
            k += 1
        elif k * bin_width > v:
            k -= 1
        keys.append(k)
    counts: dict[int, int] = {}
    for k in keys:
        counts[k] = counts.get(k, 0) + 1
    # edges rounded so printed bins read 0.05, 0.1 rather than 0.1000000000000001
    return [
        (round(k * bin_width, 12), round((k + 1) * bin_width, 12), counts.get(k, 0))
        for k in range(min(keys), max(keys) + 1)
    ]


def scatter_rows(run: UniverseRun) -> list[tuple[int, str, str, float]]:
    trades = [(ledger.symbol, t) for ledger in sorted(run.ledgers, key=lambda l: l.symbol) for t in ledger.trades]
    return [(i, sym, t.entry_date.isoformat(), t.ret) for i, (sym, t) in enumerate(trades)]


def scatter_csv(run: UniverseRun, config_hash: str | None) -> str:
    return table_csv(("trade_index", "symbol", "entry_date", "ret"), scatter_rows(run), config_hash)


def histogram_csv(run: UniverseRun, bin_width: float, config_hash: str | None) -> str:
    rets = [row[3] for row in scatter_rows(run)]
    return table_csv(("bin_start", "bin_end", "count"), histogram(rets, bin_width), config_hash)

"""``macdlab`` command-line front end.

Exit codes: 0 ok, 1 usage or config error, 2 data error, 3 internal error.
Every CSV written carries a ``# config_hash=`` comment line and every JSON
document a ``config_hash`` field, so outputs can be traced to their inputs.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import re
import sys
import traceback
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .backtest import equity_to_csv, run_backtest, trades_to_csv
from .config import RunConfig, load_config
from .errors import ConfigError, MacdLabError, MarketDataError
from .indicators import MacdParams, mfi, rsi, sar, vpvma
from .marketdata import (
    BarSeries,
    load_symbol,
    prepare,
    serialize_csv,
    symbols_in,
    validate,
)
from .metrics import aggregate
from .optimizer import TRACE_COLUMNS, GaConfig, optimize, trace_rows
from .report import (
    PanelReport,
    ap_csv,
    build_panel,
    histogram_csv,
    moments_csv,
    panel_csv,
    render_text,
    scatter_csv,
    table_csv,
    tag,
)
from .signals import IndicatorCache, StrategyParams, StrategySpec, compute_signals
from .synthetic import synthetic_universe

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class DataFailure(Exception):
    """Input data unusable; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _describe(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


def _config(args) -> RunConfig:
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out:
        cfg = replace(cfg, output_dir=Path(args.out))
    return cfg


def _periods(cfg: RunConfig) -> dict[str, tuple[dt.date, dt.date]]:
    """Span of every universe each symbol belongs to (used for remote fetches)."""
    spans: dict[str, tuple[dt.date, dt.date]] = {}
    for u in cfg.universes:
        for s in u.symbols:
            lo, hi = spans.get(s, (u.start, u.end))
            spans[s] = (min(lo, u.start), max(hi, u.end))
    return spans


def _source(cfg: RunConfig, symbol: str) -> str:
    if cfg.csv_dir is not None and (cfg.csv_dir / f"{symbol}.csv").exists():
        return str(cfg.csv_dir / f"{symbol}.csv")
    return symbol


def _load(cfg: RunConfig, symbol: str, span: tuple[dt.date, dt.date] | None) -> BarSeries:
    start, end = span if span else (None, None)
    return load_symbol(symbol, cfg.csv_dir, cfg.remote, start, end)


def _load_universes(cfg: RunConfig) -> tuple[dict[str, BarSeries], dict[str, str]]:
    data: dict[str, BarSeries] = {}
    errors: dict[str, str] = {}
    for symbol, span in sorted(_periods(cfg).items()):
        try:
            data[symbol] = _load(cfg, symbol, span)
        except (MacdLabError, OSError) as exc:
            errors[symbol] = f"{_source(cfg, symbol)}: {_describe(exc)}"
    return data, errors


def _require_universes(cfg: RunConfig) -> None:
    if not cfg.universes:
        raise ConfigError("no universe configured")


# -- commands ---------------------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg = _config(args)
    spans = _periods(cfg)
    symbols = set(spans)
    if cfg.csv_dir is not None:
        if not cfg.csv_dir.is_dir():
            raise DataFailure(f"csv_dir not found: {cfg.csv_dir}")
        symbols |= set(symbols_in(cfg.csv_dir))
    if not symbols:
        raise DataFailure("nothing to ingest")

    entries, normalized, bad = [], {}, 0
    for symbol in sorted(symbols):
        entry = {"symbol": symbol, "source": _source(cfg, symbol)}
        try:
            series = _load(cfg, symbol, spans.get(symbol))
            result = validate(series)
        except (MacdLabError, OSError) as exc:
            entry.update(status="error", problems=[_describe(exc)])
        else:
            entry.update(
                rows=len(series),
                first=series.dates[0].isoformat(),
                last=series.dates[-1].isoformat(),
                status="ok" if result.ok else "invalid",
                problems=[str(v) for v in result.violations],
            )
            if result.ok:
                normalized[symbol] = serialize_csv(series)
        if entry["status"] != "ok":
            bad += 1
            print(f"{entry['source']}: {entry['status']}: {'; '.join(entry['problems'][:5])}", file=sys.stderr)
        entries.append(entry)

    print(f"ingest: {len(entries) - bad} ok, {bad} failed")
    if not args.dry_run:
        out = cfg.output_dir
        for symbol, text in normalized.items():
            _write(out / "data" / f"{symbol}.csv", tag(text, cfg.config_hash))
        _write(out / "ingest_report.json", _dump_json({"config_hash": cfg.config_hash, "files": entries}))
    return EXIT_DATA if bad else EXIT_OK


def _panel(cfg: RunConfig):
    _require_universes(cfg)
    data, errors = _load_universes(cfg)
    for symbol, message in errors.items():
        print(f"warning: {message}", file=sys.stderr)
    panel, runs = build_panel(cfg, data, errors)
    if not any(run.ledgers for run in runs):
        raise DataFailure("no symbol produced a backtest; see diagnostics:\n" + "\n".join(
            f"  {d['symbol']}: {d['message']}" for d in panel.diagnostics[: 20]
        ))
    return panel, runs


def cmd_backtest(args) -> int:
    cfg = _config(args)
    panel, runs = _panel(cfg)
    if args.dry_run:
        print(f"backtest: {len(panel.rows)} rows would be written to {cfg.output_dir}")
        return EXIT_OK
    out = cfg.output_dir
    _write(out / "panel.json", panel.to_json())
    _write(out / "panel.csv", panel_csv(panel))
    _write(out / "panel.txt", render_text(panel))
    for run in runs:
        base = Path(_slug(run.universe)) / _slug(run.strategy)
        for ledger in run.ledgers:
            _write(out / "trades" / base / f"{ledger.symbol}.csv", tag(trades_to_csv(ledger.trades), cfg.config_hash))
            _write(out / "equity" / base / f"{ledger.symbol}.csv", tag(equity_to_csv(ledger), cfg.config_hash))
    sys.stdout.write(render_text(panel))
    return EXIT_OK


def cmd_plotdata(args) -> int:
    cfg = _config(args)
    panel, runs = _panel(cfg)
    if args.dry_run:
        print(f"plotdata: {len(runs)} scatter/histogram pairs would be written to {cfg.output_dir}")
        return EXIT_OK
    for run in runs:
        base = cfg.output_dir / "plotdata" / _slug(run.universe) / _slug(run.strategy)
        _write(base / "scatter.csv", scatter_csv(run, cfg.config_hash))
        _write(base / "histogram.csv", histogram_csv(run, cfg.bin_width, cfg.config_hash))
    print(f"plotdata: wrote {len(runs)} scatter/histogram pairs")
    return EXIT_OK


_COMPARE_COLUMNS = (
    "symbol",
    "params",
    "fast",
    "slow",
    "signal",
    "nt",
    "win_rate",
    "pnl_ratio",
    "sharpe",
    "sortino",
    "mdd",
    "accumulated_profit",
)


def cmd_optimize(args) -> int:
    cfg = _config(args)
    if not cfg.targets:
        raise ConfigError("optimize.targets is empty")
    ga = cfg.ga or GaConfig(seed=cfg.seed)
    default_universe = cfg.universes[0] if cfg.universes else None

    prepared: dict[str, BarSeries] = {}
    failures = []
    for target in cfg.targets:
        uni = target.universe or default_universe
        try:
            series = _load(cfg, target.symbol, (uni.start, uni.end) if uni else None)
            prepared[target.symbol] = prepare(series, uni.start, uni.end) if uni else validate(series).require()
        except (MacdLabError, OSError) as exc:
            failures.append(f"{_source(cfg, target.symbol)}: {_describe(exc)}")
    for message in failures:
        print(f"error: {message}", file=sys.stderr)
    if args.dry_run:
        print(f"optimize: {len(prepared)} of {len(cfg.targets)} targets ready")
        return EXIT_DATA if failures else EXIT_OK

    out = cfg.output_dir / "optimize"
    best_rows, compare_rows, results = [], [], []
    for symbol, series in prepared.items():
        best, trace = optimize(series, cfg.optimize_rule, ga, cfg.execution)
        best_fit = max(trace.best_fitness)
        best_rows.append((symbol, *best, best_fit, len(trace)))
        _write(out / "trace" / f"{symbol}.csv", table_csv(TRACE_COLUMNS, trace_rows(trace), cfg.config_hash))
        result = {"symbol": symbol, "best": list(best), "fitness": best_fit, "generations": len(trace)}
        if cfg.compare:
            cache = IndicatorCache(series)
            for label, params in (("optimized", best.as_params()), ("default", MacdParams())):
                spec = StrategySpec(cfg.optimize_rule).with_macd(params)
                ledger = run_backtest(series, compute_signals(series, spec, cache), cfg.execution)
                rep = aggregate([ledger], cfg.aggregation, strategy=spec.label, universe=symbol)
                compare_rows.append(
                    (symbol, label, *params, rep.nt, rep.win_rate, rep.pnl_ratio, rep.sharpe, rep.sortino, rep.mdd,
                     rep.accumulated_profit)
                )
                result[label] = rep.to_dict()
        results.append(result)

    _write(
        out / "best.csv",
        table_csv(("symbol", "fast", "slow", "signal", "fitness", "generations"), best_rows, cfg.config_hash),
    )
    if cfg.compare:
        _write(out / "compare.csv", table_csv(_COMPARE_COLUMNS, compare_rows, cfg.config_hash))
    _write(
        out / "optimize.json",
        _dump_json(
            {
                "config_hash": cfg.config_hash,
                "software_version": __version__,
                "rule": cfg.optimize_rule.value,
                "ga": ga.to_dict(),
                "results": results,
                "failures": failures,
            }
        ),
    )
    for row in best_rows:
        print(f"{row[0]}: fast={row[1]} slow={row[2]} signal={row[3]} fitness={row[4]:.2f} generations={row[5]}")
    return EXIT_DATA if failures else EXIT_OK


def _merge(panels: Sequence[PanelReport]) -> PanelReport:
    hashes = sorted({p.config_hash for p in panels})
    if len(hashes) > 1:
        raise ConfigError(f"refusing to merge panels with different config hashes: {', '.join(hashes)}")
    rows, seen, diagnostics = [], set(), []
    for p in panels:
        for r in p.rows:
            if (r.universe, r.strategy) not in seen:
                seen.add((r.universe, r.strategy))
                rows.append(r)
        diagnostics.extend(d for d in p.diagnostics if d not in diagnostics)
    return PanelReport(rows, panels[0].metadata, diagnostics)


def cmd_report(args) -> int:
    cfg = None
    if args.config:
        cfg = _config(args)
    if args.panel:
        paths = [Path(p) for p in args.panel]
    elif cfg is not None:
        paths = [cfg.output_dir / "panel.json"]
    else:
        raise ConfigError("report needs --panel or --config")

    panels = []
    for path in paths:
        try:
            panels.append(PanelReport.from_dict(json.loads(path.read_text(encoding="utf-8"))))
        except FileNotFoundError:
            raise DataFailure(f"panel not found: {path}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise DataFailure(f"{path}: not a panel report: {_describe(exc)}") from None
    merged = _merge(panels)
    if cfg is not None and merged.config_hash != cfg.config_hash:
        raise ConfigError(f"panel hash {merged.config_hash} does not match config hash {cfg.config_hash}")

    text = render_text(merged)
    if not args.dry_run:
        out = Path(args.out) if args.out else (cfg.output_dir if cfg else paths[0].parent)
        _write(out / "report.txt", text)
        _write(out / "report.csv", panel_csv(merged))
        _write(out / "moments.csv", moments_csv(merged))
        _write(out / "ap_ranking.csv", ap_csv(merged))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_indicators(args) -> int:
    cfg = _config(args)
    spans = _periods(cfg)
    try:
        series = _load(cfg, args.symbol, spans.get(args.symbol))
        if args.symbol in spans:
            series = prepare(series, *spans[args.symbol])
        else:
            series = validate(series).require()
    except (MacdLabError, OSError) as exc:
        raise DataFailure(f"{_source(cfg, args.symbol)}: {_describe(exc)}") from None
    p = StrategyParams()
    cache = IndicatorCache(series)
    lines = cache.macd(p.macd)
    columns = {
        "macd": lines.macd,
        "signal": lines.signal,
        "hist": lines.hist,
        "bbw": cache.bbw(p.bb_window, p.bb_k, p.bb_ddof),
        "rsi": rsi(series.close, p.rsi_window),
        "mfi": mfi(series, p.mfi_window),
        "sar": sar(series, p.sar_af0, p.sar_afmax),
    }
    vp = vpvma(series, p.macd)
    columns.update(vpvma=vp.vpvma, vpvmas=vp.vpvmas)
    values = {k: v.to_list() for k, v in columns.items()}
    rows = [(d.isoformat(), *(values[k][i] for k in columns)) for i, d in enumerate(series.dates)]
    if args.dry_run:
        print(f"indicators: {len(rows)} rows for {args.symbol}")
        return EXIT_OK
    _write(cfg.output_dir / "indicators" / f"{args.symbol}.csv", table_csv(("date", *columns), rows, cfg.config_hash))
    print(f"indicators: wrote {len(rows)} rows for {args.symbol}")
    return EXIT_OK


def cmd_synth(args) -> int:
    """Write a seeded synthetic universe plus a ready-to-run config."""
    if not args.out:
        raise ConfigError("synth needs --out")
    start, end = dt.date.fromisoformat(args.start), dt.date.fromisoformat(args.end)
    seed = args.seed or 0
    universe, data = synthetic_universe(args.name, args.symbols, start, end, seed)
    if args.dry_run:
        print(f"synth: {len(data)} symbols would be written to {args.out}")
        return EXIT_OK
    out = Path(args.out)
    for symbol, series in data.items():
        _write(out / "data" / f"{symbol}.csv", serialize_csv(series))
    _write(out / "universe.json", _dump_json(universe.to_dict()))
    config = {
        "universe": "universe.json",
        "data": {"csv_dir": "data"},
        "strategies": "all",
        "optimize": {"targets": [universe.symbols[0]]},
        "output_dir": "out",
        "seed": seed,
    }
    _write(out / "config.json", _dump_json(config))
    print(f"synth: wrote {len(data)} symbols and config.json to {out}")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="macdlab", description="MACD-family strategy backtests, panels and GA tuning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=_seed, help="override the run seed")
    common.add_argument("--dry-run", action="store_true", help="validate inputs without writing")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("ingest", parents=[common], help="validate and normalize market data").set_defaults(
        func=cmd_ingest
    )
    sub.add_parser("backtest", parents=[common], help="run the strategy panel").set_defaults(func=cmd_backtest)
    sub.add_parser("optimize", parents=[common], help="GA search for MACD periods").set_defaults(
        func=cmd_optimize
    )
    sub.add_parser("plotdata", parents=[common], help="per-trade scatter and histogram CSVs").set_defaults(
        func=cmd_plotdata
    )
    rep = sub.add_parser("report", parents=[common], help="render stored panels as tables")
    rep.add_argument("--panel", nargs="+", help="panel.json files to merge (same config hash)")
    rep.set_defaults(func=cmd_report)
    ind = sub.add_parser("indicators", parents=[common], help="dump indicator columns for one symbol")
    ind.add_argument("--symbol", required=True)
    ind.set_defaults(func=cmd_indicators)
    syn = sub.add_parser("synth", parents=[common], help="write a synthetic demo universe")
    syn.add_argument("--symbols", type=int, default=10)
    syn.add_argument("--name", default="SYNTH")
    syn.add_argument("--start", default="2015-01-01")
    syn.add_argument("--end", default="2021-08-27")
    syn.set_defaults(func=cmd_synth)
    return parser


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFailure, MarketDataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration: one JSON document describing data, strategies and settings."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .backtest import ExecutionConfig
from .errors import ConfigError, InvertedRange
from .marketdata import Universe, load_universe
from .metrics import AggregationPolicy
from .optimizer import GaConfig
from .signals import StrategyKind, StrategySpec, all_strategies

_KNOWN_KEYS = {
    "universe",
    "universes",
    "data",
    "strategies",
    "execution",
    "aggregation",
    "ga",
    "optimize",
    "plot",
    "output_dir",
    "seed",
}


@dataclass(frozen=True)
class OptimizeTarget:
    symbol: str
    universe: Universe | None = None

    def to_dict(self) -> dict:
        return {"symbol": self.symbol, "universe": self.universe.to_dict() if self.universe else None}


@dataclass(frozen=True)
class RunConfig:
    universes: tuple[Universe, ...]
    csv_dir: Path | None
    remote: dict | None
    strategies: tuple[StrategySpec, ...]
    execution: ExecutionConfig = ExecutionConfig()
    aggregation: AggregationPolicy = AggregationPolicy()
    ga: GaConfig | None = None
    targets: tuple[OptimizeTarget, ...] = ()
    optimize_rule: StrategyKind = StrategyKind.MacdCrossoverSigAbove0
    compare: bool = True
    bin_width: float = 0.05
    output_dir: Path = Path("out")
    seed: int = 0
    data_doc: dict = field(default_factory=dict)
    source: Path | None = field(default=None, compare=False)

    def with_seed(self, seed: int) -> "RunConfig":
        ga = replace(self.ga, seed=seed) if self.ga else None
        return replace(self, seed=seed, ga=ga)

    def canonical(self) -> dict:
        """Everything that determines results; the output location is excluded."""
        return {
            "universes": [u.to_dict() for u in self.universes],
            "data": self.data_doc,
            "strategies": [s.to_dict() for s in self.strategies],
            "execution": self.execution.to_dict(),
            "aggregation": self.aggregation.to_dict(),
            "ga": self.ga.to_dict() if self.ga else None,
            "optimize": {
                "targets": [t.to_dict() for t in self.targets],
                "rule": self.optimize_rule.value,
                "compare": self.compare,
            },
            "plot": {"bin_width": self.bin_width},
            "seed": self.seed,
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _resolve(base: Path, value: str | os.PathLike) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def _universe(base: Path, item) -> Universe:
    if isinstance(item, dict):
        return Universe.from_dict(item)
    path = _resolve(base, item)
    if not path.exists():
        raise ConfigError(f"universe file not found: {path}")
    return load_universe(path)


def parse_config(doc: dict, base: Path = Path(".")) -> RunConfig:
    """Build a :class:`RunConfig` from a decoded JSON document; paths resolve against ``base``."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        raw_universes = doc.get("universes", [])
        if "universe" in doc:
            raw_universes = [doc["universe"], *raw_universes]
        universes = tuple(_universe(base, u) for u in raw_universes)
        names = [u.name for u in universes]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate universe names: {names}")

        data = doc.get("data", {})
        csv_dir = _resolve(base, data["csv_dir"]) if data.get("csv_dir") else None
        remote = data.get("remote")
        if remote is not None:
            if "url_template" not in remote:
                raise ConfigError("data.remote needs a url_template")
            remote = dict(remote)
            remote["cache_dir"] = str(_resolve(base, remote.get("cache_dir", "cache")))
        if csv_dir is None and remote is None:
            raise ConfigError("data needs csv_dir and/or remote")

        raw_strategies = doc.get("strategies", "all")
        if raw_strategies == "all":
            strategies = tuple(all_strategies())
        else:
            strategies = tuple(StrategySpec.from_dict(s) for s in raw_strategies)
        if not strategies:
            raise ConfigError("at least one strategy is required")
        labels = [s.label for s in strategies]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"strategy names must be unique: {labels}")

        seed = int(doc.get("seed", 0))
        ga = None
        if doc.get("ga") is not None:
            ga_doc = dict(doc["ga"])
            ga_doc.setdefault("seed", seed)
            ga = GaConfig.from_dict(ga_doc)

        opt = doc.get("optimize", {})
        targets = []
        for t in opt.get("targets", []):
            if isinstance(t, str):
                targets.append(OptimizeTarget(t))
            else:
                uni = _universe(base, t["universe"]) if t.get("universe") else None
                targets.append(OptimizeTarget(str(t["symbol"]), uni))

        bin_width = float(doc.get("plot", {}).get("bin_width", 0.05))
        if bin_width <= 0:
            raise ConfigError("plot.bin_width must be positive")

        return RunConfig(
            universes=universes,
            csv_dir=csv_dir,
            remote=remote,
            strategies=strategies,
            execution=ExecutionConfig.from_dict(doc.get("execution", {})),
            aggregation=AggregationPolicy.from_dict(doc.get("aggregation", {})),
            ga=ga,
            targets=tuple(targets),
            optimize_rule=StrategyKind(opt.get("rule", StrategyKind.MacdCrossoverSigAbove0.value)),
            compare=bool(opt.get("compare", True)),
            bin_width=bin_width,
            data_doc=json.loads(json.dumps(data)),
            output_dir=_resolve(base, doc.get("output_dir", "out")),
            seed=seed,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, InvertedRange) as exc:
        raise ConfigError(f"invalid config: {type(exc).__name__}: {exc}") from exc


def load_config(path: str | os.PathLike) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    return replace(parse_config(doc, path.parent), source=path)

"""Genetic-algorithm search over MACD (fast, slow, signal) triples.

The objective is accumulated profit times win rate of a backtest run with
the candidate parameters. All randomness flows through one seeded
``numpy.random.Generator``, consumed in a fixed order, so a seed fully
determines the trace.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from .backtest import ExecutionConfig, run_backtest
from .errors import InfeasibleRanges, MacdLabError
from .indicators import MacdParams
from .marketdata import BarSeries
from .metrics import accumulated_profit, win_rate
from .signals import IndicatorCache, StrategyKind, StrategySpec, compute_signals


class Chromosome(NamedTuple):
    fast: int
    slow: int
    signal: int

    def as_params(self) -> MacdParams:
        return MacdParams(self.fast, self.slow, self.signal)


Range = tuple[int, int]
FitnessFn = Callable[[Chromosome], "float | None"]


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 30
    max_iterations: int = 100
    fast_range: Range = (4, 20)
    slow_range: Range = (6, 21)
    signal_range: Range = (4, 41)
    mutation_prob: float = 0.1
    elitism: int = 1
    convergence_patience: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("fast_range", "slow_range", "signal_range"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (int(lo), int(hi)))
            if lo > hi:
                raise InfeasibleRanges(f"{name} {lo}..{hi} is empty")
        if self.fast_range[0] < 1 or self.signal_range[0] < 1:
            raise InfeasibleRanges("periods must be >= 1")
        if self.fast_range[0] >= self.slow_range[1]:
            raise InfeasibleRanges(
                f"no fast < slow pair exists in fast {self.fast_range} and slow {self.slow_range}"
            )
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")
        if not 0 <= self.elitism <= self.population_size:
            raise ValueError("elitism must lie in [0, population_size]")
        if self.convergence_patience < 1:
            raise ValueError("convergence_patience must be >= 1")

    @property
    def ranges(self) -> tuple[Range, Range, Range]:
        return (self.fast_range, self.slow_range, self.signal_range)

    @classmethod
    def from_dict(cls, doc: dict) -> "GaConfig":
        doc = dict(doc)
        preset = doc.pop("preset", None)
        if preset == "wide_slow":
            doc.setdefault("slow_range", WIDE_SLOW_RANGE)
        elif preset is not None:
            raise ValueError(f"unknown GA preset {preset!r}")
        for key in ("fast_range", "slow_range", "signal_range"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key in ("fast_range", "slow_range", "signal_range"):
            doc[key] = list(doc[key])
        return doc


# widened slow-period range able to reach values like 27..35
WIDE_SLOW_RANGE = (6, 41)


class Generation(NamedTuple):
    generation: int
    best_fitness: float
    mean_fitness: float
    best: Chromosome


@dataclass
class GaTrace:
    generations: list[Generation] = field(default_factory=list)

    @property
    def best_fitness(self) -> list[float]:
        return [g.best_fitness for g in self.generations]

    def __len__(self) -> int:
        return len(self.generations)


TRACE_COLUMNS = ("generation", "best_fitness", "mean_fitness", "best_fast", "best_slow", "best_signal")


def trace_rows(trace: GaTrace) -> list[tuple]:
    return [(g.generation, g.best_fitness, g.mean_fitness, *g.best) for g in trace.generations]


# -- fitness -------------------------------------------------------------------

def fitness(
    chrom: Chromosome,
    series: BarSeries,
    rule: StrategyKind | StrategySpec = StrategyKind.MacdCrossoverSigAbove0,
    cfg: ExecutionConfig = ExecutionConfig(),
    cache: IndicatorCache | None = None,
) -> float | None:
    """Accumulated profit x win rate; 0 without trades, ``None`` if the backtest fails."""
    spec = rule if isinstance(rule, StrategySpec) else StrategySpec(StrategyKind(rule))
    try:
        signals = compute_signals(series, spec.with_macd(chrom.as_params()), cache)
        ledger = run_backtest(series, signals, cfg)
    except (MacdLabError, ValueError):
        return None
    wr = win_rate(ledger.trades)
    if wr is None:
        return 0.0
    # + 0.0 turns the -0.0 of an all-losing run into 0.0
    return accumulated_profit([ledger]).ap * wr + 0.0


def make_fitness(
    series: BarSeries | Sequence[BarSeries],
    rule: StrategyKind | StrategySpec = StrategyKind.MacdCrossoverSigAbove0,
    cfg: ExecutionConfig = ExecutionConfig(),
) -> FitnessFn:
    """Fitness closure over one series, or the sum over several.

    With several series a chromosome is culled if it fails on any of them.
    """
    many = [series] if isinstance(series, BarSeries) else list(series)
    caches = [IndicatorCache(s) for s in many]

    def score(chrom: Chromosome) -> float | None:
        total = 0.0
        for s, c in zip(many, caches):
            value = fitness(chrom, s, rule, cfg, c)
            if value is None:
                return None
            total += value
        return total

    return score


# -- operators ------------------------------------------------------------------

def _shifted_weights(fitnesses: Sequence[float], eps: float | None = None) -> np.ndarray:
    f = np.asarray(fitnesses, dtype=np.float64)
    if eps is None:
        eps = max(1e-12, 1e-9 * float(np.abs(f).max()))
    if (f <= 0).any():
        return f - f.min() + eps
    return f


def roulette_select(
    population: Sequence[Chromosome],
    fitnesses: Sequence[float],
    rng: np.random.Generator,
    eps: float | None = None,
) -> tuple[Chromosome, Chromosome]:
    """Draw two parents independently with probability proportional to fitness.

    When any fitness is non-positive all fitnesses are shifted by ``-min + eps``
    so every weight is positive.
    """
    if len(population) < 2 or len(population) != len(fitnesses):
        raise ValueError("need at least two chromosomes with one fitness each")
    weights = _shifted_weights(fitnesses, eps)
    cumulative = np.cumsum(weights)
    picks = np.searchsorted(cumulative, rng.random(2) * cumulative[-1], side="right")
    picks = np.minimum(picks, len(population) - 1)
    return population[int(picks[0])], population[int(picks[1])]


def crossover(a: Chromosome, b: Chromosome, rng: np.random.Generator, cut: int | None = None) -> Chromosome:
    """Single cut point in {1, 2}: genes before the cut from ``a``, the rest from ``b``."""
    if cut is None:
        cut = int(rng.integers(1, 3))
    if cut not in (1, 2):
        raise ValueError(f"cut must be 1 or 2, got {cut}")
    return Chromosome(*(a[:cut] + b[cut:]))


def mutate(c: Chromosome, cfg: GaConfig, rng: np.random.Generator) -> Chromosome:
    """With probability ``mutation_prob`` redraw one uniformly chosen gene from its range."""
    if rng.random() >= cfg.mutation_prob:
        return c
    gene = int(rng.integers(0, 3))
    lo, hi = cfg.ranges[gene]
    genes = list(c)
    genes[gene] = int(rng.integers(lo, hi + 1))
    return Chromosome(*genes)


def repair(c: Chromosome, cfg: GaConfig, rng: np.random.Generator) -> Chromosome:
    """Restore ``fast < slow`` by redrawing slow above fast, or else fast below slow."""
    if c.fast < c.slow:
        return c
    (f_lo, f_hi), (s_lo, s_hi), _ = cfg.ranges
    lo = max(c.fast + 1, s_lo)
    if lo <= s_hi:
        return c._replace(slow=int(rng.integers(lo, s_hi + 1)))
    hi = min(c.slow - 1, f_hi)
    if f_lo <= hi:
        return c._replace(fast=int(rng.integers(f_lo, hi + 1)))
    raise InfeasibleRanges(f"cannot repair {tuple(c)} within {cfg.ranges}")


def random_chromosome(cfg: GaConfig, rng: np.random.Generator) -> Chromosome:
    genes = [int(rng.integers(lo, hi + 1)) for lo, hi in cfg.ranges]
    return repair(Chromosome(*genes), cfg, rng)


def candidates(cfg: GaConfig) -> Iterator[Chromosome]:
    """Every valid chromosome in the configured ranges, in lexicographic order."""
    (f_lo, f_hi), (s_lo, s_hi), (g_lo, g_hi) = cfg.ranges
    for f in range(f_lo, f_hi + 1):
        for s in range(max(s_lo, f + 1), s_hi + 1):
            for g in range(g_lo, g_hi + 1):
                yield Chromosome(f, s, g)


def exhaustive_search(cfg: GaConfig, fitness_fn: FitnessFn) -> tuple[Chromosome, float]:
    """Brute-force optimum; ties go to the lexicographically smallest triple."""
    best: tuple[Chromosome, float] | None = None
    for chrom in candidates(cfg):
        value = fitness_fn(chrom)
        if value is not None and (best is None or value > best[1]):
            best = (chrom, value)
    if best is None:
        raise InfeasibleRanges("no candidate could be evaluated")
    return best


# -- evolution ------------------------------------------------------------------

def evolve(cfg: GaConfig, fitness_fn: FitnessFn) -> tuple[Chromosome, GaTrace]:
    """Run the GA and return the best chromosome seen plus the per-generation trace.

    Each generation is evaluated, the ``elitism`` best carried over
    unchanged, and the rest bred by roulette selection, crossover, mutation
    and repair. The run stops after ``max_iterations`` evaluated generations
    or once the best fitness has not changed for ``convergence_patience``
    generations. Culled chromosomes (fitness ``None``) are never selected.
    """
    rng = np.random.default_rng(cfg.seed)
    memo: dict[Chromosome, float | None] = {}

    def evaluate(c: Chromosome) -> float | None:
        if c not in memo:
            memo[c] = fitness_fn(c)
        return memo[c]

    population = [random_chromosome(cfg, rng) for _ in range(cfg.population_size)]
    trace = GaTrace()
    stale = 0
    for gen in range(cfg.max_iterations):
        scores = [evaluate(c) for c in population]
        alive = [i for i, s in enumerate(scores) if s is not None]
        if not alive:
            raise InfeasibleRanges(f"generation {gen}: every chromosome failed to evaluate")
        # best first; ties keep population order
        ranked = sorted(alive, key=lambda i: -scores[i])
        best_i = ranked[0]
        best_score = float(scores[best_i])
        mean_score = math.fsum(scores[i] for i in alive) / len(alive)
        if trace.generations and best_score == trace.generations[-1].best_fitness:
            stale += 1
        else:
            stale = 0
        trace.generations.append(Generation(gen, best_score, mean_score, population[best_i]))
        if stale >= cfg.convergence_patience or gen == cfg.max_iterations - 1:
            break

        pool = [population[i] for i in alive]
        pool_scores = [scores[i] for i in alive]
        if len(pool) == 1:
            pool, pool_scores = pool * 2, pool_scores * 2
        nxt = [population[i] for i in ranked[: cfg.elitism]]
        while len(nxt) < cfg.population_size:
            a, b = roulette_select(pool, pool_scores, rng)
            child = repair(mutate(crossover(a, b, rng), cfg, rng), cfg, rng)
            nxt.append(child)
        population = nxt

    best = max(trace.generations, key=lambda g: g.best_fitness)
    return best.best, trace


def optimize(
    series: BarSeries | Sequence[BarSeries],
    rule: StrategyKind | StrategySpec = StrategyKind.MacdCrossoverSigAbove0,
    ga: GaConfig = GaConfig(),
    exec_cfg: ExecutionConfig = ExecutionConfig(),
) -> tuple[Chromosome, GaTrace]:
    """:func:`evolve` with the backtest-driven fitness on ``series``."""
    return evolve(ga, make_fitness(series, rule, exec_cfg))

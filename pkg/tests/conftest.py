import datetime as dt
import json
from pathlib import Path

import numpy as np
import pytest

from macdlab.marketdata import Universe, read_csv_file
from macdlab.synthetic import random_walk_bars

FIXTURES = Path(__file__).parent / "fixtures"


def random_series(seed: int, n: int = 300, symbol: str = "RND"):
    """A random-walk series of exactly ``n`` bars starting 2015-01-01."""
    rng = np.random.default_rng(seed)
    start = dt.date(2015, 1, 1)
    end = start + dt.timedelta(days=int(n * 1.5) + 10)
    series = random_walk_bars(
        symbol,
        start,
        end,
        seed=seed,
        price0=float(rng.uniform(5, 500)),
        drift=float(rng.normal(0, 0.001)),
        vol=float(rng.uniform(0.005, 0.04)),
    )
    assert len(series) >= n
    return series.slice(0, n)


def close_list(xs, ys, tol):
    """Elementwise match of two optional-float lists (None must line up)."""
    assert len(xs) == len(ys)
    for i, (x, y) in enumerate(zip(xs, ys)):
        if x is None or y is None:
            assert x is None and y is None, f"definedness differs at {i}: {x} vs {y}"
        else:
            assert abs(x - y) <= tol * max(1.0, abs(y)), f"index {i}: {x} vs {y}"


@pytest.fixture(scope="session")
def stocks10():
    doc = json.loads((FIXTURES / "stocks10" / "universe.json").read_text())
    universe = Universe.from_dict(doc)
    data = {s: read_csv_file(FIXTURES / "stocks10" / f"{s}.csv") for s in universe.symbols}
    return universe, data


@pytest.fixture(scope="session")
def etf():
    return read_csv_file(FIXTURES / "etf" / "ETF1.csv")


@pytest.fixture(scope="session")
def sar_fixture():
    return read_csv_file(FIXTURES / "sar_reversal.csv")


# -- acceptance summary ----------------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    marker = "test_acceptance.py::test_criterion_"
    if marker not in report.nodeid:
        return
    number = int(report.nodeid.split(marker)[1].split("_")[0])
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        ACCEPTANCE_RESULTS[number] = (outcome, report.nodeid.split("::")[-1])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        outcome, name = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {outcome}  ({name})")

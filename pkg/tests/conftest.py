"""Shared fixtures and generators for the test suite."""
from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from hypothesis import settings

from pbrkit.demo import DEMO_COUNTRIES, fixture_path, tiny_panel
from pbrkit.panel import Panel

settings.register_profile("pbrkit", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("pbrkit")


def random_panel(seed: int, n_countries: int = 6, n_diseases: int = 4, n_years: int = 3,
                 zero_frac: float = 0.2, complete: bool = True) -> Panel:
    """Lognormal participants/DALYs on a country x disease x year grid."""
    rng = np.random.default_rng(seed)
    countries = list(DEMO_COUNTRIES[:n_countries])
    rows = []
    for c in countries:
        for d in range(n_diseases):
            for y in range(2000, 2000 + n_years):
                if not complete and rng.random() < 0.15:
                    continue
                p = 0.0 if rng.random() < zero_frac else float(rng.lognormal(3, 1.5))
                rows.append((c, d, y, p, float(rng.lognormal(8, 1))))
    df = pd.DataFrame(rows, columns=["country", "disease", "year", "participants", "dalys"])
    if df.participants.sum() <= 0:
        df.loc[0, "participants"] = 1.0
    return Panel.from_frame(df)


@pytest.fixture
def tiny():
    return tiny_panel()


@pytest.fixture(scope="session")
def demo_config_path():
    return fixture_path("demo_config.yaml")


@pytest.fixture(scope="session")
def demo_panel():
    from pbrkit.panel import ingest_panel
    return ingest_panel(fixture_path("demo_panel.csv"))


@pytest.fixture(scope="session")
def demo_predictors():
    from pbrkit.predictors import ingest_predictors
    return ingest_predictors(fixture_path("demo_predictors.csv"))


@pytest.fixture(scope="session")
def demo_run(tmp_path_factory, demo_config_path):
    """One full pipeline run on the demo fixture, shared across test files."""
    from pbrkit.config import load_config
    from pbrkit.pipeline import run_pipeline
    out = tmp_path_factory.mktemp("demo_run")
    manifest = run_pipeline(load_config(demo_config_path, out=str(out)))
    return out, manifest


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number, title, ok, detail=""):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        line = f"criterion {number:>2} {status}  {title}" + (f"  ({detail})" if detail else "")
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

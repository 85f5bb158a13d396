"""Bundled synthetic fixtures.

``tiny`` is a 3 country x 2 disease x 2 year panel small enough to check
by hand. ``demo`` is a generated 40-country panel with predictors and
as-expected components, used to exercise every pipeline stage.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .panel import DISEASES, Panel, emit_panel

TINY_ROWS = [
    # country, disease id, year, participants, dalys
    ("USA", 0, 2000, 6.0, 10.0), ("USA", 0, 2001, 4.0, 10.0),
    ("USA", 1, 2000, 8.0, 20.0), ("USA", 1, 2001, 2.0, 20.0),
    ("GBR", 0, 2000, 3.0, 5.0), ("GBR", 0, 2001, 1.0, 5.0),
    ("GBR", 1, 2000, 0.0, 10.0), ("GBR", 1, 2001, 2.0, 10.0),
    ("KEN", 0, 2000, 1.0, 20.0), ("KEN", 0, 2001, 1.0, 20.0),
    ("KEN", 1, 2000, 1.0, 30.0), ("KEN", 1, 2001, 2.0, 30.0),
]

DEMO_COUNTRIES = (
    "ARG", "AUS", "BGD", "BRA", "CAN", "CHE", "CHN", "COL", "DEU", "DNK",
    "EGY", "ESP", "ETH", "FRA", "GBR", "GHA", "IDN", "IND", "IRN", "ITA",
    "JPN", "KEN", "KOR", "MEX", "MYS", "NGA", "NLD", "NOR", "PAK", "PER",
    "PHL", "POL", "SWE", "THA", "TUR", "TZA", "UGA", "USA", "VNM", "ZAF",
)
DEMO_YEARS = tuple(range(2000, 2010))
DEMO_SEED = 20240501


def tiny_panel() -> Panel:
    df = pd.DataFrame(TINY_ROWS, columns=["country", "disease", "year", "participants", "dalys"])
    return Panel.from_frame(df)


def _demo_tables(seed: int = DEMO_SEED):
    rng = np.random.default_rng(seed)
    n = len(DEMO_COUNTRIES)
    log_pop = rng.normal(16.5, 1.4, n)
    dev = rng.normal(0, 1, n)  # latent development level
    log_gdp_pc = 9.0 + 1.1 * dev + rng.normal(0, 0.3, n)
    pop = np.exp(log_pop)
    gdp = np.exp(log_pop + log_gdp_pc)
    rd = np.clip(1.5 + 0.9 * dev + rng.normal(0, 0.5, n), 0.05, None)
    pubs = np.exp(log_pop - 7.5 + 1.2 * dev + rng.normal(0, 0.4, n))
    health_exp = gdp * np.clip(0.07 + 0.02 * dev + rng.normal(0, 0.01, n), 0.02, None)
    beds = pop * np.clip(3.0 + 1.2 * dev + rng.normal(0, 0.8, n), 0.3, None) / 1000
    hospitals = pop * np.clip(2.0 + 0.5 * dev + rng.normal(0, 0.5, n), 0.2, None) / 100000
    raw = pd.DataFrame({
        "country": DEMO_COUNTRIES,
        "income_group": np.select([dev > 0.6, dev > 0.0, dev > -0.7], ["High", "UpperMiddle", "LowerMiddle"], "Low"),
        "gdp": gdp,
        "population": pop,
        "publications": pubs,
        "health_exp": health_exp,
        "hospitals": hospitals,
        "hospital_beds": beds,
        "rd_expenditure": rd,
        "total_citations": pubs * np.exp(2.0 + 0.3 * dev + rng.normal(0, 0.3, n)),
        "doctors_per_10k": np.clip(15 + 10 * dev + rng.normal(0, 4, n), 0.5, None),
        "hdi": np.clip(0.72 + 0.12 * dev + rng.normal(0, 0.03, n), 0.3, 0.98),
        "democracy_index": np.clip(6 + 1.8 * dev + rng.normal(0, 1.2, n), 1, 10),
    })
    for col, frac in (("rd_expenditure", 0.1), ("doctors_per_10k", 0.1), ("total_citations", 0.05)):
        miss = rng.random(n) < frac
        raw.loc[miss, col] = np.nan

    n_d = len(DISEASES)
    burden_rate = rng.lognormal(-6.0, 0.8, n_d)
    poverty = np.clip(-dev, -1.5, None)
    disease_tilt = rng.normal(0, 1, n_d)  # > 0: burden concentrated in poorer countries
    research_focus = rng.normal(0, 0.5, n_d)
    rows = []
    for ci, c in enumerate(DEMO_COUNTRIES):
        lp = 1.0 * (rd[ci] - 1.5) + 0.6 * dev[ci] + rng.normal(0, 0.4)
        for d in range(n_d):
            base_b = pop[ci] * burden_rate[d] * np.exp(0.5 * disease_tilt[d] * poverty[ci])
            affinity = research_focus[d] + rng.normal(0, 0.6)
            active = rng.random() > 0.12 + 0.1 * (dev[ci] < -0.7)
            for y in DEMO_YEARS:
                b = base_b * np.exp(rng.normal(0, 0.1) - 0.01 * (y - 2000))
                if active and rng.random() > 0.15:
                    mu = b * 1e-3 * np.exp(lp + affinity + 0.04 * (y - 2000) + rng.normal(0, 0.5))
                    p = round(float(mu), 2)
                else:
                    p = 0.0
                rows.append((c, d, y, p, round(float(b), 2)))
    panel = Panel.from_frame(pd.DataFrame(rows, columns=["country", "disease", "year", "participants", "dalys"]))

    comp = []
    for c in DEMO_COUNTRIES:
        ci = DEMO_COUNTRIES.index(c)
        for d in range(n_d):
            comp.append((c, d, float(np.exp(0.8 * dev[ci] + rng.normal(0, 0.5))),
                         float(np.exp(0.5 * poverty[ci] * disease_tilt[d] + rng.normal(0, 0.5))),
                         float(np.exp(0.5 * rd[ci] + rng.normal(0, 0.5)))))
    components = pd.DataFrame(comp, columns=["country", "disease", "authorship", "burden", "recruitment"])
    return panel, raw, components


def _csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, lineterminator="\n", float_format="%.10g")


def demo_texts(seed: int = DEMO_SEED) -> dict[str, str]:
    """Text of the generated demo files keyed by file name."""
    panel, raw, comp = _demo_tables(seed)
    return {
        "demo_panel.csv": emit_panel(panel),
        "demo_predictors.csv": _csv(raw),
        "demo_components.csv": _csv(comp),
    }


def tiny_text() -> str:
    return emit_panel(tiny_panel())


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled data file."""
    return Path(str(resources.files("pbrkit") / "data" / name))


def write_fixtures(directory: str | Path, seed: int = DEMO_SEED) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    texts = {"tiny_panel.csv": tiny_text(), **demo_texts(seed)}
    out = []
    for name, text in texts.items():
        p = directory / name
        p.write_text(text, encoding="utf-8")
        out.append(p)
    cfg = ("# demo configuration; paths are relative to this file\n"
           "panel: demo_panel.csv\npredictors: demo_predictors.csv\n"
           "components: demo_components.csv\nseed: 42\n")
    (directory / "demo_config.yaml").write_text(cfg, encoding="utf-8")
    (directory / "tiny_config.yaml").write_text(
        "# tiny hand-checkable panel, no predictors\npanel: tiny_panel.csv\nseed: 42\n", encoding="utf-8")
    return out + [directory / "demo_config.yaml", directory / "tiny_config.yaml"]


if __name__ == "__main__":  # regenerate the bundled files
    for p in write_fixtures(Path(__file__).parent / "data"):
        print(p)

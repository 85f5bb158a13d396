"""Plot-ready tables built from pipeline results."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError
from .metrics import lorenz
from .outputs import read_csv, read_json

FIGURES = ("lorenz", "waterfall", "choropleth", "cis_bars", "theil_timeline", "network_metrics")
CHOROPLETH_LIMIT = 1.5


def lorenz_figure(pairs: pd.DataFrame) -> pd.DataFrame:
    """Participant share against burden share over country-disease pairs."""
    keys = list(zip(pairs.country, pairs.disease))
    curve = lorenz(pairs.pbr.to_numpy(), pairs.dalys.to_numpy(), keys).simplified()
    return curve.frame()


def step_label(fraction: float) -> str:
    if fraction == 0:
        return "Baseline"
    if fraction >= 1:
        return "All Countries"
    return f"Top {100 * fraction:g}%"


def waterfall_figure(steps: pd.DataFrame) -> pd.DataFrame:
    out = steps.copy()
    out.insert(0, "step", [step_label(f) for f in out.fraction])
    return out.rename(columns={"n_adjusted": "countries"})[
        ["step", "fraction", "countries", "gini", "pct_reduction", "ci_low", "ci_high"]]


def choropleth_figure(national: pd.DataFrame, limit: float = CHOROPLETH_LIMIT, clamp: bool = True) -> pd.DataFrame:
    """(iso3, log PBR) with values outside [-limit, limit] clamped and flagged."""
    pbr = national.pbr.to_numpy(dtype=np.float64)
    with np.errstate(divide="ignore"):
        v = np.log(pbr)
    flagged = np.abs(v) > limit
    shown = np.clip(v, -limit, limit) if clamp else v
    return pd.DataFrame({"iso3": national.country, "value": shown,
                         "clamped": flagged & clamp, "raw_log_pbr": v})


def cis_bars_figure(cis: pd.DataFrame) -> pd.DataFrame:
    return cis.sort_values("cis_percent", ascending=False, kind="stable").reset_index(drop=True)


def theil_timeline_figure(bins: pd.DataFrame) -> pd.DataFrame:
    return bins.sort_values("bin", kind="stable").reset_index(drop=True)


def network_metrics_figure(baseline: dict, evolution: pd.DataFrame | None = None) -> pd.DataFrame:
    rows = [{"metric": k, "step": "baseline", "delta_g": 0.0, "value": v, "ci_low": None, "ci_high": None}
            for k, v in baseline.items() if isinstance(v, (int, float)) and not isinstance(v, bool)]
    if evolution is not None:
        for r in evolution.itertuples(index=False):
            rows.append({"metric": r.metric, "step": str(r.step), "delta_g": r.delta_g, "value": r.value,
                         "ci_low": r.ci_low, "ci_high": r.ci_high})
    return pd.DataFrame(rows)


def _need(path: Path, figure: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"figure {figure!r} needs {path.name}; run the producing stage first")
    return path


def emit_figure_data(results: str | Path, figure: str, scenario: str = "full",
                     clamp: bool = True) -> pd.DataFrame:
    """Build the table for ``figure`` from a pipeline results directory."""
    d = Path(results)
    if figure == "lorenz":
        return lorenz_figure(read_csv(_need(d / "pairs.csv", figure)))
    if figure == "waterfall":
        return waterfall_figure(read_csv(_need(d / f"scenario_{scenario}.csv", figure)))
    if figure == "choropleth":
        return choropleth_figure(read_csv(_need(d / "national.csv", figure)), clamp=clamp)
    if figure == "cis_bars":
        return cis_bars_figure(read_csv(_need(d / "cis_disease.csv", figure)))
    if figure == "theil_timeline":
        return theil_timeline_figure(read_csv(_need(d / "theil_bins.csv", figure)))
    if figure == "network_metrics":
        base = read_json(_need(d / "network_metrics.json", figure))
        evo = d / "network_evolution.csv"
        return network_metrics_figure(base, read_csv(evo) if evo.is_file() else None)
    raise ConfigError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")

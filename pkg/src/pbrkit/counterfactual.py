"""National PBR aggregation and full/targeted alignment counterfactuals."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from . import kernels
from .errors import DataValidationError, NumericalError
from .panel import Panel
from .stats import paired_t_test, percentile_ci, rng_for

FULL_STEPS = (0.25, 0.5, 0.75, 1.0)
TARGETED_STEPS = (0.1, 0.2, 0.3, 0.4)
SCENARIOS = {"full": ("Full", FULL_STEPS), "targeted": ("Targeted", TARGETED_STEPS)}
RANKINGS = ("log", "abs", "participants")


@dataclass(frozen=True)
class NationalPbr:
    country: str
    participants_total: float
    dalys_total: float
    pbr: float
    participant_share: float
    daly_share: float


def national_pbr(panel: Panel, period: tuple[int, int] | None = None,
                 include_zero: bool = False) -> list[NationalPbr]:
    """Share-normalized PBR per country, summed over diseases (and years).

    Shares are taken over the countries returned, so both share columns
    sum to one. Countries without participants are dropped unless
    ``include_zero``.
    """
    p = panel if period is None or "year" not in panel.dims else panel.select(period=period)
    t = p.totals(("country",))
    keep = t.dalys > 0
    if not include_zero:
        keep &= t.participants > 0
    t = t[keep]
    if len(t) < 2:
        raise DataValidationError("need at least two countries with participants and DALYs")
    tp, tb = math.fsum(t.participants), math.fsum(t.dalys)
    if tp <= 0 or tb <= 0:
        raise NumericalError("zero global totals")
    out = []
    for c, row in t.iterrows():
        ps, bs = row.participants / tp, row.dalys / tb
        out.append(NationalPbr(str(c), float(row.participants), float(row.dalys), ps / bs, ps, bs))
    return out


def national_frame(records: Sequence[NationalPbr]) -> pd.DataFrame:
    return pd.DataFrame([r.__dict__ for r in records])


def read_national(source) -> list[NationalPbr]:
    """Load a national table with at least ``country`` and ``pbr`` columns."""
    df = pd.read_csv(source)
    if not {"country", "pbr"} <= set(df.columns):
        raise DataValidationError("national table needs country and pbr columns")
    if (df.pbr < 0).any() or df.pbr.isna().any():
        raise DataValidationError("pbr must be non-negative")
    get = lambda col: df[col].to_numpy(dtype=float) if col in df else np.full(len(df), np.nan)
    cols = [get(c) for c in ("participants_total", "dalys_total", "participant_share", "daly_share")]
    return [NationalPbr(str(c), a, b, float(v), s1, s2)
            for c, v, a, b, s1, s2 in zip(df.country, df.pbr, *cols)]


@dataclass(frozen=True)
class ScenarioStep:
    fraction: float
    n_adjusted: int
    gini: float
    pct_reduction: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    baseline_gini: float
    median: float
    steps: tuple[ScenarioStep, ...]
    p_value: float
    ranking: str
    n_bootstrap: int
    seed: int
    baseline_replicates: np.ndarray
    adjusted_replicates: np.ndarray  # (n_bootstrap, n_steps) excluding the baseline row

    @property
    def final(self) -> ScenarioStep:
        return self.steps[-1]

    @property
    def efficiency(self) -> float:
        """Percent Gini reduction per percent of countries adjusted at the final step."""
        f = self.final
        return float(f.pct_reduction / (100.0 * f.fraction))

    @property
    def monotone(self) -> bool:
        red = [s.pct_reduction for s in self.steps]
        return all(b >= a - 1e-12 for a, b in zip(red, red[1:]))

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([s.__dict__ for s in self.steps])

    def replicate_reductions(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return 100.0 * ((self.baseline_replicates[:, None] - self.adjusted_replicates)
                            / self.baseline_replicates[:, None])


def deviation(values: np.ndarray, median: float, ranking: str = "log",
              participants: np.ndarray | None = None) -> np.ndarray:
    """Ranking key (larger = adjusted earlier)."""
    if ranking == "log":
        with np.errstate(divide="ignore"):
            return np.abs(np.log(values / median))  # zero pbr ranks first (inf)
    if ranking == "abs":
        return np.abs(values - median)
    if ranking == "participants":
        if participants is None or np.isnan(participants).any():
            raise DataValidationError("participant ranking needs participant totals")
        return np.asarray(participants, dtype=np.float64)
    raise ValueError(f"ranking must be one of {RANKINGS}")


def simulate(scenario: str, national: Sequence[NationalPbr], steps: Sequence[float] | None = None,
             bootstrap_iters: int = 200, seed: int = 0, ranking: str = "log") -> ScenarioResult:
    """Replace the top-k deviating countries' PBR by the baseline median.

    k = floor(n * fraction) per step. Bootstrap resamples countries with
    replacement; the resample indices depend only on ``seed`` so different
    scenarios on the same list are paired replicate by replicate.
    """
    key = scenario.lower()
    if key not in SCENARIOS:
        raise ValueError("scenario must be 'full' or 'targeted'")
    label, default_steps = SCENARIOS[key]
    steps = tuple(float(s) for s in (steps or default_steps))
    if any(not 0 < s <= 1 for s in steps) or any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValueError("steps must be ascending in (0, 1]")
    values = np.array([r.pbr for r in national], dtype=np.float64)
    n = values.size
    if n < 2:
        raise DataValidationError("need at least two countries")
    ks = np.array([math.floor(n * s) for s in steps], dtype=np.int64)
    if (ks == 0).any():
        raise DataValidationError(f"{n} countries too few: a step adjusts zero countries")
    median = float(np.median(values))
    dev = deviation(values, median, ranking, np.array([r.participants_total for r in national]))
    g0 = float(kernels.gini(values))
    if not g0 > 0:
        # already equal: every step is a no-op
        zero = tuple(ScenarioStep(f, int(k), 0.0, 0.0, 0.0, 0.0) for f, k in zip(steps, ks))
        base = ScenarioStep(0.0, 0, 0.0, 0.0, 0.0, 0.0)
        return ScenarioResult(label, 0.0, median, (base,) + zero, 1.0, ranking, bootstrap_iters,
                              seed, np.zeros(bootstrap_iters), np.zeros((bootstrap_iters, ks.size)))
    adj = kernels.aligned_gini(values, dev, median, ks)
    idx = np.array([rng_for(seed, "counterfactual", i).integers(0, n, n) for i in range(bootstrap_iters)],
                   dtype=np.int64).reshape(bootstrap_iters, n)
    base_r, adj_r = kernels.bootstrap_alignment(values, dev, idx, median, ks)
    with np.errstate(divide="ignore", invalid="ignore"):
        red_r = 100.0 * ((base_r[:, None] - adj_r) / base_r[:, None])
    out = [ScenarioStep(0.0, 0, g0, 0.0, 0.0, 0.0)]
    for j, (f, k) in enumerate(zip(steps, ks)):
        lo, hi = percentile_ci(red_r[:, j]) if bootstrap_iters else (math.nan, math.nan)
        out.append(ScenarioStep(f, int(k), float(adj[j]), float(100.0 * ((g0 - adj[j]) / g0)), lo, hi))
    p = paired_gini_test(base_r, adj_r[:, -1]) if bootstrap_iters >= 2 else math.nan
    return ScenarioResult(label, g0, median, tuple(out), p, ranking, bootstrap_iters, seed, base_r, adj_r)


def paired_gini_test(baseline, adjusted) -> float:
    """Two-sided paired t-test; identical samples are an exact tie with p = 1."""
    return paired_t_test(baseline, adjusted)


@dataclass(frozen=True)
class Efficiency:
    ratio: float
    ci_low: float
    ci_high: float
    p_value: float
    full: float
    targeted: float


def efficiency(full: ScenarioResult, targeted: ScenarioResult) -> Efficiency:
    """Targeted-to-full ratio of final-step efficiencies, with paired bootstrap CI."""
    if full.efficiency == 0:
        raise NumericalError("full scenario has zero efficiency")
    if full.n_bootstrap != targeted.n_bootstrap or full.seed != targeted.seed or \
            not np.array_equal(full.baseline_replicates, targeted.baseline_replicates):
        raise DataValidationError("scenarios were not bootstrapped on the same resamples")
    ratio = targeted.efficiency / full.efficiency
    if full.n_bootstrap < 2:
        return Efficiency(float(ratio), math.nan, math.nan, math.nan, float(full.efficiency),
                          float(targeted.efficiency))
    ef = full.replicate_reductions()[:, -1] / (100.0 * full.final.fraction)
    et = targeted.replicate_reductions()[:, -1] / (100.0 * targeted.final.fraction)
    ok = np.isfinite(ef) & np.isfinite(et) & (ef != 0)
    lo, hi = percentile_ci(et[ok] / ef[ok])
    return Efficiency(float(ratio), lo, hi, paired_t_test(et[ok], ef[ok]), float(full.efficiency),
                      float(targeted.efficiency))

"""Participation-to-burden ratios and inequality measures."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats as _st

from . import kernels
from .errors import DataValidationError, NumericalError
from .panel import DISEASES, DiseaseCategory, Panel
from .stats import BootstrapSpec, percentile_ci

UNITS = ("disease", "country")
WEIGHTINGS = ("equal", "participant_weighted")


@dataclass(frozen=True)
class PbrRecord:
    country: str
    disease: int
    year: int | None
    pbr: float
    log_pbr: float | None  # None marks zero participation

    @property
    def zero_participation(self) -> bool:
        return self.log_pbr is None


def _period_panel(panel: Panel, period: tuple[int, int] | None) -> Panel:
    if period is None or "year" not in panel.dims:
        return panel
    return panel.select(period=period)


def pair_table(panel: Panel, period: tuple[int, int] | None = None,
               by_year: bool = False, variant: str = "global") -> pd.DataFrame:
    """PBR for every country-disease(-year) cell present in the panel.

    ``variant="global"`` normalizes by the disease's global totals;
    ``variant="within_country"`` by the country's all-disease totals.
    Cells whose normalizing participant total is zero are dropped and
    counted in ``df.attrs["n_dropped"]``.
    """
    p = _period_panel(panel, period)
    df = p.frame()
    keys = ["country", "disease"] + (["year"] if by_year and "year" in df else [])
    df = df.groupby(keys, sort=True)[["participants", "dalys"]].sum().reset_index()
    if variant == "global":
        norm = ["disease"] + (["year"] if "year" in keys else [])
    elif variant == "within_country":
        norm = ["country"] + (["year"] if "year" in keys else [])
    else:
        raise ValueError(f"unknown PBR variant {variant!r}")
    tot = df.groupby(norm)[["participants", "dalys"]].transform("sum")
    ok = tot.participants > 0
    df = df[ok].copy()
    tot = tot[ok]
    df["pbr"] = (df.participants / tot.participants) / (df.dalys / tot.dalys)
    with np.errstate(divide="ignore"):
        df["log_pbr"] = np.where(df.pbr > 0, np.log(df.pbr.where(df.pbr > 0, 1.0)), np.nan)
    df = df.reset_index(drop=True)
    df.attrs["n_dropped"] = int((~ok).sum())
    return df


def pbr(panel: Panel, country: str, disease, period: tuple[int, int] | None = None,
        variant: str = "global") -> PbrRecord:
    """PBR of one country-disease pair aggregated over ``period``.

    A missing cell counts as zero participants.
    """
    d = DiseaseCategory.parse(disease).id
    p = _period_panel(panel, period)
    df = p.frame()
    cell = df[(df.country == country) & (df.disease == d)]
    if cell.empty or cell.dalys.sum() <= 0:
        raise DataValidationError(f"no burden recorded for {country}/{DISEASES[d]}")
    if variant == "global":
        ref = df[df.disease == d]
    elif variant == "within_country":
        ref = df[df.country == country]
    else:
        raise ValueError(f"unknown PBR variant {variant!r}")
    P, B = ref.participants.sum(), ref.dalys.sum()
    if P <= 0 or B <= 0:
        raise DataValidationError("normalizing participant/burden totals must be positive")
    value = (cell.participants.sum() / P) / (cell.dalys.sum() / B)
    return PbrRecord(country, d, None, float(value), math.log(value) if value > 0 else None)


def specialization_table(panel: Panel, period: tuple[int, int] | None = None) -> pd.DataFrame:
    """Specialization index for all pairs of countries with participants."""
    df = _period_panel(panel, period).frame()
    df = df.groupby(["country", "disease"])["participants"].sum().reset_index()
    grand = df.participants.sum()
    by_c = df.groupby("country").participants.transform("sum")
    by_d = df.groupby("disease").participants.transform("sum")
    ok = (by_c > 0) & (by_d > 0)
    df = df[ok].copy()
    df["si"] = (df.participants / by_c[ok]) / (by_d[ok] / grand)
    return df.reset_index(drop=True)


def specialization_index(panel: Panel, country: str, disease,
                         period: tuple[int, int] | None = None) -> float:
    d = DiseaseCategory.parse(disease).id
    df = _period_panel(panel, period).frame()
    p_c = df.loc[df.country == country, "participants"].sum()
    p_d = df.loc[df.disease == d, "participants"].sum()
    if p_c <= 0:
        raise DataValidationError(f"{country} has no participants in the period")
    if p_d <= 0:
        raise DataValidationError(f"{DISEASES[d]} has no participants in the period")
    p_cd = df.loc[(df.country == country) & (df.disease == d), "participants"].sum()
    return float((p_cd / p_c) / (p_d / df.participants.sum()))


def _check_values(values) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise DataValidationError("gini needs at least one value")
    if np.any(~np.isfinite(x)):
        raise DataValidationError("values must be finite")
    if np.any(x < 0):
        raise DataValidationError("values must be nonnegative")
    if x.sum() <= 0:
        raise DataValidationError("values sum to zero")
    return x


def gini(values) -> float:
    """Gini coefficient: sum((2i - n - 1) x_(i)) / (n sum(x)) over sorted x."""
    return float(kernels.gini(_check_values(values)))


def weighted_gini(values, weights) -> float:
    """Gini with nonnegative frequency weights (mean-difference form)."""
    x = _check_values(values)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape != x.shape or np.any(w < 0) or w.sum() <= 0:
        raise DataValidationError("weights must match values, be >= 0 and sum > 0")
    if (w * x).sum() <= 0:
        raise DataValidationError("weighted total is zero")
    return float(kernels.weighted_gini(x, w))


@dataclass(frozen=True)
class LorenzCurve:
    x: np.ndarray  # cumulative weight (burden) share
    y: np.ndarray  # cumulative value (participant) share
    gini: float

    @property
    def area(self) -> float:
        """Area between the curve and the equality diagonal."""
        return self.gini / 2.0

    def simplified(self, tol: float = 1e-12) -> "LorenzCurve":
        """Drop interior vertices collinear with their neighbours."""
        keep = [0]
        for i in range(1, len(self.x) - 1):
            a = keep[-1]
            cross = ((self.x[i] - self.x[a]) * (self.y[i + 1] - self.y[a])
                     - (self.y[i] - self.y[a]) * (self.x[i + 1] - self.x[a]))
            if abs(cross) > tol:
                keep.append(i)
        keep.append(len(self.x) - 1)
        return LorenzCurve(self.x[keep], self.y[keep], self.gini)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({"cum_burden_share": self.x, "cum_participant_share": self.y})


def lorenz(values, weights=None, keys: Sequence | None = None) -> LorenzCurve:
    """Lorenz curve of ``values`` (PBRs) with optional burden ``weights``.

    Points are ordered by value; ties are broken by ``keys`` (e.g.
    ``(country, disease)`` tuples) and then by position. With burden
    weights the y-coordinate is the cumulative share of ``value * weight``
    (participants), so the curve plots participant share against burden
    share. The Gini returned is one minus twice the area under the curve.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise DataValidationError("lorenz needs at least two points")
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    _check_values(v)
    if w.shape != v.shape or np.any(w < 0) or w.sum() <= 0 or (v * w).sum() <= 0:
        raise DataValidationError("weights must match values with positive totals")
    tie = np.arange(v.size)
    if keys is not None:
        keys = list(keys)
        tie[sorted(range(v.size), key=lambda i: keys[i])] = np.arange(v.size)
    order = np.lexsort((tie, v))
    vs, ws = v[order], w[order]
    x = np.concatenate([[0.0], np.cumsum(ws) / ws.sum()])
    mass = vs * ws
    y = np.concatenate([[0.0], np.cumsum(mass) / mass.sum()])
    x[-1] = y[-1] = 1.0
    g = 1.0 - np.sum(np.diff(x) * (y[1:] + y[:-1]))
    return LorenzCurve(x, y, float(g))


# -- contribution to inequality --------------------------------------------

@dataclass(frozen=True)
class CisRecord:
    unit: str
    target: object
    cis_percent: float
    ci_low: float | None
    ci_high: float | None
    weighting: str
    n_skipped: int = 0


def _gini_of(values: np.ndarray, weights: np.ndarray | None) -> float:
    if values.size == 0 or values.sum() <= 0:
        return math.nan
    if weights is None:
        return float(kernels.gini(values))
    if weights.sum() <= 0 or (values * weights).sum() <= 0:
        return math.nan
    return float(kernels.weighted_gini(values, weights))


def _cis_value(values, weights, mask) -> float:
    g_all = _gini_of(values, weights)
    g_minus = _gini_of(values[~mask], None if weights is None else weights[~mask])
    if math.isnan(g_all) or math.isnan(g_minus):
        return math.nan
    if g_all == 0.0:
        return 0.0  # no inequality to attribute
    return 100.0 * ((g_all - g_minus) / g_all)


def _unit_codes(pairs: pd.DataFrame, unit: str):
    if unit not in UNITS:
        raise ValueError(f"unit must be one of {UNITS}")
    col = pairs[unit].to_numpy()
    return col


def _normalize_target(unit: str, target):
    return DiseaseCategory.parse(target).id if unit == "disease" else target


def cis(pairs: pd.DataFrame, unit: str, target, weighting: str = "equal",
        n_bootstrap: int = 1000, seed: int = 0,
        percentiles: tuple[float, float] = (2.5, 97.5),
        indices: np.ndarray | None = None) -> CisRecord:
    """Leave-one-unit-out contribution to inequality, in percent.

    Positive values mean removing the unit lowers the Gini. The bootstrap
    resamples country-disease pairs; resamples without the target are
    skipped. Resamples depend on (seed, unit) only, so all targets of one
    unit type share them; ``indices`` passes them in precomputed.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    col = _unit_codes(pairs, unit)
    target = _normalize_target(unit, target)
    if len(set(col.tolist())) < 2:
        raise DataValidationError(f"need at least two {unit} units")
    mask = col == target
    if not mask.any():
        raise DataValidationError(f"{unit} {target!r} not present")
    values = pairs["pbr"].to_numpy(dtype=np.float64)
    weights = pairs["participants"].to_numpy(dtype=np.float64) if weighting != "equal" else None
    point = _cis_value(values, weights, mask)
    if math.isnan(point):
        raise NumericalError("CIS undefined: Gini of remaining pairs is undefined")
    if n_bootstrap <= 0:
        return CisRecord(unit, target, point, None, None, weighting)
    idx = indices if indices is not None else _cis_indices(values.size, unit, n_bootstrap, seed, percentiles)
    if weights is None:
        reps = kernels.resample_cis(values, idx, mask)
    else:
        reps = np.array([_cis_value(values[ix], weights[ix], mask[ix]) if mask[ix].any() else math.nan
                         for ix in idx])
    skipped = int(np.isnan(reps).sum())
    if skipped == n_bootstrap:
        return CisRecord(unit, target, point, None, None, weighting, skipped)
    lo, hi = percentile_ci(reps, percentiles)
    return CisRecord(unit, target, point, lo, hi, weighting, skipped)


def _cis_indices(n: int, unit: str, n_bootstrap: int, seed: int, percentiles=(2.5, 97.5)) -> np.ndarray:
    spec = BootstrapSpec(n_bootstrap, "pair", percentiles, seed, stage=f"cis:{unit}")
    return np.array([spec.indices(n, i) for i in range(n_bootstrap)], dtype=np.int64).reshape(n_bootstrap, n)


def cis_all(pairs: pd.DataFrame, unit: str, weighting: str = "equal",
            n_bootstrap: int = 1000, seed: int = 0) -> list[CisRecord]:
    units = sorted(set(pairs[unit].tolist()))
    idx = _cis_indices(len(pairs), unit, n_bootstrap, seed) if n_bootstrap > 0 else None
    return [cis(pairs, unit, u, weighting, n_bootstrap, seed, indices=idx) for u in units]


def pair_cis(pairs: pd.DataFrame) -> np.ndarray:
    """Leave-one-pair-out CIS (percent) for every row of ``pairs``."""
    values = pairs["pbr"].to_numpy(dtype=np.float64)
    g_all = gini(values)
    loo = kernels.leave_one_out_gini(values)
    if g_all == 0:
        return np.zeros_like(values)
    return 100.0 * ((g_all - loo) / g_all)


@dataclass(frozen=True)
class LeaveOutResult:
    gini_before: float
    gini_after: float
    excluded: tuple
    n_units: int

    @property
    def pct_change(self) -> float:
        return 100.0 * ((self.gini_before - self.gini_after) / self.gini_before)


def leave_out_gini(pairs: pd.DataFrame, unit: str, exclude: Iterable | None = None,
                   ranking: str = "cis", top_fraction: float = 0.2) -> LeaveOutResult:
    """Global Gini before and after removing a set of units.

    Without ``exclude``, the top ``floor(n_units * top_fraction)`` units by
    ``ranking`` (``"cis"`` descending or ``"participant_volume"``) are
    removed; ties fall back to unit order.
    """
    col = _unit_codes(pairs, unit)
    units = sorted(set(col.tolist()))
    values = pairs["pbr"].to_numpy(dtype=np.float64)
    before = gini(values)
    if exclude is None:
        if not 0 < top_fraction < 1:
            raise ValueError("top_fraction must be in (0, 1)")
        k = int(math.floor(len(units) * top_fraction))
        if ranking == "cis":
            score = {u: _cis_value(values, None, col == u) for u in units}
        elif ranking == "participant_volume":
            vol = pairs.groupby(unit).participants.sum()
            score = {u: float(vol[u]) for u in units}
        else:
            raise ValueError(f"unknown ranking {ranking!r}")
        ranked = sorted(units, key=lambda u: (-score[u], u))
        excluded = tuple(ranked[:k])
    else:
        excluded = tuple(_normalize_target(unit, u) for u in exclude)
    keep = ~np.isin(col, list(excluded))
    if not keep.any():
        raise DataValidationError("exclusion empties the panel")
    after = gini(values[keep])
    return LeaveOutResult(before, after, excluded, len(units))


# -- burden/participation alignment ---------------------------------------

@dataclass(frozen=True)
class AlignmentFit:
    group: str
    beta: float
    intercept: float
    p_value: float
    n: int


def alignment_regression(panel: Panel, income: Mapping[str, str], group: str,
                         period: tuple[int, int] | None = None) -> AlignmentFit:
    """OLS of log average annual participants on log average annual DALYs.

    Restricted to country-disease pairs of countries in income ``group``
    with positive participants and DALYs.
    """
    income = getattr(income, "income_group", income)
    p = _period_panel(panel, period)
    n_years = len(p.years) if "year" in p.dims else 1
    df = p.frame().groupby(["country", "disease"])[["participants", "dalys"]].sum().reset_index()
    df = df[df.country.map(lambda c: income.get(c) == group)]
    df = df[(df.participants > 0) & (df.dalys > 0)]
    if len(df) < 3:
        raise DataValidationError(f"income group {group} has {len(df)} usable pairs (< 3)")
    x = np.log(df.dalys.to_numpy() / n_years)
    y = np.log(df.participants.to_numpy() / n_years)
    if np.ptp(x) == 0:
        raise DataValidationError("singular design: all log-DALY values identical")
    res = _st.linregress(x, y)
    return AlignmentFit(group, float(res.slope), float(res.intercept), float(res.pvalue), len(df))

"""Theil decompositions, fixed-effects variance partitioning, temporal trends."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from scipy import stats as _st

from . import kernels
from .errors import DataValidationError, NumericalError
from .metrics import gini, pair_table
from .panel import Panel
from .stats import BootstrapSpec, percentile_ci


def theil(values) -> float:
    """Theil-T index, (1/N) sum (x/mu) ln(x/mu); zero iff all values equal."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise DataValidationError("theil needs at least one value")
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise DataValidationError("theil needs strictly positive values")
    return max(float(kernels.theil(x)), 0.0)


@dataclass(frozen=True)
class GroupTerm:
    n: int
    mean: float
    share: float  # (n_g / N) * (mu_g / mu)
    theil: float

    @property
    def within(self) -> float:
        return self.share * self.theil


@dataclass(frozen=True)
class TheilDecomposition:
    total: float
    between: float
    within: float
    grouping: str
    group_terms: Mapping[object, GroupTerm] = field(default_factory=dict)
    n_excluded: int = 0

    @property
    def between_share(self) -> float:
        return self.between / self.total if self.total > 0 else 0.0

    @property
    def within_share(self) -> float:
        return self.within / self.total if self.total > 0 else 0.0


def theil_decompose_values(values, groups, grouping: str = "group") -> TheilDecomposition:
    """Population-and-mean-weighted Theil-T split into between/within."""
    x = np.asarray(values, dtype=np.float64).ravel()
    g = np.asarray(groups)
    if x.shape != g.shape:
        raise DataValidationError("values and groups differ in length")
    total = theil(x)
    labels, inv = np.unique(g, return_inverse=True)
    if labels.size < 2:
        raise DataValidationError("need at least two groups")
    n, mu = x.size, x.mean()
    terms = {}
    between = within = 0.0
    for j, lab in enumerate(labels):
        xg = x[inv == j]
        mu_g = xg.mean()
        if mu_g <= 0:
            raise DataValidationError(f"group {lab!r} has zero mean")
        s = (xg.size / n) * (mu_g / mu)
        t_g = theil(xg)
        terms[lab.item() if hasattr(lab, "item") else lab] = GroupTerm(xg.size, mu_g, s, t_g)
        between += s * math.log(mu_g / mu)
        within += s * t_g
    return TheilDecomposition(total, between, within, grouping, terms)


def theil_decompose(pairs: pd.DataFrame, grouping: str) -> TheilDecomposition:
    """Decompose the Theil index of raw PBR by ``disease`` or ``country``.

    Zero-PBR pairs are excluded (the entropy form needs positive values)
    and counted in ``n_excluded``.
    """
    if grouping not in ("disease", "country"):
        raise ValueError("grouping must be 'disease' or 'country'")
    pos = pairs[pairs.pbr > 0]
    d = theil_decompose_values(pos.pbr.to_numpy(), pos[grouping].to_numpy(), grouping)
    return TheilDecomposition(d.total, d.between, d.within, grouping, d.group_terms,
                              n_excluded=len(pairs) - len(pos))


# -- variance partitioning -------------------------------------------------

FACTORS = ("country", "disease", "year")


@dataclass(frozen=True)
class VariancePartition:
    r2_country: float
    r2_disease: float
    r2_year: float
    r2_residual: float
    n_obs: int
    estimation_variant: str

    def as_dict(self) -> dict:
        return {"r2_country": self.r2_country, "r2_disease": self.r2_disease,
                "r2_year": self.r2_year, "r2_residual": self.r2_residual,
                "n_obs": self.n_obs, "estimation_variant": self.estimation_variant}


@dataclass(frozen=True)
class VariancePartitionResult:
    sequential: VariancePartition
    marginal: VariancePartition
    r2_full: float
    n_dropped: int = 0

    @property
    def discrepancy(self) -> float:
        """Largest absolute gap between the two variants' factor shares."""
        s, m = self.sequential, self.marginal
        return max(abs(s.r2_country - m.r2_country), abs(s.r2_disease - m.r2_disease),
                   abs(s.r2_year - m.r2_year))


class _DummyDesign:
    """Sparse treatment-coded design; R^2 does not depend on the coding."""

    def __init__(self, frame: pd.DataFrame, factors: Sequence[str]):
        self.n = len(frame)
        self.blocks = {}
        for f in factors:
            codes, levels = pd.factorize(frame[f], sort=True)
            if levels.size < 2:
                raise DataValidationError(f"factor {f} needs at least two levels")
            rows = np.flatnonzero(codes > 0)
            m = sparse.csr_matrix((np.ones(rows.size), (rows, codes[rows] - 1)),
                                  shape=(self.n, levels.size - 1))
            self.blocks[f] = m

    def matrix(self, factors: Sequence[str]):
        parts = [sparse.csr_matrix(np.ones((self.n, 1)))] + [self.blocks[f] for f in factors]
        return sparse.hstack(parts, format="csr")


def _r2(design: _DummyDesign, factors: Sequence[str], y: np.ndarray, sst: float,
        check_rank: bool = False) -> float:
    X = design.matrix(factors)
    xtx = (X.T @ X).toarray()
    xty = X.T @ y
    if check_rank and np.linalg.matrix_rank(xtx) < xtx.shape[0]:
        raise DataValidationError("factors are confounded (design rank deficient)")
    beta = np.linalg.lstsq(xtx, xty, rcond=None)[0]
    resid = y - X @ beta
    return 1.0 - float(resid @ resid) / sst


def variance_partition_frame(frame: pd.DataFrame, response: str = "log_pbr") -> VariancePartitionResult:
    """Share of total sum of squares per factor in y ~ country + disease + year.

    ``sequential`` enters country, disease, year in that order;
    ``marginal`` drops each factor from the full model in turn. On
    balanced designs the two coincide.
    """
    df = frame[list(FACTORS) + [response]].dropna()
    n_dropped = len(frame) - len(df)
    y = df[response].to_numpy(dtype=np.float64)
    y = y - y.mean()
    sst = float(y @ y)
    if sst <= 0:
        raise NumericalError("response has zero variance")
    design = _DummyDesign(df, FACTORS)
    r2_full = _r2(design, FACTORS, y, sst, check_rank=True)
    r2_c = _r2(design, ["country"], y, sst)
    r2_cd = _r2(design, ["country", "disease"], y, sst)
    seq = VariancePartition(r2_c, r2_cd - r2_c, r2_full - r2_cd, 1.0 - r2_full, len(df), "sequential")
    drop = {f: r2_full - _r2(design, [g for g in FACTORS if g != f], y, sst) for f in FACTORS}
    mar = VariancePartition(drop["country"], drop["disease"], drop["year"], 1.0 - r2_full,
                            len(df), "marginal")
    return VariancePartitionResult(seq, mar, r2_full, n_dropped)


def variance_partition(panel: Panel, period: tuple[int, int] | None = None) -> VariancePartitionResult:
    """Variance partition of cell-level log-PBR (zero-participation cells dropped)."""
    pairs = pair_table(panel, period, by_year=True)
    return variance_partition_frame(pairs, "log_pbr")


# -- temporal trends -------------------------------------------------------

@dataclass(frozen=True)
class TrendEstimate:
    slope: float
    intercept: float
    r2: float
    p_value: float
    ci_low: float | None = None
    ci_high: float | None = None
    points: pd.DataFrame | None = None


def temporal_trend(times, values) -> TrendEstimate:
    """OLS of ``values`` on ``times``; a constant series has slope 0, r2 0, p 1."""
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.size < 3:
        raise DataValidationError("trend needs at least three time points")
    if np.ptp(t) == 0:
        raise DataValidationError("constant time regressor")
    if np.ptp(v) == 0:
        return TrendEstimate(0.0, float(v[0]), 0.0, 1.0)
    res = _st.linregress(t, v)
    return TrendEstimate(float(res.slope), float(res.intercept), float(res.rvalue ** 2),
                         float(res.pvalue))


def _between_share(grouping):
    def metric(bin_pairs: pd.DataFrame) -> float:
        return theil_decompose(bin_pairs, grouping).between_share
    return metric


def _within_share(grouping):
    def metric(bin_pairs: pd.DataFrame) -> float:
        return theil_decompose(bin_pairs, grouping).within_share
    return metric


TREND_METRICS: dict[str, Callable[[pd.DataFrame], float]] = {
    "gini": lambda p: gini(p.pbr.to_numpy()),
    "theil": lambda p: theil(p.pbr[p.pbr > 0].to_numpy()),
    "between_share_disease": _between_share("disease"),
    "within_share_disease": _within_share("disease"),
    "between_share_country": _between_share("country"),
    "within_share_country": _within_share("country"),
}


class BinnedCells:
    """Cells mapped to (bin, country, disease) groups for fast re-aggregation."""

    def __init__(self, frame: pd.DataFrame, bin_width: int, origin: int):
        bins = origin + ((frame.year.to_numpy() - origin) // bin_width) * bin_width
        keys = pd.DataFrame({"year": bins, "country": frame.country.to_numpy(),
                             "disease": frame.disease.to_numpy()})
        self.codes = keys.groupby(["year", "country", "disease"], sort=True).ngroup().to_numpy()
        self.groups = keys.drop_duplicates().sort_values(["year", "country", "disease"]).reset_index(drop=True)
        self.participants = frame.participants.to_numpy(dtype=np.float64)
        self.dalys = frame.dalys.to_numpy(dtype=np.float64)
        self.n = len(frame)

    def metric(self, fn: Callable, counts: np.ndarray | None = None) -> dict[int, float]:
        return self.metrics({"m": fn}, counts)["m"]

    def metrics(self, fns: Mapping[str, Callable], counts: np.ndarray | None = None) -> dict[str, dict[int, float]]:
        """Per-bin values of each metric on the (optionally reweighted) cells."""
        g = len(self.groups)
        w = np.ones(self.n) if counts is None else counts
        part = np.bincount(self.codes, weights=self.participants * w, minlength=g)
        daly = np.bincount(self.codes, weights=self.dalys * w, minlength=g)
        present = np.bincount(self.codes, weights=w, minlength=g) > 0
        df = self.groups[present].assign(participants=part[present], dalys=daly[present])
        tot = df.groupby(["year", "disease"])[["participants", "dalys"]].transform("sum")
        ok = tot.participants > 0
        df = df[ok]
        df = df.assign(pbr=(df.participants / tot.participants[ok]) / (df.dalys / tot.dalys[ok]))
        out: dict[str, dict[int, float]] = {name: {} for name in fns}
        for b, grp in df.groupby("year", sort=True):
            for name, fn in fns.items():
                try:
                    out[name][int(b)] = float(fn(grp))
                except (ValueError, ArithmeticError):
                    out[name][int(b)] = math.nan
        return out


def metric_trend(panel: Panel, metric: str | Callable = "between_share_disease",
                 bin_width: int = 2, n_bootstrap: int = 1000, seed: int = 0,
                 origin: int = 2000) -> TrendEstimate:
    """Trend of a per-bin inequality metric with a bootstrap slope CI.

    The bootstrap resamples country-disease-year cells with replacement,
    re-bins, recomputes PBR and the metric per bin, and refits the slope.
    """
    return metric_trends(panel, [metric], bin_width, n_bootstrap, seed, origin)[0]


def metric_trends(panel: Panel, metrics: Sequence[str | Callable], bin_width: int = 2,
                  n_bootstrap: int = 1000, seed: int = 0, origin: int = 2000) -> list[TrendEstimate]:
    """Several metric trends sharing one set of bootstrap resamples."""
    fns = {i: TREND_METRICS[m] if isinstance(m, str) else m for i, m in enumerate(metrics)}
    cells = BinnedCells(panel.frame(), bin_width, origin)
    base = cells.metrics(fns)
    points, ests = {}, {}
    for i in fns:
        pts = pd.DataFrame({"bin": list(base[i]), "value": list(base[i].values())}).dropna()
        points[i], ests[i] = pts, temporal_trend(pts["bin"], pts["value"])
    slopes = np.full((len(fns), max(n_bootstrap, 0)), np.nan)
    if n_bootstrap > 0:
        spec = BootstrapSpec(n_bootstrap, "observation", seed=seed, stage="trend")
        for r in range(n_bootstrap):
            counts = np.bincount(spec.indices(cells.n, r), minlength=cells.n).astype(np.float64)
            vals = cells.metrics(fns, counts)
            for i in fns:
                s = pd.Series(vals[i]).dropna()
                if len(s) >= 3:
                    slopes[i, r] = temporal_trend(s.index.to_numpy(), s.to_numpy()).slope
    out = []
    for i in fns:
        e = ests[i]
        lo, hi = percentile_ci(slopes[i]) if n_bootstrap > 0 else (None, None)
        out.append(TrendEstimate(e.slope, e.intercept, e.r2, e.p_value, lo, hi, points[i]))
    return out

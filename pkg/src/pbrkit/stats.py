"""Shared statistical kernels: seeded bootstrap, tests, effect sizes."""
from __future__ import annotations

import itertools
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy import stats as _st

from . import kernels
from .errors import DataValidationError, NumericalError

MAX_SKIP_FRACTION = 0.10


def rng_for(seed: int, stage: str, iteration: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stage, iteration)``.

    Every randomized step draws from its own substream, so results do not
    depend on how iterations are spread across workers.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(stage.encode()), int(iteration)])
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class BootstrapSpec:
    n_iterations: int = 1000
    unit: str = "pair"
    percentiles: tuple[float, float] = (2.5, 97.5)
    seed: int = 0
    stage: str = "bootstrap"

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        lo, hi = self.percentiles
        if not (0 < lo < hi < 100):
            raise ValueError("percentiles must satisfy 0 < low < high < 100")
        if self.unit not in ("pair", "country", "observation"):
            raise ValueError(f"unknown resampling unit {self.unit!r}")

    def indices(self, n: int, iteration: int) -> np.ndarray:
        return rng_for(self.seed, self.stage, iteration).integers(0, n, n)


@dataclass
class BootstrapResult:
    point: float
    ci_low: float
    ci_high: float
    replicates: np.ndarray
    n_skipped: int = 0


def _take(data, idx):
    if isinstance(data, (pd.DataFrame, pd.Series)):
        return data.iloc[idx]
    if isinstance(data, np.ndarray):
        return data[idx]
    return [data[i] for i in idx]


def bootstrap(statistic: Callable, data, spec: BootstrapSpec, workers: int = 1) -> BootstrapResult:
    """Percentile bootstrap of ``statistic(data)``.

    Resamples whose statistic raises ``ValueError``/``ArithmeticError`` or
    returns NaN are skipped; more than 10% skipped is a failure.
    """
    n = len(data)
    point = float(statistic(data))

    def one(i):
        try:
            v = float(statistic(_take(data, spec.indices(n, i))))
        except (ValueError, ArithmeticError):
            return math.nan
        return v

    its = range(spec.n_iterations)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            vals = list(ex.map(one, its))
    else:
        vals = [one(i) for i in its]
    reps = np.array(vals, dtype=np.float64)
    ok = ~np.isnan(reps)
    skipped = int((~ok).sum())
    if skipped > MAX_SKIP_FRACTION * spec.n_iterations:
        raise NumericalError(f"statistic undefined on {skipped}/{spec.n_iterations} resamples")
    lo, hi = np.percentile(reps[ok], spec.percentiles)
    return BootstrapResult(point, float(lo), float(hi), reps, skipped)


def percentile_ci(replicates, percentiles=(2.5, 97.5)) -> tuple[float, float]:
    r = np.asarray(replicates, dtype=np.float64)
    r = r[~np.isnan(r)]
    lo, hi = np.percentile(r, percentiles)
    return float(lo), float(hi)


def mean_difference(a, b) -> float:
    return float(np.mean(a) - np.mean(b))


def permutation_test(sample_a, sample_b, statistic: Callable | None = None,
                     n_perm: int = 10000, seed: int = 0) -> float:
    """Two-sided permutation p-value for ``statistic(a, b)``.

    When ``n_perm`` covers every split of the pooled sample the exact
    p-value is returned (all splits enumerated, observed split included);
    otherwise ``(1 + #{|T*| >= |T|}) / (n_perm + 1)``.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 1 or b.size < 1:
        raise DataValidationError("both samples need at least one value")
    pooled = np.concatenate([a, b])
    n, n_a = pooled.size, a.size
    if np.all(pooled == pooled[0]):
        return 1.0
    stat = statistic or mean_difference
    observed = abs(stat(a, b))
    tol = 1e-12 * max(1.0, observed)
    total = math.comb(n, n_a)

    if n_perm >= total:
        if statistic is None:
            combos = np.array(list(itertools.combinations(range(n), n_a)), dtype=np.int64)
            rest = np.array([np.setdiff1d(np.arange(n), c) for c in combos], dtype=np.int64)
            vals = np.abs(kernels.permutation_mean_diff(pooled, n_a, np.hstack([combos, rest])))
        else:
            vals = []
            for c in itertools.combinations(range(n), n_a):
                mask = np.zeros(n, dtype=bool)
                mask[list(c)] = True
                vals.append(abs(stat(pooled[mask], pooled[~mask])))
            vals = np.array(vals)
        return float(np.sum(vals >= observed - tol) / total)

    rng = rng_for(seed, "permutation")
    perms = rng.permuted(np.tile(np.arange(n, dtype=np.int64), (n_perm, 1)), axis=1)
    if statistic is None:
        vals = np.abs(kernels.permutation_mean_diff(pooled, n_a, perms))
    else:
        vals = np.array([abs(stat(pooled[p[:n_a]], pooled[p[n_a:]])) for p in perms])
    return float((1 + np.sum(vals >= observed - tol)) / (n_perm + 1))


def paired_t_test(x, y) -> float:
    """Two-sided paired t-test p-value.

    All-zero differences are an exact tie (p = 1); a constant nonzero
    difference is a deterministic separation (p = 0).
    """
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    if d.size < 2:
        raise DataValidationError("paired test needs n >= 2")
    if np.all(d == 0):
        return 1.0
    sd = d.std(ddof=1)
    if sd == 0 or sd < 1e-15 * np.abs(d).max():
        return 0.0
    t = d.mean() / (sd / math.sqrt(d.size))
    return float(2 * _st.t.sf(abs(t), d.size - 1))


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> tuple[float, float]:
    """Kruskal-Wallis H (tie-corrected) and its chi-square p-value."""
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2 or any(g.size == 0 for g in groups):
        raise DataValidationError("need >= 2 nonempty groups")
    allv = np.concatenate(groups)
    if np.all(allv == allv[0]):
        raise DataValidationError("all values identical")
    n = allv.size
    ranks = _st.rankdata(allv)
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start:start + g.size]
        h += r.sum() ** 2 / g.size
        start += g.size
    h = 12.0 / (n * (n + 1)) * h - 3 * (n + 1)
    _, counts = np.unique(allv, return_counts=True)
    h /= 1 - (counts ** 3 - counts).sum() / (n ** 3 - n)
    h = max(h, 0.0)
    return float(h), float(_st.chi2.sf(h, len(groups) - 1))


def spearman(x, y) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 3:
        raise DataValidationError("spearman needs paired samples with n >= 3")
    rx, ry = _st.rankdata(x), _st.rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt((rx @ rx) * (ry @ ry))
    if denom == 0:
        raise DataValidationError("zero rank variance")
    rho = float(np.clip(rx @ ry / denom, -1.0, 1.0))
    if abs(rho) == 1.0:
        return rho, 0.0
    df = x.size - 2
    t = rho * math.sqrt(df / (1 - rho * rho))
    return rho, float(2 * _st.t.sf(abs(t), df))


def _table(table) -> np.ndarray:
    t = np.asarray(table, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] < 2 or t.shape[1] < 2:
        raise DataValidationError("contingency table needs >= 2 rows and >= 2 columns")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise DataValidationError("counts must be finite and >= 0")
    if t.sum() <= 0:
        raise DataValidationError("grand total must be positive")
    return t


def chi_square(table) -> tuple[float, int, float]:
    """Pearson chi-square statistic, degrees of freedom and p-value."""
    t = _table(table)
    rows, cols = t.sum(axis=1), t.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise DataValidationError("zero margin in contingency table")
    expected = np.outer(rows, cols) / t.sum()
    chi2 = float(((t - expected) ** 2 / expected).sum())
    df = (t.shape[0] - 1) * (t.shape[1] - 1)
    return chi2, df, float(_st.chi2.sf(chi2, df))


def pool_sparse_columns(table, min_count: float) -> np.ndarray:
    """Merge columns whose total is below ``min_count`` into one column."""
    t = _table(table)
    small = t.sum(axis=0) < min_count
    if small.sum() < 2:
        return t
    return np.column_stack([t[:, ~small], t[:, small].sum(axis=1)])


@dataclass(frozen=True)
class CramersV:
    value: float
    uncorrected: float
    band: str


def effect_band(v: float) -> str:
    if v < 0.1:
        return "very small"
    if v < 0.3:
        return "small"
    if v <= 0.5:
        return "medium"
    return "large"


def cramers_v(table, corrected: bool = True, pool_below: float | None = None) -> CramersV:
    """Cramér's V with Bergsma's small-sample bias correction."""
    t = _table(table)
    if pool_below is not None:
        t = pool_sparse_columns(t, pool_below)
    chi2, _, _ = chi_square(t)
    n = t.sum()
    r, k = t.shape
    phi2 = chi2 / n
    raw = math.sqrt(phi2 / min(k - 1, r - 1))
    if not corrected:
        return CramersV(raw, raw, effect_band(raw))
    if n <= 1:
        raise NumericalError("bias correction needs n > 1")
    phi2c = max(0.0, phi2 - (k - 1) * (r - 1) / (n - 1))
    kc = k - (k - 1) ** 2 / (n - 1)
    rc = r - (r - 1) ** 2 / (n - 1)
    denom = min(kc - 1, rc - 1)
    if denom <= 0:
        raise NumericalError("corrected table dimensions degenerate")
    v = math.sqrt(phi2c / denom)
    return CramersV(v, raw, effect_band(v))

"""Attribution of country-level PBR variation to structural predictors.

OLS core, median imputation, standardization, hierarchical block
partitioning, permutation Shapley R^2 decomposition and the residualized
("policy-relevant") analysis.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
import yaml
from scipy import stats as _st

from .errors import ConfigError, DataValidationError, NumericalError
from .panel import Panel
from .predictors import MAX_MISSING_FRACTION, PredictorTable
from .stats import percentile_ci, rng_for


@dataclass(frozen=True)
class BlockSpec:
    name: str
    members: tuple[str, ...]

    def __init__(self, name: str, members: Sequence[str]):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "members", tuple(members))


PART1_BLOCKS = (
    BlockSpec("Economic", ["log_gdp", "log_population"]),
    BlockSpec("Research", ["rd_expenditure", "log_publications", "total_citations"]),
    BlockSpec("Health", ["log_health_exp", "hospital_beds", "hospitals", "doctors_per_10k"]),
    BlockSpec("Social", ["hdi", "democracy_index"]),
)
PART2_BLOCKS = (
    BlockSpec("Research_Investment", ["rd_expenditure", "log_publications_per_capita"]),
    BlockSpec("Health_Infrastructure", ["hospital_beds_per_capita", "doctors_per_10k",
                                        "hospitals_per_capita", "log_health_exp_per_capita"]),
    BlockSpec("Governance", ["hdi", "democracy_index"]),
)
CONTROLS = ("log_gdp", "log_population")


def validate_blocks(blocks: Sequence[BlockSpec], available: Sequence[str] | None = None) -> None:
    seen: set[str] = set()
    for b in blocks:
        dup = seen.intersection(b.members)
        if dup:
            raise ConfigError(f"blocks overlap on {sorted(dup)}")
        seen.update(b.members)
        if available is not None:
            missing = set(b.members) - set(available)
            if missing:
                raise ConfigError(f"block {b.name} names unknown predictors {sorted(missing)}")


def load_blocks(path) -> dict[str, tuple[BlockSpec, ...]]:
    """Read block definitions: ``{part1: {Block: [members]}, part2: {...}}``."""
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    out = {}
    for part, blocks in raw.items():
        specs = tuple(BlockSpec(name, members) for name, members in blocks.items())
        validate_blocks(specs)
        out[str(part)] = specs
    return out


# -- preprocessing ----------------------------------------------------------

@dataclass(frozen=True)
class PreprocessReport:
    excluded_missing: tuple[str, ...] = ()
    excluded_constant: tuple[str, ...] = ()
    n_imputed: Mapping[str, int] = field(default_factory=dict)


def impute_median(table: PredictorTable, fields: Sequence[str] | None = None
                  ) -> tuple[PredictorTable, PreprocessReport]:
    """Fill missing values with the per-predictor median of observed values.

    Predictors with more than half their values missing are dropped and
    listed in the report.
    """
    fields = list(fields or table.fields)
    data, excluded, counts = {}, [], {}
    for name in fields:
        col = table.data[name]
        miss = np.isnan(col)
        if miss.all():
            raise DataValidationError(f"predictor {name} has no observed values")
        if miss.mean() > MAX_MISSING_FRACTION:
            excluded.append(name)
            continue
        filled = col.copy()
        filled[miss] = np.median(col[~miss])
        data[name] = filled
        counts[name] = int(miss.sum())
    return table.replace(data, excluded), PreprocessReport(tuple(excluded), (), counts)


def standardize_matrix(X) -> tuple[np.ndarray, np.ndarray]:
    """Column z-scores with population SD; returns (Z, keep) with zero-variance columns dropped."""
    X = np.asarray(X, dtype=np.float64)
    sd = X.std(axis=0)
    keep = sd > 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    Z = (X[:, keep] - X[:, keep].mean(axis=0)) / sd[keep]
    return Z, keep


def standardize(table: PredictorTable, fields: Sequence[str] | None = None
                ) -> tuple[PredictorTable, PreprocessReport]:
    fields = list(fields or table.fields)
    X = table.matrix(fields)
    if np.isnan(X).any():
        raise DataValidationError("standardize needs complete columns (impute first)")
    Z, keep = standardize_matrix(X)
    kept = [f for f, k in zip(fields, keep) if k]
    dropped = tuple(f for f, k in zip(fields, keep) if not k)
    data = {f: Z[:, i] for i, f in enumerate(kept)}
    return table.replace(data, table.excluded + dropped), PreprocessReport((), dropped, {})


# -- OLS ------------------------------------------------------------------

@dataclass(frozen=True)
class OlsFit:
    names: tuple[str, ...]  # includes "const" first when fitted with an intercept
    coef: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    r2: float
    n: int
    df_resid: int
    resid: np.ndarray
    fitted: np.ndarray

    def coefficient(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def p_value(self, name: str) -> float:
        return float(self.p[self.names.index(name)])

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({"term": self.names, "coef": self.coef, "se": self.se,
                             "t": self.t, "p": self.p})


def ols(y, X, names: Sequence[str] | None = None, intercept: bool = True) -> OlsFit:
    """Least squares with classical standard errors and t-based p-values."""
    y = np.asarray(y, dtype=np.float64).ravel()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if y.size != n:
        raise DataValidationError("y and X differ in length")
    names = list(names) if names is not None else [f"x{i}" for i in range(p)]
    if intercept:
        X = np.column_stack([np.ones(n), X])
        names = ["const"] + names
    k = X.shape[1]
    if n <= k:
        raise DataValidationError(f"need n > number of parameters ({n} <= {k})")
    if np.linalg.matrix_rank(X) < k:
        raise DataValidationError("design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ coef
    resid = y - fitted
    rss = float(resid @ resid)
    yc = y - y.mean() if intercept else y
    tss = float(yc @ yc)
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    df = n - k
    sigma2 = rss / df
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, np.copysign(np.inf, coef))
    p_val = 2 * _st.t.sf(np.abs(t), df)
    return OlsFit(tuple(names), coef, se, t, p_val, float(min(max(r2, 0.0), 1.0)), n, df,
                  resid, fitted)


class SubsetR2:
    """Memoized R^2 of y on any subset of the columns of X (with intercept)."""

    def __init__(self, y, X):
        y = np.asarray(y, dtype=np.float64)
        X = np.asarray(X, dtype=np.float64)
        self.y = y - y.mean()
        self.X = X - X.mean(axis=0)
        self.sst = float(self.y @ self.y)
        self.p = X.shape[1]
        self._cache: dict[int, float] = {0: 0.0}

    def __call__(self, mask: int) -> float:
        r = self._cache.get(mask)
        if r is None:
            cols = [j for j in range(self.p) if mask >> j & 1]
            A = self.X[:, cols]
            beta, *_ = np.linalg.lstsq(A, self.y, rcond=None)
            res = self.y - A @ beta
            r = 1.0 - float(res @ res) / self.sst if self.sst > 0 else 0.0
            self._cache[mask] = r
        return r

    @property
    def full(self) -> float:
        return self((1 << self.p) - 1)


# -- hierarchical partitioning ----------------------------------------------

@dataclass(frozen=True)
class BlockStep:
    block: str
    variables: tuple[str, ...]
    incremental_r2: float
    cumulative_r2: float
    n_obs: int

    @property
    def n_variables(self) -> int:
        return len(self.variables)


def hierarchical_partition(y, X, names: Sequence[str], blocks: Sequence[BlockSpec]
                           ) -> list[BlockStep]:
    """Nested OLS fits entering ``blocks`` in order."""
    names = list(names)
    validate_blocks(blocks, names)
    X = np.asarray(X, dtype=np.float64)
    cols: list[int] = []
    prev = 0.0
    steps = []
    for b in blocks:
        cols += [names.index(m) for m in b.members]
        fit = ols(y, X[:, cols])
        steps.append(BlockStep(b.name, b.members, fit.r2 - prev, fit.r2, fit.n))
        prev = fit.r2
    return steps


# -- Shapley ----------------------------------------------------------------

def _perm_phi(r2: SubsetR2, order: Sequence[int]) -> np.ndarray:
    phi = np.zeros(r2.p)
    mask, prev = 0, 0.0
    for j in order:
        mask |= 1 << j
        cur = r2(mask)
        phi[j] = cur - prev
        prev = cur
    return phi


def shapley_exact(y, X, method: str = "subsets") -> np.ndarray:
    """Exact Shapley R^2 values.

    ``method="orderings"`` averages marginal gains over all P! orderings;
    ``"subsets"`` uses the equivalent |S|!(P-|S|-1)!/P! subset weights.
    """
    r2 = SubsetR2(y, X)
    p = r2.p
    if method == "orderings":
        phi = np.zeros(p)
        count = 0
        for order in itertools.permutations(range(p)):
            phi += _perm_phi(r2, order)
            count += 1
        return phi / count
    if method != "subsets":
        raise ValueError("method must be 'orderings' or 'subsets'")
    phi = np.zeros(p)
    fact = [math.factorial(k) for k in range(p + 1)]
    for mask in range(1 << p):
        s = bin(mask).count("1")
        base = r2(mask)
        for j in range(p):
            if not mask >> j & 1:
                w = fact[s] * fact[p - s - 1] / fact[p]
                phi[j] += w * (r2(mask | 1 << j) - base)
    return phi


ENUMERATE_MAX_P = 7


def shapley_permutation(y, X, n_permutations: int, seed: int, stage: str = "shapley") -> np.ndarray:
    """Monte Carlo Shapley R^2 over ``n_permutations`` orderings.

    Marginal gains are averaged as-is (negative gains are kept), so every
    ordering telescopes to the full-model R^2. With at most
    ``ENUMERATE_MAX_P`` predictors, orderings are drawn without replacement
    in seeded passes over all P! orderings, so a budget that is a multiple
    of P! gives the exact values.
    """
    r2 = SubsetR2(y, X)
    phi = np.zeros(r2.p)
    if r2.p <= ENUMERATE_MAX_P:
        orders = np.array(list(itertools.permutations(range(r2.p))), dtype=np.int64)
        done, k = 0, 0
        while done < n_permutations:
            take = rng_for(seed, stage, k).permutation(len(orders))[: n_permutations - done]
            for i in take:
                phi += _perm_phi(r2, orders[i])
            done += take.size
            k += 1
        return phi / n_permutations
    for j in range(n_permutations):
        phi += _perm_phi(r2, rng_for(seed, stage, j).permutation(r2.p))
    return phi / n_permutations


@dataclass(frozen=True)
class ShapleyResult:
    names: tuple[str, ...]
    percent: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    se: np.ndarray
    r2_full: float
    block_totals: Mapping[str, float]
    n_permutations: int
    n_bootstrap: int
    n_skipped: int = 0

    def frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"variable": self.names, "mean_pct": self.percent,
                           "ci_lower": self.ci_low, "ci_upper": self.ci_high, "se": self.se})
        return df.sort_values("mean_pct", ascending=False, kind="stable").reset_index(drop=True)


def shapley_r2(y, X, names: Sequence[str], n_permutations: int = 100, n_bootstrap: int = 100,
               bootstrap_permutations: int = 50, seed: int = 0,
               blocks: Sequence[BlockSpec] | None = None, workers: int = 1) -> ShapleyResult:
    """Permutation Shapley decomposition of R^2 as % of the full-model R^2.

    Bootstrap CIs resample countries (rows) with replacement and rerun the
    decomposition with ``bootstrap_permutations`` orderings each.
    """
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    names = tuple(names)
    n, p = X.shape
    if p < 1:
        raise DataValidationError("need at least one predictor")
    if n <= p + 1:
        raise DataValidationError(f"need n > p + 1 ({n} <= {p + 1})")
    r2_full = SubsetR2(y, X).full
    if r2_full <= 0:
        raise NumericalError("full-model R^2 is zero; shares undefined")
    phi = shapley_permutation(y, X, n_permutations, seed)
    percent = 100.0 * phi / r2_full

    def replicate(b: int) -> np.ndarray:
        idx = rng_for(seed, "shapley:resample", b).integers(0, n, n)
        yb, Xb = y[idx], X[idx]
        full_b = SubsetR2(yb, Xb).full
        if not full_b > 1e-12:
            return np.full(p, np.nan)
        return 100.0 * shapley_permutation(yb, Xb, bootstrap_permutations, seed,
                                           stage=f"shapley:boot:{b}") / full_b

    if n_bootstrap > 0:
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                reps = np.array(list(ex.map(replicate, range(n_bootstrap))))
        else:
            reps = np.array([replicate(b) for b in range(n_bootstrap)])
        ok = ~np.isnan(reps).any(axis=1)
        lo = np.array([percentile_ci(reps[ok, j])[0] for j in range(p)])
        hi = np.array([percentile_ci(reps[ok, j])[1] for j in range(p)])
        se = reps[ok].std(axis=0, ddof=1) if ok.sum() > 1 else np.full(p, np.nan)
        skipped = int((~ok).sum())
    else:
        lo = hi = se = np.full(p, np.nan)
        skipped = 0
    totals = {}
    if blocks:
        validate_blocks(blocks, names)
        for b in blocks:
            totals[b.name] = float(sum(percent[names.index(m)] for m in b.members))
    return ShapleyResult(names, percent, lo, hi, se, r2_full, totals, n_permutations,
                         n_bootstrap, skipped)


# -- dependent variables and the two-part analysis ---------------------------

def national_log_pbr(panel: Panel, period: tuple[int, int] | None = None) -> pd.Series:
    """log(sum participants / sum DALYs) per country with positive participants.

    The raw ratio differs from the share-normalized national PBR by a
    global constant in log space, which does not affect R^2 or residuals.
    """
    p = panel if period is None or "year" not in panel.dims else panel.select(period=period)
    t = p.totals(("country",))
    t = t[(t.participants > 0) & (t.dalys > 0)]
    return np.log(t.participants / t.dalys).rename("log_pbr")


@dataclass(frozen=True)
class ResidualRecord:
    country: str
    residual: float
    disease: int | None = None


@dataclass(frozen=True)
class Residualization:
    records: tuple[ResidualRecord, ...]
    fit: OlsFit
    residual_variance_fraction: float

    def series(self) -> pd.Series:
        return pd.Series({r.country: r.residual for r in self.records}, name="residual")


def residualize_part2(log_pbr: pd.Series, table: PredictorTable,
                      controls: Sequence[str] = CONTROLS) -> Residualization:
    """Residual of log-PBR after OLS on log GDP and log population."""
    countries = list(log_pbr.index)
    for c in controls:
        if c not in table.data:
            raise DataValidationError(f"control {c} missing from predictor table")
    X = table.matrix(list(controls), countries)
    if np.isnan(X).any():
        bad = [countries[i] for i in np.flatnonzero(np.isnan(X).any(axis=1))]
        raise DataValidationError(f"controls missing for {bad[:5]}{'...' if len(bad) > 5 else ''}")
    y = log_pbr.to_numpy(dtype=np.float64)
    fit = ols(y, X, list(controls))
    var_y = float(np.var(y))
    frac = float(np.var(fit.resid)) / var_y if var_y > 0 else 0.0
    recs = tuple(ResidualRecord(c, float(r)) for c, r in zip(countries, fit.resid))
    return Residualization(recs, fit, frac)


@dataclass(frozen=True)
class AttributionResult:
    part: int
    countries: tuple[str, ...]
    predictors: tuple[str, ...]
    hierarchical: list[BlockStep]
    shapley: ShapleyResult | None
    preprocess: PreprocessReport
    residualization: Residualization | None = None


def prepare_design(table: PredictorTable, countries: Sequence[str], fields: Sequence[str]
                   ) -> tuple[np.ndarray, list[str], PreprocessReport]:
    """Subset, median-impute and standardize the requested predictor columns."""
    missing = [f for f in fields if f not in table.data]
    if missing:
        raise DataValidationError(f"predictor table lacks {missing}")
    sub = table.subset(countries)
    imputed, rep1 = impute_median(sub, fields)
    kept = [f for f in fields if f in imputed.data]
    std, rep2 = standardize(imputed, kept)
    kept = [f for f in kept if f in std.data]
    report = PreprocessReport(rep1.excluded_missing, rep2.excluded_constant, rep1.n_imputed)
    return std.matrix(kept), kept, report


def _prune_blocks(blocks: Sequence[BlockSpec], kept: Sequence[str]) -> list[BlockSpec]:
    out = []
    for b in blocks:
        members = [m for m in b.members if m in kept]
        if members:
            out.append(BlockSpec(b.name, members))
    return out


def run_attribution(panel: Panel, table: PredictorTable, part: int = 1,
                    blocks: Sequence[BlockSpec] | None = None,
                    n_permutations: int = 100, n_bootstrap: int = 100,
                    bootstrap_permutations: int = 50, seed: int = 0, workers: int = 1,
                    period: tuple[int, int] | None = None) -> AttributionResult:
    """Part 1 (structural) or Part 2 (residualized, policy-relevant) analysis."""
    if part not in (1, 2):
        raise ValueError("part must be 1 or 2")
    blocks = list(blocks or (PART1_BLOCKS if part == 1 else PART2_BLOCKS))
    y = national_log_pbr(panel, period)
    y = y[[c for c in y.index if c in set(table.countries)]]
    if len(y) < 3:
        raise DataValidationError("too few countries with both panel and predictor data")
    resid = None
    if part == 2:
        resid = residualize_part2(y, table)
        y = resid.series()
    fields = [m for b in blocks for m in b.members]
    X, kept, report = prepare_design(table, list(y.index), fields)
    blocks = _prune_blocks(blocks, kept)
    target = y.to_numpy(dtype=np.float64)
    hier = hierarchical_partition(target, X, kept, blocks)
    shap = shapley_r2(target, X, kept, n_permutations, n_bootstrap, bootstrap_permutations,
                      seed, blocks, workers)
    return AttributionResult(part, tuple(y.index), tuple(kept), hier, shap, report, resid)

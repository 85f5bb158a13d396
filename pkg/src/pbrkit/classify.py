"""Residual-based performance classes and limiting-factor diagnosis."""
from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .attribution import CONTROLS, PART2_BLOCKS, BlockSpec, OlsFit, ols, prepare_design
from .errors import DataValidationError
from .metrics import pair_cis, pair_table
from .panel import Panel
from .predictors import PredictorTable

OVER, EXPECTED, UNDER, UNCLASSIFIED = "OverPerforming", "AsExpected", "UnderPerforming", "Unclassified"
STATUSES = (OVER, EXPECTED, UNDER, UNCLASSIFIED)
RESEARCH, GOVERNANCE, HEALTH, MULTIPLE, UNASSIGNED = (
    "ResearchInvestment", "Governance", "HealthInfrastructure", "MultipleFactors", "Unassigned")
FACTOR_ORDER = (RESEARCH, GOVERNANCE, HEALTH, MULTIPLE)
BLOCK_FACTORS = {
    "Research_Investment": RESEARCH,
    "Health_Infrastructure": HEALTH,
    "Governance": GOVERNANCE,
}
COMPONENTS = ("authorship", "burden", "recruitment")
COMPONENT_FACTORS = {"authorship": RESEARCH, "recruitment": HEALTH, "burden": GOVERNANCE}


@dataclass(frozen=True)
class Thresholds:
    over: float = 0.5
    expected: float = 0.3

    def __post_init__(self):
        if not 0 < self.expected <= self.over:
            raise ValueError("need 0 < expected <= over")


def classify_residual(r: float, thresholds: Thresholds = Thresholds()) -> str:
    if r > thresholds.over:
        return OVER
    if abs(r) < thresholds.expected:
        return EXPECTED
    if r < -thresholds.expected:
        return UNDER
    return UNCLASSIFIED


@dataclass(frozen=True)
class ClassifiedPair:
    country: str
    disease: int
    residual: float
    status: str
    factor: str = UNASSIGNED
    cis_contribution: float = float("nan")
    tie: bool = False


def classify(residuals, thresholds: Thresholds = Thresholds()) -> list[ClassifiedPair]:
    """Assign a status to each (country, disease, residual).

    ``residuals`` is a DataFrame with those columns or an iterable of
    objects/tuples carrying them.
    """
    if isinstance(residuals, pd.DataFrame):
        rows = residuals[["country", "disease", "residual"]].itertuples(index=False)
    else:
        rows = ((r.country, r.disease, r.residual) if hasattr(r, "residual") else r for r in residuals)
    out = []
    for country, disease, r in rows:
        r = float(r)
        if not np.isfinite(r):
            raise DataValidationError(f"non-finite residual for {country}/{disease}")
        out.append(ClassifiedPair(country, int(disease), r, classify_residual(r, thresholds)))
    return out


@dataclass(frozen=True)
class BlockDiagnosis:
    scores: Mapping[str, float]
    winner: str | None
    multiple_factor_flag: bool
    factor: str


def limiting_factor(fit: OlsFit, blocks: Sequence[BlockSpec] = PART2_BLOCKS, sig: float = 0.1,
                    multi: float = 0.7, block_factors: Mapping[str, str] = BLOCK_FACTORS
                    ) -> BlockDiagnosis:
    """Mean |beta| over members with p < ``sig`` per block; largest wins.

    When two or more blocks score above ``multi`` times the maximum the
    diagnosis is MultipleFactors.
    """
    scores = {}
    for b in blocks:
        sig_coefs = [abs(fit.coefficient(m)) for m in b.members
                     if m in fit.names and fit.p_value(m) < sig]
        scores[b.name] = float(np.mean(sig_coefs)) if sig_coefs else 0.0
    best = max(scores.values(), default=0.0)
    if best <= 0:
        warnings.warn("no significant predictor in any block; factor unassigned", stacklevel=2)
        return BlockDiagnosis(scores, None, False, UNASSIGNED)
    winner = next(name for name, s in scores.items() if s == best)
    flag = sum(s > multi * best for s in scores.values()) >= 2
    factor = MULTIPLE if flag else block_factors.get(winner, winner)
    return BlockDiagnosis(scores, winner, flag, factor)


def _mode(factors: Iterable[str]) -> str | None:
    counts = Counter(f for f in factors if f != UNASSIGNED)
    if not counts:
        return None
    top = max(counts.values())
    ranked = sorted((f for f, c in counts.items() if c == top),
                    key=lambda f: FACTOR_ORDER.index(f) if f in FACTOR_ORDER else len(FACTOR_ORDER))
    return ranked[0]


def _pattern_factor(pair: ClassifiedPair, by_disease, by_country, global_mode) -> str | None:
    return by_disease.get(pair.disease) or by_country.get(pair.country) or global_mode


def _patterns(pairs: Sequence[ClassifiedPair]):
    under = [p for p in pairs if p.status == UNDER and p.factor != UNASSIGNED]
    by_disease: dict[int, list[str]] = {}
    by_country: dict[str, list[str]] = {}
    for p in under:
        by_disease.setdefault(p.disease, []).append(p.factor)
        by_country.setdefault(p.country, []).append(p.factor)
    return ({d: _mode(f) for d, f in by_disease.items()},
            {c: _mode(f) for c, f in by_country.items()},
            _mode(p.factor for p in under))


def assign_factor_overperforming(pairs: Sequence[ClassifiedPair],
                                 statuses: Sequence[str] = (OVER,)) -> list[ClassifiedPair]:
    """Give pairs with the listed statuses the modal under-performing factor.

    Lookup order is same disease, then same country, then global; ties in
    a mode go to the earlier entry of ``FACTOR_ORDER``.
    """
    by_disease, by_country, global_mode = _patterns(pairs)
    out = []
    for p in pairs:
        if p.status in statuses and p.factor == UNASSIGNED:
            f = _pattern_factor(p, by_disease, by_country, global_mode)
            if f is None:
                raise DataValidationError("no diagnosed under-performing pairs to match against")
            p = replace(p, factor=f)
        out.append(p)
    return out


def assign_factor_as_expected(pairs: Sequence[ClassifiedPair], components,
                              mapping: Mapping[str, str] = COMPONENT_FACTORS) -> list[ClassifiedPair]:
    """Factor from the largest normalized component for as-expected pairs.

    ``components`` is a DataFrame with country, disease and the
    ``COMPONENTS`` columns. Each component is divided by its maximum over
    the as-expected pairs; ties go to the first component in
    ``COMPONENTS`` and are flagged.
    """
    missing = [c for c in COMPONENTS if c not in mapping]
    if missing:
        raise ValueError(f"mapping lacks components {missing}")
    comp = components.set_index(["country", "disease"])[list(COMPONENTS)].astype(float)
    targets = [(p.country, p.disease) for p in pairs if p.status == EXPECTED]
    if not targets:
        return list(pairs)
    try:
        sub = comp.loc[targets]
    except KeyError:
        raise DataValidationError("components missing for some as-expected pairs") from None
    if (sub.to_numpy() < 0).any():
        raise DataValidationError("components must be non-negative")
    scale = sub.max(axis=0).replace(0, 1.0)
    norm = sub / scale
    out = []
    for p in pairs:
        if p.status == EXPECTED:
            v = norm.loc[(p.country, p.disease)].to_numpy()
            if not (v > 0).any():
                raise DataValidationError(f"all components zero for {p.country}/{p.disease}")
            best = v.max()
            winners = np.flatnonzero(v == best)
            p = replace(p, factor=mapping[COMPONENTS[winners[0]]], tie=winners.size > 1)
        out.append(p)
    return out


# -- disease-specific fits ----------------------------------------------------

@dataclass(frozen=True)
class DiseaseFit:
    disease: int
    countries: tuple[str, ...]
    fit: OlsFit
    diagnosis: BlockDiagnosis


@dataclass
class ClassificationResult:
    pairs: list[ClassifiedPair]
    fits: dict[int, DiseaseFit]
    skipped_diseases: dict[int, str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "country": [p.country for p in self.pairs],
            "disease": [p.disease for p in self.pairs],
            "residual": [p.residual for p in self.pairs],
            "status": [p.status for p in self.pairs],
            "factor": [p.factor for p in self.pairs],
            "cis": [p.cis_contribution for p in self.pairs],
        })

    def counts(self) -> dict[str, int]:
        c = Counter(p.status for p in self.pairs)
        return {s: c.get(s, 0) for s in STATUSES}


def disease_fits(pairs: pd.DataFrame, table: PredictorTable,
                 blocks: Sequence[BlockSpec] = PART2_BLOCKS, controls: Sequence[str] = CONTROLS,
                 sig: float = 0.1, multi: float = 0.7):
    """OLS of pair log-PBR on standardized policy predictors plus controls, per disease."""
    fields = [m for b in blocks for m in b.members] + [c for c in controls]
    known = set(table.countries)
    fits, residuals, skipped = {}, [], {}
    for disease, grp in pairs[pairs.pbr > 0].groupby("disease", sort=True):
        grp = grp[grp.country.isin(known)]
        countries = list(grp.country)
        try:
            X, kept, _ = prepare_design(table, countries, fields)
            fit = ols(grp.log_pbr.to_numpy(dtype=np.float64), X, kept)
        except DataValidationError as exc:
            skipped[int(disease)] = str(exc)
            continue
        kept_blocks = [BlockSpec(b.name, [m for m in b.members if m in kept]) for b in blocks]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            diag = limiting_factor(fit, kept_blocks, sig, multi)
        fits[int(disease)] = DiseaseFit(int(disease), tuple(countries), fit, diag)
        residuals.append(pd.DataFrame({"country": countries, "disease": int(disease),
                                       "residual": fit.resid}))
    res = pd.concat(residuals, ignore_index=True) if residuals else \
        pd.DataFrame(columns=["country", "disease", "residual"])
    return fits, res, skipped


def run_classification(panel: Panel, table: PredictorTable, thresholds: Thresholds = Thresholds(),
                       sig: float = 0.1, multi: float = 0.7, components: pd.DataFrame | None = None,
                       period: tuple[int, int] | None = None,
                       blocks: Sequence[BlockSpec] = PART2_BLOCKS,
                       mapping: Mapping[str, str] = COMPONENT_FACTORS) -> ClassificationResult:
    """Disease fits, status classes, limiting factors and factor assignment.

    Under-performing pairs take their disease's diagnosis. When a disease
    has no significant predictor its under-performers fall back to the
    country and then global under-performing mode. As-expected pairs use
    ``components`` when given and the same pattern-matching rule otherwise.
    """
    pairs = pair_table(panel, period)
    fits, res, skipped = disease_fits(pairs, table, blocks, sig=sig, multi=multi)
    notes = [f"disease {d} skipped: {why}" for d, why in skipped.items()]
    cis_map = dict(zip(zip(pairs.country, pairs.disease), pair_cis(pairs)))
    classified = []
    for p in classify(res, thresholds):
        factor = fits[p.disease].diagnosis.factor if p.status == UNDER else UNASSIGNED
        classified.append(replace(p, factor=factor, cis_contribution=float(cis_map[(p.country, p.disease)])))
    undiagnosed = sorted(d for d, f in fits.items() if f.diagnosis.factor == UNASSIGNED)
    if undiagnosed:
        notes.append(f"no significant predictors for diseases {undiagnosed}; pattern fallback used")
    has_under = any(p.status == UNDER and p.factor != UNASSIGNED for p in classified)
    if not has_under:
        notes.append("no diagnosed under-performing pairs; factors left unassigned")
        return ClassificationResult(classified, fits, skipped, notes)
    classified = assign_factor_overperforming(classified, (UNDER,))
    if components is not None:
        classified = assign_factor_as_expected(classified, components, mapping)
        notes.append("as-expected mapping: " + ", ".join(f"{k}->{v}" for k, v in mapping.items()))
        classified = assign_factor_overperforming(classified, (OVER,))
    else:
        notes.append("no component table; as-expected pairs matched to under-performing patterns")
        classified = assign_factor_overperforming(classified, (OVER, EXPECTED))
    return ClassificationResult(classified, fits, skipped, notes)

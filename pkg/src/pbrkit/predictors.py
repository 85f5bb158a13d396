"""Country-level structural predictor tables."""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataValidationError
from .panel import _data_lines, _open_text, _sniff_delimiter, country_code

INCOME_GROUPS = ("High", "UpperMiddle", "LowerMiddle", "Low")

# absolute quantities that feed log and per-capita transforms
ABSOLUTE = ("gdp", "population", "publications", "health_exp", "hospitals", "hospital_beds")
DIRECT = ("rd_expenditure", "total_citations", "hospital_beds", "hospitals",
          "doctors_per_10k", "hdi", "democracy_index")
LOGGED = {
    "log_gdp": "gdp",
    "log_population": "population",
    "log_publications": "publications",
    "log_health_exp": "health_exp",
}
PER_CAPITA = {
    # name: (numerator, log-transformed?)
    "log_gdp_per_capita": ("gdp", True),
    "log_publications_per_capita": ("publications", True),
    "log_health_exp_per_capita": ("health_exp", True),
    "hospitals_per_capita": ("hospitals", False),
    "hospital_beds_per_capita": ("hospital_beds", False),
}
PREDICTOR_FIELDS = (
    "log_gdp", "log_population", "rd_expenditure", "log_publications", "total_citations",
    "log_health_exp", "hospital_beds", "hospitals", "doctors_per_10k", "hdi",
    "democracy_index", "log_publications_per_capita", "hospitals_per_capita",
    "hospital_beds_per_capita", "log_health_exp_per_capita", "log_gdp_per_capita",
)
MAX_MISSING_FRACTION = 0.5

_INCOME_ALIASES = {
    "high": "High", "highincome": "High", "h": "High", "hic": "High",
    "uppermiddle": "UpperMiddle", "uppermiddleincome": "UpperMiddle", "um": "UpperMiddle",
    "umc": "UpperMiddle",
    "lowermiddle": "LowerMiddle", "lowermiddleincome": "LowerMiddle", "lm": "LowerMiddle",
    "lmc": "LowerMiddle",
    "low": "Low", "lowincome": "Low", "l": "Low", "lic": "Low",
}


def income_group(label: str) -> str:
    key = re.sub(r"[^a-z]", "", label.lower())
    try:
        return _INCOME_ALIASES[key]
    except KeyError:
        raise DataValidationError(f"unknown income group {label!r}") from None


@dataclass(frozen=True)
class PredictorTable:
    """Per-country predictor columns; NaN marks a missing value."""

    countries: tuple[str, ...]
    data: Mapping[str, np.ndarray]
    income_group: Mapping[str, str] = field(default_factory=dict)
    excluded: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.countries)
        for name, col in self.data.items():
            if col.shape != (n,):
                raise DataValidationError(f"predictor {name} has shape {col.shape}, expected ({n},)")
            col.setflags(write=False)

    @property
    def fields(self) -> tuple[str, ...]:
        return tuple(self.data)

    def missing(self, name: str) -> np.ndarray:
        return np.isnan(self.data[name])

    def missing_fraction(self, name: str) -> float:
        return float(self.missing(name).mean()) if self.countries else 0.0

    def column(self, name: str, countries: Sequence[str] | None = None) -> np.ndarray:
        col = self.data[name]
        if countries is None:
            return col.copy()
        pos = self._positions(countries)
        return col[pos]

    def matrix(self, names: Sequence[str], countries: Sequence[str] | None = None) -> np.ndarray:
        return np.column_stack([self.column(n, countries) for n in names]) if names else \
            np.empty((len(countries if countries is not None else self.countries), 0))

    def _positions(self, countries: Sequence[str]) -> np.ndarray:
        index = {c: i for i, c in enumerate(self.countries)}
        try:
            return np.array([index[c] for c in countries], dtype=np.int64)
        except KeyError as exc:
            raise DataValidationError(f"country {exc.args[0]} not in predictor table") from None

    def subset(self, countries: Sequence[str]) -> "PredictorTable":
        pos = self._positions(countries)
        return PredictorTable(
            tuple(countries),
            {k: v[pos].copy() for k, v in self.data.items()},
            {c: g for c, g in self.income_group.items() if c in set(countries)},
            self.excluded,
        )

    def replace(self, data: Mapping[str, np.ndarray] | None = None,
                excluded: Iterable[str] | None = None) -> "PredictorTable":
        return PredictorTable(
            self.countries,
            {k: np.array(v, dtype=np.float64) for k, v in (data if data is not None else self.data).items()},
            dict(self.income_group),
            tuple(excluded) if excluded is not None else self.excluded,
        )


def _to_float(text: str) -> float:
    text = text.strip()
    if text == "" or text.upper() in {"NA", "NAN", "N/A", ".."}:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataValidationError(f"non-numeric predictor value {text!r}") from None


def build_predictors(countries: Sequence[str], raw: Mapping[str, Sequence[float]],
                     income: Mapping[str, str] | None = None) -> PredictorTable:
    """Derive the predictor fields from raw columns.

    ``raw`` may hold absolute quantities (``gdp``, ``population``, ...),
    direct indicators, or already-derived ``log_*`` / per-capita columns;
    derived columns given explicitly take precedence.
    """
    n = len(countries)
    raw = {k: np.asarray(v, dtype=np.float64) for k, v in raw.items()}
    data: dict[str, np.ndarray] = {}

    def log_of(a: np.ndarray) -> np.ndarray:
        out = np.full(n, np.nan)
        ok = a > 0
        out[ok] = np.log(a[ok])
        return out

    for name, src in LOGGED.items():
        if name in raw:
            data[name] = raw[name]
        elif src in raw:
            data[name] = log_of(raw[src])
    for name in DIRECT:
        if name in raw:
            data[name] = raw[name]
    pop = raw.get("population")
    for name, (src, logged) in PER_CAPITA.items():
        if name in raw:
            data[name] = raw[name]
            continue
        if src not in raw or pop is None:
            continue
        both = ~np.isnan(raw[src]) & ~np.isnan(pop)
        if np.any(pop[both] <= 0):
            bad = [countries[i] for i in np.flatnonzero(both & (pop <= 0))]
            raise DataValidationError(f"population <= 0 for per-capita transform: {bad}")
        ratio = np.full(n, np.nan)
        ratio[both] = raw[src][both] / pop[both]
        data[name] = log_of(ratio) if logged else ratio

    ordered = {k: data[k] for k in PREDICTOR_FIELDS if k in data}
    excluded = tuple(k for k, v in ordered.items()
                     if n and np.isnan(v).mean() > MAX_MISSING_FRACTION)
    return PredictorTable(tuple(countries), ordered, dict(income or {}), excluded)


def ingest_predictors(source, *, delimiter: str | None = "auto",
                      country_column: str = "country") -> PredictorTable:
    """Read a per-country predictor table (one row per ISO3 code)."""
    stream, close = _open_text(source)
    try:
        lines = _data_lines(stream)
        try:
            _, header = next(lines)
        except StopIteration:
            raise DataValidationError("empty predictor input") from None
        delim = _sniff_delimiter(header, delimiter)
        names = [n.strip() for n in next(csv.reader([header], delimiter=delim))]
        aliases = {country_column, "iso3", "ISO3", "country"}
        try:
            cpos = next(i for i, n in enumerate(names) if n in aliases)
        except StopIteration:
            raise DataValidationError("predictor table needs a country/iso3 column") from None
        gpos = names.index("income_group") if "income_group" in names else None
        value_cols = [(i, n) for i, n in enumerate(names) if i not in (cpos, gpos)]
        countries, income = [], {}
        cols: dict[str, list[float]] = {n: [] for _, n in value_cols}
        for lineno, line in lines:
            row = next(csv.reader([line], delimiter=delim))
            try:
                code = country_code(row[cpos])
                if code in countries:
                    raise DataValidationError(f"duplicate country {code}")
                vals = {n: _to_float(row[i]) if i < len(row) else math.nan for i, n in value_cols}
                grp = income_group(row[gpos]) if gpos is not None and row[gpos].strip() else None
            except DataValidationError as exc:
                raise DataValidationError(f"line {lineno}: {exc}") from None
            countries.append(code)
            for n, v in vals.items():
                cols[n].append(v)
            if grp:
                income[code] = grp
    finally:
        if close:
            stream.close()
    return build_predictors(countries, cols, income)

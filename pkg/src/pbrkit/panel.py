"""Participation/burden panels: ingestion, validation and aggregation."""
from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np
import pandas as pd

from .errors import DataValidationError

YEAR_MIN, YEAR_MAX = 2000, 2024
DIMS = ("country", "disease", "year")
CANONICAL_COLUMNS = ("country", "disease", "year", "participants", "dalys")

DISEASES = (
    "HIV/AIDS and sexually transmitted infections",
    "Neglected tropical diseases and malaria",
    "Respiratory infections and tuberculosis",
    "Maternal and neonatal disorders",
    "Nutritional deficiencies",
    "Cardiovascular diseases",
    "Neoplasms",
    "Diabetes and kidney diseases",
    "Chronic respiratory diseases",
    "Digestive diseases",
    "Mental disorders",
    "Neurological disorders",
    "Musculoskeletal disorders",
    "Sense organ diseases",
    "Skin and subcutaneous diseases",
    "Substance use disorders",
)


def _norm_label(label: str) -> str:
    return re.sub(r"\s+", " ", label.strip()).casefold()


_DISEASE_INDEX = {_norm_label(name): i for i, name in enumerate(DISEASES)}


@dataclass(frozen=True, order=True)
class DiseaseCategory:
    id: int
    name: str

    @classmethod
    def parse(cls, label) -> "DiseaseCategory":
        """Look up a category by name (case/whitespace-insensitive) or id."""
        if isinstance(label, DiseaseCategory):
            return label
        if isinstance(label, (int, np.integer)):
            if not 0 <= int(label) < len(DISEASES):
                raise DataValidationError(f"unknown disease id {label}")
            return cls(int(label), DISEASES[int(label)])
        text = str(label).strip()
        if text.isdigit():
            return cls.parse(int(text))
        idx = _DISEASE_INDEX.get(_norm_label(text))
        if idx is None:
            raise DataValidationError(f"unknown disease label {label!r}")
        return cls(idx, DISEASES[idx])


@lru_cache(maxsize=1)
def iso3_codes() -> frozenset[str]:
    text = resources.files("pbrkit").joinpath("data/iso3.txt").read_text()
    return frozenset(text.split())


def country_code(code: str) -> str:
    """Validate an ISO3 code against the bundled list and return it."""
    code = str(code).strip()
    if len(code) != 3 or not code.isascii() or not code.isalpha() or not code.isupper():
        raise DataValidationError(f"malformed ISO3 code {code!r}")
    if code not in iso3_codes():
        raise DataValidationError(f"unknown ISO3 code {code!r}")
    return code


@dataclass(frozen=True)
class PanelCell:
    country: str | None
    disease: DiseaseCategory | None
    year: int | None
    participants: float
    dalys: float


@dataclass
class IngestReport:
    n_rows: int = 0
    n_duplicates: int = 0
    n_daly_conflicts: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Panel:
    """Immutable set of (country, disease, year) cells.

    Dimensions that have been aggregated away are absent from ``dims``;
    the corresponding ``PanelCell`` attribute is ``None``.
    """

    def __init__(self, country=None, disease=None, year=None, *, participants, dalys,
                 report: IngestReport | None = None):
        participants = np.asarray(participants, dtype=np.float64)
        dalys = np.asarray(dalys, dtype=np.float64)
        n = participants.shape[0]
        cols = {"country": country, "disease": disease, "year": year}
        self.dims = tuple(d for d in DIMS if cols[d] is not None)
        arrays = {}
        if country is not None:
            arrays["country"] = np.asarray(country, dtype=object)
        if disease is not None:
            arrays["disease"] = np.asarray(disease, dtype=np.int64)
        if year is not None:
            arrays["year"] = np.asarray(year, dtype=np.int64)
        for name, a in arrays.items():
            if a.shape[0] != n:
                raise DataValidationError(f"column {name} has length {a.shape[0]}, expected {n}")
        if n == 0:
            raise DataValidationError("empty panel")
        if np.any(~np.isfinite(participants)) or np.any(participants < 0):
            raise DataValidationError("participants must be finite and >= 0")
        if np.any(~np.isfinite(dalys)) or np.any(dalys <= 0):
            raise DataValidationError("dalys must be finite and > 0")
        if participants.sum() <= 0:
            raise DataValidationError("global participant total must be positive")

        # canonical order: lexicographic by present dims
        if self.dims:
            keys = [arrays[d] for d in reversed(self.dims)]
            order = np.lexsort([k.astype(str) if k.dtype == object else k for k in keys])
        else:
            order = np.arange(n)
        key_frame = pd.DataFrame({d: arrays[d][order] for d in self.dims})
        if self.dims and key_frame.duplicated().any():
            raise DataValidationError("duplicate cell keys")
        self._cols = {d: _readonly(arrays[d][order]) for d in self.dims}
        self.participants = _readonly(participants[order])
        self.dalys = _readonly(dalys[order])
        self.report = report or IngestReport(n_rows=n)
        self._marginals: dict[tuple[str, ...], pd.DataFrame] = {}

    # -- access -----------------------------------------------------------
    def __len__(self) -> int:
        return self.participants.shape[0]

    def column(self, dim: str) -> np.ndarray:
        return self._cols[dim]

    @property
    def countries(self) -> list[str]:
        return sorted(set(self._cols["country"])) if "country" in self._cols else []

    @property
    def diseases(self) -> list[int]:
        return sorted(set(self._cols["disease"].tolist())) if "disease" in self._cols else []

    @property
    def years(self) -> list[int]:
        return sorted(set(self._cols["year"].tolist())) if "year" in self._cols else []

    def cells(self) -> list[PanelCell]:
        out = []
        for i in range(len(self)):
            c = self._cols.get("country")
            d = self._cols.get("disease")
            y = self._cols.get("year")
            out.append(PanelCell(
                None if c is None else c[i],
                None if d is None else DiseaseCategory.parse(int(d[i])),
                None if y is None else int(y[i]),
                float(self.participants[i]),
                float(self.dalys[i]),
            ))
        return out

    def frame(self) -> pd.DataFrame:
        """A fresh DataFrame copy (disease as integer id)."""
        data = {d: np.array(self._cols[d]) for d in self.dims}
        data["participants"] = np.array(self.participants)
        data["dalys"] = np.array(self.dalys)
        return pd.DataFrame(data)

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "Panel":
        kw = {d: df[d].to_numpy() for d in DIMS if d in df.columns}
        return cls(**kw, participants=df["participants"].to_numpy(), dalys=df["dalys"].to_numpy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Panel):
            return NotImplemented
        if self.dims != other.dims or len(self) != len(other):
            return False
        return (all(np.array_equal(self._cols[d], other._cols[d]) for d in self.dims)
                and np.array_equal(self.participants, other.participants)
                and np.array_equal(self.dalys, other.dalys))

    def __repr__(self) -> str:
        return f"Panel(n={len(self)}, dims={self.dims}, P={self.total_participants:g})"

    # -- marginals --------------------------------------------------------
    def totals(self, by: Sequence[str] = ()) -> pd.DataFrame:
        """Participant and DALY totals grouped by ``by`` (cached)."""
        by = tuple(d for d in DIMS if d in by)
        missing = set(by) - set(self.dims)
        if missing:
            raise ValueError(f"panel has no dimension(s) {sorted(missing)}")
        if by not in self._marginals:
            df = self.frame()
            if by:
                m = df.groupby(list(by), sort=True)[["participants", "dalys"]].sum()
            else:
                m = pd.DataFrame({"participants": [df.participants.sum()],
                                  "dalys": [df.dalys.sum()]})
            self._marginals[by] = m
        return self._marginals[by].copy()

    @property
    def total_participants(self) -> float:
        return float(self.totals().participants.iloc[0])

    @property
    def total_dalys(self) -> float:
        return float(self.totals().dalys.iloc[0])

    def check_marginals(self, rtol: float = 1e-9) -> bool:
        """Recompute every cached marginal from cells and compare."""
        for by, cached in self._marginals.items():
            fresh = _group_sum(self, by)
            if not np.allclose(cached.to_numpy(), fresh.to_numpy(), rtol=rtol, atol=0):
                return False
        return True

    # -- selection --------------------------------------------------------
    def select(self, *, countries: Iterable[str] | None = None,
               diseases: Iterable | None = None, period: tuple[int, int] | None = None,
               exclude_countries: Iterable[str] = (), exclude_diseases: Iterable = ()) -> "Panel":
        mask = np.ones(len(self), dtype=bool)
        if countries is not None:
            mask &= np.isin(self._cols["country"], list(countries))
        if diseases is not None:
            ids = [DiseaseCategory.parse(d).id for d in diseases]
            mask &= np.isin(self._cols["disease"], ids)
        if period is not None:
            y = self._cols["year"]
            mask &= (y >= period[0]) & (y <= period[1])
        ex_c = list(exclude_countries)
        if ex_c:
            mask &= ~np.isin(self._cols["country"], ex_c)
        ex_d = [DiseaseCategory.parse(d).id for d in exclude_diseases]
        if ex_d:
            mask &= ~np.isin(self._cols["disease"], ex_d)
        if not mask.any():
            raise DataValidationError("selection leaves the panel empty")
        kw = {d: self._cols[d][mask] for d in self.dims}
        return Panel(**kw, participants=self.participants[mask], dalys=self.dalys[mask])

    def scaled(self, a: float, b: float) -> "Panel":
        """Copy with participants multiplied by ``a`` and DALYs by ``b``."""
        kw = {d: self._cols[d] for d in self.dims}
        return Panel(**kw, participants=self.participants * a, dalys=self.dalys * b)


def _group_sum(panel: Panel, by: tuple[str, ...]) -> pd.DataFrame:
    df = panel.frame()
    if not by:
        return pd.DataFrame({"participants": [math.fsum(df.participants)],
                             "dalys": [math.fsum(df.dalys)]})
    return df.groupby(list(by), sort=True)[["participants", "dalys"]].agg(
        lambda s: math.fsum(s))


def aggregate(panel: Panel, keep: Iterable[str], bin_width: int | None = None,
              origin: int = YEAR_MIN) -> Panel:
    """Sum cells over the dimensions not in ``keep``.

    With ``bin_width`` and ``year`` kept, years are mapped to the start of
    their bin (``origin + w * floor((year - origin) / w)``).
    """
    keep = tuple(d for d in DIMS if d in set(keep))
    if not keep:
        raise ValueError("keep must name at least one dimension")
    if bin_width is not None and bin_width < 1:
        raise ValueError("bin width must be >= 1")
    missing = set(keep) - set(panel.dims)
    if missing:
        raise ValueError(f"panel has no dimension(s) {sorted(missing)}")
    df = panel.frame()
    if bin_width is not None and "year" in keep:
        df["year"] = origin + bin_width * ((df["year"] - origin) // bin_width)
    g = df.groupby(list(keep), sort=True)[["participants", "dalys"]].sum().reset_index()
    return Panel.from_frame(g)


def year_bins(years: Iterable[int], bin_width: int, origin: int = YEAR_MIN) -> list[int]:
    return sorted({origin + bin_width * ((y - origin) // bin_width) for y in years})


# -- text I/O -------------------------------------------------------------

def _open_text(source) -> tuple[TextIO, bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    return source, False


def _data_lines(stream: TextIO):
    for lineno, line in enumerate(stream, start=1):
        if line.startswith("#") or not line.strip():
            continue
        yield lineno, line


def _sniff_delimiter(header: str, delimiter: str | None) -> str:
    if delimiter and delimiter != "auto":
        return "\t" if delimiter in ("tab", "\\t") else delimiter
    return "\t" if "\t" in header else ","


def ingest_panel(source, schema: Mapping[str, str] | None = None, *,
                 delimiter: str | None = "auto", relax_years: bool = False,
                 strict: bool = False) -> Panel:
    """Read a delimited panel file into a validated :class:`Panel`.

    Parameters
    ----------
    source : path or text stream
        UTF-8 delimited text with a header row. Lines starting with ``#``
        are ignored.
    schema : mapping, optional
        Canonical column name -> column name in the file.
    relax_years : bool
        Skip the 2000-2024 year bounds (synthetic data).
    strict : bool
        Raise on the first rejected row instead of collecting it.

    Duplicate keys are merged: participant counts are summed, the DALY
    value of the first occurrence is kept (duplicates come from several
    publications sharing one country-disease-year burden figure), and
    disagreeing DALY values are counted in ``report.n_daly_conflicts``.
    """
    schema = {c: c for c in CANONICAL_COLUMNS} | dict(schema or {})
    stream, close = _open_text(source)
    try:
        lines = _data_lines(stream)
        try:
            header_lineno, header = next(lines)
        except StopIteration:
            raise DataValidationError("empty input") from None
        delim = _sniff_delimiter(header, delimiter)
        names = next(csv.reader([header], delimiter=delim))
        names = [n.strip() for n in names]
        try:
            pos = {c: names.index(schema[c]) for c in CANONICAL_COLUMNS}
        except ValueError as exc:
            raise DataValidationError(f"missing column: {exc}") from None

        report = IngestReport()
        cells: dict[tuple[str, int, int], list[float]] = {}
        for lineno, line in lines:
            report.n_rows += 1
            row = next(csv.reader([line], delimiter=delim))
            try:
                key, p, b = _parse_row(row, pos, relax_years)
            except DataValidationError as exc:
                if strict:
                    raise DataValidationError(f"line {lineno}: {exc}") from None
                report.rejected.append((lineno, str(exc)))
                continue
            if key in cells:
                report.n_duplicates += 1
                cells[key][0] += p
                if not math.isclose(cells[key][1], b, rel_tol=1e-9):
                    report.n_daly_conflicts += 1
            else:
                cells[key] = [p, b]
    finally:
        if close:
            stream.close()

    if not cells:
        raise DataValidationError("no valid rows in input")
    keys = list(cells)
    vals = np.array(list(cells.values()), dtype=np.float64)
    return Panel(
        country=[k[0] for k in keys],
        disease=[k[1] for k in keys],
        year=[k[2] for k in keys],
        participants=vals[:, 0],
        dalys=vals[:, 1],
        report=report,
    )


def _parse_row(row, pos, relax_years):
    try:
        raw = {c: row[i].strip() for c, i in pos.items()}
    except IndexError:
        raise DataValidationError("too few fields") from None
    country = country_code(raw["country"])
    disease = DiseaseCategory.parse(raw["disease"]).id
    try:
        year_f = float(raw["year"])
        p = float(raw["participants"])
        b = float(raw["dalys"])
    except ValueError:
        raise DataValidationError("non-numeric year/participants/dalys") from None
    if not year_f.is_integer():
        raise DataValidationError(f"non-integer year {raw['year']!r}")
    year = int(year_f)
    if not relax_years and not YEAR_MIN <= year <= YEAR_MAX:
        raise DataValidationError(f"year {year} outside {YEAR_MIN}-{YEAR_MAX}")
    if not math.isfinite(p) or p < 0:
        raise DataValidationError(f"participants must be >= 0, got {raw['participants']}")
    if not math.isfinite(b) or b <= 0:
        raise DataValidationError(f"dalys must be > 0, got {raw['dalys']}")
    return (country, disease, year), p, b


def emit_panel(panel: Panel, stream: TextIO | None = None, delimiter: str = ",") -> str | None:
    """Write the canonical text form; returns the text when no stream is given."""
    own = stream is None
    out = io.StringIO() if own else stream
    w = csv.writer(out, delimiter=delimiter, lineterminator="\n")
    cols = [d for d in DIMS if d in panel.dims]
    w.writerow(cols + ["participants", "dalys"])
    for i in range(len(panel)):
        row = []
        for d in cols:
            v = panel.column(d)[i]
            row.append(DISEASES[int(v)] if d == "disease" else v)
        row += [repr(float(panel.participants[i])), repr(float(panel.dalys[i]))]
        w.writerow(row)
    return out.getvalue() if own else None

import io

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from pbrkit.errors import DataValidationError
from pbrkit.panel import (DISEASES, DiseaseCategory, Panel, aggregate, country_code, emit_panel,
                          ingest_panel, year_bins)

from conftest import random_panel

HEADER = "country,disease,year,participants,dalys\n"


def _ingest(body, **kw):
    return ingest_panel(io.StringIO(HEADER + body), **kw)


def test_single_row_identity():
    p = _ingest("USA,Cardiovascular diseases,2010,100,5000\n")
    assert len(p) == 1
    assert p.total_participants == 100
    cell = p.cells()[0]
    assert cell.country == "USA" and cell.disease.name == "Cardiovascular diseases"


def test_duplicate_keys_summed_and_counted():
    p = _ingest("USA,5,2010,10,5000\nUSA,5,2010,20,5000\n")
    assert len(p) == 1
    assert p.total_participants == 30
    assert p.report.n_duplicates == 1


def test_duplicate_keys_keep_first_daly_on_conflict():
    p = _ingest("USA,5,2010,10,5000\nUSA,5,2010,20,7000\n")
    assert p.total_dalys == 5000
    assert p.report.n_daly_conflicts == 1


def test_invalid_rows_rejected_with_line_numbers():
    p = _ingest("USA,5,2010,10,5000\nXXQ,5,2010,1,1\nUSA,5,2011,-1,10\nUSA,5,2012,1,0\nUSA,5,1999,1,1\n")
    assert len(p) == 1
    lines = [ln for ln, _ in p.report.rejected]
    assert lines == [3, 4, 5, 6]


def test_strict_mode_raises():
    with pytest.raises(DataValidationError):
        _ingest("USA,5,2010,10,5000\nUSA,5,2011,-1,10\n", strict=True)


def test_relax_years():
    p = _ingest("USA,5,1990,10,5000\n", relax_years=True)
    assert p.years == [1990]


def test_no_valid_rows():
    with pytest.raises(DataValidationError):
        _ingest("USA,5,2010,-1,5000\n")


def test_schema_mapping_and_tab_delimiter():
    text = "iso\tcause\tyr\tn\tburden\nUSA\t  cardiovascular   DISEASES \t2001\t3.5\t10\n"
    p = ingest_panel(io.StringIO(text), {"country": "iso", "disease": "cause", "year": "yr",
                                          "participants": "n", "dalys": "burden"})
    assert p.countries == ["USA"] and p.diseases == [5]
    assert p.total_participants == 3.5


def test_missing_column():
    with pytest.raises(DataValidationError, match="dalys"):
        ingest_panel(io.StringIO("country,disease,year,participants\nUSA,1,2001,3\n"))


def test_disease_labels():
    assert len(DISEASES) == 16
    for i, name in enumerate(DISEASES):
        assert DiseaseCategory.parse(name).id == i
        assert DiseaseCategory.parse(i).name == name
        assert DiseaseCategory.parse(name.upper()).id == i
    with pytest.raises(DataValidationError):
        DiseaseCategory.parse("Not a disease")
    with pytest.raises(DataValidationError):
        DiseaseCategory.parse(16)


def test_country_codes():
    assert country_code(" USA ") == "USA"
    for bad in ("US", "USAA", "U1A", "ZZZ", "usa"):
        with pytest.raises(DataValidationError):
            country_code(bad)


def test_panel_invariants():
    with pytest.raises(DataValidationError):
        Panel(["USA"], [0], [2000], participants=[0.0], dalys=[1.0])  # no participants
    with pytest.raises(DataValidationError):
        Panel(["USA"], [0], [2000], participants=[1.0], dalys=[0.0])
    with pytest.raises(DataValidationError):
        Panel(["USA", "USA"], [0, 0], [2000, 2000], participants=[1.0, 1.0], dalys=[1.0, 1.0])


def test_aggregate_over_years_additive():
    p = Panel(["USA", "USA"], [0, 0], [2000, 2001], participants=[1.0, 2.0], dalys=[5.0, 5.0])
    agg = aggregate(p, ("country", "disease"))
    assert len(agg) == 1 and agg.total_participants == 3.0
    assert agg.dims == ("country", "disease")


def test_year_bins():
    assert sorted(set(year_bins([2000, 2001, 2002, 2003], 2))) == [2000, 2002]
    assert year_bins([2004], 5) == [2000]


def test_select(tiny):
    sub = tiny.select(countries=["USA"], period=(2001, 2001))
    assert sub.countries == ["USA"] and sub.years == [2001]
    assert sub.total_participants == 6.0


def test_tiny_marginals(tiny):
    by_d = tiny.totals(("disease",))
    assert by_d.loc[0, "participants"] == 16.0 and by_d.loc[0, "dalys"] == 70.0
    assert tiny.check_marginals()


@given(st.integers(0, 10_000))
def test_marginal_consistency(seed):
    p = random_panel(seed, complete=False)
    df = p.frame()
    for by in (("country",), ("disease",), ("year",), ("country", "disease")):
        cached = p.totals(by).reset_index()
        direct = df.groupby(list(by), as_index=False)[["participants", "dalys"]].sum()
        np.testing.assert_allclose(cached[["participants", "dalys"]].to_numpy(),
                                   direct[["participants", "dalys"]].to_numpy(), rtol=1e-9)
    assert p.check_marginals()


@given(st.integers(0, 10_000))
def test_ingest_emit_roundtrip(seed):
    p = random_panel(seed, complete=False)
    again = ingest_panel(io.StringIO(emit_panel(p)))
    assert again == p


@given(st.integers(0, 10_000))
def test_aggregation_commutes(seed):
    p = random_panel(seed, complete=False)
    pairs = [
        (aggregate(aggregate(p, ("country", "disease")), ("disease",)),
         aggregate(aggregate(p, ("disease", "year")), ("disease",))),
        (aggregate(aggregate(p, ("country", "disease")), ("country",)),
         aggregate(aggregate(p, ("country", "year")), ("country",))),
    ]
    for a, b in pairs:
        fa, fb = a.frame(), b.frame()
        assert a.dims == b.dims
        pd.testing.assert_frame_equal(fa[list(a.dims)], fb[list(b.dims)])
        # summation order differs, so totals agree to rounding only
        np.testing.assert_allclose(fa[["participants", "dalys"]], fb[["participants", "dalys"]], rtol=1e-12)


def test_fractional_participants_kept():
    p = _ingest("USA,1,2001,0.25,4\nGBR,1,2001,0.75,4\n")
    assert p.total_participants == 1.0
    assert sorted(p.frame().participants) == [0.25, 0.75]


def test_from_frame_matches_constructor(tiny):
    df = tiny.frame()
    assert Panel.from_frame(df) == tiny
    assert isinstance(df, pd.DataFrame)

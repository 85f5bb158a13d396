import io
import math

import numpy as np
import pytest

from pbrkit.errors import DataValidationError
from pbrkit.predictors import (INCOME_GROUPS, PREDICTOR_FIELDS, build_predictors, income_group,
                               ingest_predictors)


def test_log_ratio_per_capita():
    t = build_predictors(["USA"], {"gdp": [math.exp(10)], "population": [math.exp(5)]})
    assert t.column("log_gdp_per_capita")[0] == pytest.approx(5.0, abs=1e-12)
    assert t.column("log_gdp")[0] == pytest.approx(10.0, abs=1e-12)


def test_per_capita_equals_ratio_of_absolutes():
    rng = np.random.default_rng(3)
    pop = rng.uniform(1e5, 1e8, 5)
    beds = rng.uniform(1e2, 1e5, 5)
    t = build_predictors(list("ABCDE"), {"population": pop, "hospital_beds": beds})
    np.testing.assert_allclose(t.column("hospital_beds_per_capita"), beds / pop, rtol=1e-15)
    np.testing.assert_array_equal(t.column("hospital_beds"), beds)


def test_explicit_derived_column_wins():
    t = build_predictors(["USA"], {"gdp": [100.0], "population": [10.0], "log_gdp_per_capita": [7.0]})
    assert t.column("log_gdp_per_capita")[0] == 7.0


def test_high_missingness_flagged():
    vals = [1.0, np.nan, np.nan, np.nan, 2.0]  # 60% missing
    t = build_predictors(list("ABCDE"), {"hdi": vals, "democracy_index": [1, 2, 3, 4, 5]})
    assert t.excluded == ("hdi",)
    assert t.missing_fraction("hdi") == pytest.approx(0.6)


def test_fully_populated_table_has_no_exclusions():
    rng = np.random.default_rng(0)
    n = 158
    raw = {k: rng.uniform(1, 10, n) for k in ("gdp", "population", "publications", "health_exp",
                                              "hospitals", "hospital_beds", "rd_expenditure",
                                              "total_citations", "doctors_per_10k", "hdi",
                                              "democracy_index")}
    t = build_predictors([f"C{i:02d}" for i in range(n)], raw)
    assert t.excluded == ()
    assert set(t.fields) == set(PREDICTOR_FIELDS)


def test_nonpositive_population_rejected():
    with pytest.raises(DataValidationError):
        build_predictors(["A"], {"gdp": [1.0], "population": [0.0]})


def test_income_aliases():
    assert income_group("High income") == "High"
    assert income_group("Upper-middle income") == "UpperMiddle"
    assert income_group("LMC") == "LowerMiddle"
    assert income_group("low") == "Low"
    assert set(INCOME_GROUPS) == {"High", "UpperMiddle", "LowerMiddle", "Low"}
    with pytest.raises(DataValidationError):
        income_group("rich")


def test_ingest_with_missing_and_income():
    text = ("iso3,income_group,gdp,population,hdi\n"
            "USA,High income,2e13,3e8,0.92\n"
            "KEN,Lower middle income,,5e7,0.6\n")
    t = ingest_predictors(io.StringIO(text))
    assert t.countries == ("USA", "KEN")
    assert t.income_group == {"USA": "High", "KEN": "LowerMiddle"}
    assert np.isnan(t.column("log_gdp")[1])
    assert t.missing("log_gdp").tolist() == [False, True]
    assert t.column("hdi", ["KEN"])[0] == 0.6


def test_ingest_rejects_duplicates_and_bad_codes():
    with pytest.raises(DataValidationError, match="line 3"):
        ingest_predictors(io.StringIO("country,hdi\nUSA,1\nUSA,2\n"))
    with pytest.raises(DataValidationError):
        ingest_predictors(io.StringIO("country,hdi\nXQX,1\n"))
    with pytest.raises(DataValidationError):
        ingest_predictors(io.StringIO("name,hdi\nUSA,1\n"))


def test_matrix_and_subset():
    t = build_predictors(["A", "B", "C"], {"hdi": [0.1, 0.2, 0.3], "democracy_index": [1, 2, 3]})
    m = t.matrix(["democracy_index", "hdi"], ["C", "A"])
    np.testing.assert_array_equal(m, [[3, 0.3], [1, 0.1]])
    assert t.subset(["B"]).countries == ("B",)

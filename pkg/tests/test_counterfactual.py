import io

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from pbrkit import counterfactual as cf
from pbrkit.errors import DataValidationError, NumericalError
from pbrkit.panel import Panel

from test_metrics import gini_mad


def nat(values, participants=None):
    n = len(values)
    parts = participants if participants is not None else [1.0] * n
    return [cf.NationalPbr(f"C{i:03d}", float(p), 1.0, float(v), 1 / n, 1 / n)
            for i, (v, p) in enumerate(zip(values, parts))]


def random_national(seed, n=172):
    """National PBR of a random country x disease panel."""
    rng = np.random.default_rng(seed)
    sigma = rng.uniform(1.0, 3.0)
    countries = np.repeat([f"C{i:03d}" for i in range(n)], 4)
    diseases = np.tile(np.arange(4), n)
    part = rng.lognormal(3, sigma, n * 4)
    dalys = rng.lognormal(8, 1, n * 4)
    panel = Panel(countries, diseases, participants=part, dalys=dalys)
    return cf.national_pbr(panel)


# -- national aggregation --------------------------------------------------------

def test_two_identical_countries():
    p = Panel(["USA", "GBR"], [0, 0], participants=[5.0, 5.0], dalys=[2.0, 2.0])
    recs = cf.national_pbr(p)
    assert [r.pbr for r in recs] == [1.0, 1.0]
    assert np.median([r.pbr for r in recs]) == 1.0


def test_tiny_national_oracle(tiny):
    recs = {r.country: r for r in cf.national_pbr(tiny)}
    # totals: P = USA 20, GBR 6, KEN 5 (31); B = USA 60, GBR 30, KEN 100 (190)
    assert recs["USA"].pbr == pytest.approx((20 / 31) / (60 / 190), rel=1e-15)
    assert recs["KEN"].pbr == pytest.approx((5 / 31) / (100 / 190), rel=1e-15)
    assert sum(r.participant_share for r in recs.values()) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 500))
def test_shares_sum_to_one(seed):
    recs = random_national(seed, n=20)
    assert sum(r.participant_share for r in recs) == pytest.approx(1.0, abs=1e-9)
    assert sum(r.daly_share for r in recs) == pytest.approx(1.0, abs=1e-9)
    for r in recs:
        assert r.pbr == pytest.approx(r.participant_share / r.daly_share, rel=1e-12)


def test_zero_participation_countries():
    p = Panel(["USA", "GBR", "KEN"], [0, 0, 0], participants=[5.0, 5.0, 0.0], dalys=[2.0, 2.0, 4.0])
    assert [r.country for r in cf.national_pbr(p)] == ["GBR", "USA"]
    withzero = cf.national_pbr(p, include_zero=True)
    assert [r.pbr for r in withzero if r.country == "KEN"] == [0.0]


def test_read_national_roundtrip():
    recs = nat([0.5, 1.0, 2.0])
    text = cf.national_frame(recs).to_csv(index=False)
    again = cf.read_national(io.StringIO(text))
    assert [r.pbr for r in again] == [0.5, 1.0, 2.0]
    with pytest.raises(DataValidationError):
        cf.read_national(io.StringIO("country,value\nUSA,1\n"))


# -- simulation -----------------------------------------------------------------

def test_all_at_median_is_fixed_point():
    r = cf.simulate("full", nat([0.7] * 8), bootstrap_iters=20)
    assert all(s.pct_reduction == 0.0 and s.gini == 0.0 for s in r.steps)
    assert r.p_value == 1.0


def test_full_alignment_reaches_zero():
    r = cf.simulate("full", nat(np.random.default_rng(0).lognormal(0, 2, 40)), bootstrap_iters=50)
    assert r.final.gini == 0.0
    assert r.final.pct_reduction == 100.0
    assert (r.final.ci_low, r.final.ci_high) == (100.0, 100.0)
    assert r.steps[0].fraction == 0.0 and r.steps[0].pct_reduction == 0.0


def test_step_counts_floor():
    r = cf.simulate("targeted", nat(np.arange(1.0, 173.0)), bootstrap_iters=0)
    assert [s.n_adjusted for s in r.steps] == [0, 17, 34, 51, 68]


def test_step_values_match_direct_replacement():
    v = np.array([0.06, 0.5, 1.0, 2.0, 9.0, 0.2, 0.3, 4.0])
    r = cf.simulate("full", nat(v), bootstrap_iters=0)
    med = np.median(v)
    order = np.argsort(-np.abs(np.log(v / med)), kind="stable")
    for s in r.steps[1:]:
        w = v.copy()
        w[order[:s.n_adjusted]] = med
        assert s.gini == pytest.approx(gini_mad(w), abs=1e-12)


def test_monotonicity_counterexample():
    # removing the two largest outliers leaves 6.61 dominating a smaller total
    v = [0.06, 0.09, 0.07, 0.29, 18.08, 0.04, 6.61, 12.49]
    r = cf.simulate("full", nat(v), bootstrap_iters=0)
    assert r.steps[1].gini > r.steps[0].gini
    assert not r.monotone
    w = [0.06, 0.09, 0.07, 0.29, 0.19, 0.04, 6.61, 0.19]
    assert r.steps[1].gini == pytest.approx(gini_mad(w), abs=1e-12)


@given(st.integers(0, 10_000))
def test_monotone_on_country_scale_panels(seed):
    r = cf.simulate("full", random_national(seed), bootstrap_iters=0)
    assert r.monotone


@pytest.mark.parametrize("ranking", cf.RANKINGS)
def test_rankings(ranking):
    v = [0.1, 0.5, 1.0, 3.0, 0.9]
    r = cf.simulate("full", nat(v, participants=[5, 1, 2, 9, 3]), steps=[0.2], bootstrap_iters=0,
                    ranking=ranking)
    first = {"log": 0.1, "abs": 3.0, "participants": 3.0}[ranking]
    w = [0.9 if x == first else x for x in v]
    assert r.steps[1].gini == pytest.approx(gini_mad(w), abs=1e-12)


def test_deterministic_and_paired():
    recs = nat(np.random.default_rng(1).lognormal(0, 1.5, 30))
    a = cf.simulate("full", recs, bootstrap_iters=60, seed=4)
    b = cf.simulate("full", recs, bootstrap_iters=60, seed=4)
    assert a.steps == b.steps and a.p_value == b.p_value
    t = cf.simulate("targeted", recs, bootstrap_iters=60, seed=4)
    np.testing.assert_array_equal(a.baseline_replicates, t.baseline_replicates)


def test_bootstrap_ci_contains_point():
    recs = random_national(3, n=100)
    r = cf.simulate("targeted", recs, bootstrap_iters=300, seed=0)
    for s in r.steps[1:]:
        assert s.ci_low <= s.pct_reduction <= s.ci_high
    assert r.p_value < 1e-6


def test_invalid_inputs():
    with pytest.raises(ValueError):
        cf.simulate("partial", nat([1, 2, 3]))
    with pytest.raises(ValueError):
        cf.simulate("full", nat([1, 2, 3, 4]), steps=[0.5, 0.25])
    with pytest.raises(DataValidationError):
        cf.simulate("targeted", nat([1, 2, 3]))
    with pytest.raises(DataValidationError):
        cf.deviation(np.array([1.0]), 1.0, "participants", np.array([np.nan]))


# -- efficiency and paired test ----------------------------------------------------

def test_identical_scenarios_ratio_one():
    recs = nat(np.random.default_rng(2).lognormal(0, 1, 40))
    a = cf.simulate("full", recs, bootstrap_iters=30, seed=1)
    e = cf.efficiency(a, a)
    assert e.ratio == 1.0 and e.ci_low == 1.0 and e.ci_high == 1.0


def test_efficiency_ratio_value():
    recs = random_national(5, n=172)
    f = cf.simulate("full", recs, bootstrap_iters=50, seed=2)
    t = cf.simulate("targeted", recs, bootstrap_iters=50, seed=2)
    e = cf.efficiency(f, t)
    assert e.ratio == pytest.approx((t.final.pct_reduction / 40) / (f.final.pct_reduction / 100))
    assert e.ci_low <= e.ratio <= e.ci_high


def test_efficiency_requires_paired_resamples():
    recs = nat(np.random.default_rng(2).lognormal(0, 1, 40))
    with pytest.raises(DataValidationError):
        cf.efficiency(cf.simulate("full", recs, bootstrap_iters=10, seed=1),
                      cf.simulate("targeted", recs, bootstrap_iters=10, seed=2))
    flat = cf.simulate("full", nat([1.0] * 8), bootstrap_iters=10)
    with pytest.raises(NumericalError):
        cf.efficiency(flat, flat)


def test_paired_test_edge_cases():
    x = np.array([0.5, 0.6, 0.7])
    assert cf.paired_gini_test(x, x) == 1.0
    rng = np.random.default_rng(0)
    ps = [cf.paired_gini_test(b + 0.1, b + rng.normal(0, 0.01, b.size))
          for b in (rng.random(n) for n in (5, 50, 500))]
    assert ps[0] > ps[1] > ps[2]
    assert cf.paired_gini_test(x + 0.1, x) == 0.0


def test_frame_columns():
    r = cf.simulate("full", nat([0.1, 1, 2, 5]), bootstrap_iters=0)
    df = r.frame()
    assert list(df.columns) == ["fraction", "n_adjusted", "gini", "pct_reduction", "ci_low", "ci_high"]
    assert len(df) == 5
    assert isinstance(df, pd.DataFrame)

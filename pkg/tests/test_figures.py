import numpy as np
import pandas as pd
import pytest

from pbrkit.errors import ConfigError
from pbrkit.figures import (
    FIGURES, choropleth_figure, emit_figure_data, lorenz_figure, step_label, waterfall_figure,
)


def test_lorenz_equal_panel_is_two_point_diagonal():
    pairs = pd.DataFrame({"country": ["A", "B", "C"], "disease": [0, 0, 0],
                          "pbr": [1.0, 1.0, 1.0], "dalys": [5.0, 2.0, 3.0]})
    fig = lorenz_figure(pairs)
    assert len(fig) == 2
    assert np.allclose(fig.iloc[:, 0], fig.iloc[:, 1])
    assert np.allclose(fig.iloc[:, 0], [0.0, 1.0])


def test_step_labels():
    assert [step_label(f) for f in (0, 0.25, 0.5, 0.75, 1.0)] == \
        ["Baseline", "Top 25%", "Top 50%", "Top 75%", "All Countries"]


def test_waterfall_five_rows():
    steps = pd.DataFrame({"fraction": [0, 0.25, 0.5, 0.75, 1.0], "n_adjusted": [0, 43, 86, 129, 172],
                          "gini": [0.76, 0.45, 0.23, 0.07, 0.0], "pct_reduction": [0, 41, 69, 91, 100],
                          "ci_low": [0] * 5, "ci_high": [0] * 5})
    fig = waterfall_figure(steps)
    assert fig.step.tolist() == ["Baseline", "Top 25%", "Top 50%", "Top 75%", "All Countries"]
    assert fig.countries.tolist() == [0, 43, 86, 129, 172]


def test_choropleth_clamp_flag():
    national = pd.DataFrame({"country": ["AAA", "BBB", "CCC"], "pbr": [np.exp(2.3), 1.0, np.exp(-0.4)]})
    fig = choropleth_figure(national)
    assert fig.value.tolist() == pytest.approx([1.5, 0.0, -0.4])
    assert fig.clamped.tolist() == [True, False, False]
    raw = choropleth_figure(national, clamp=False)
    assert raw.value[0] == pytest.approx(2.3) and not raw.clamped.any()


def test_emit_requires_stage_output(tmp_path):
    with pytest.raises(ConfigError, match="pairs.csv"):
        emit_figure_data(tmp_path, "lorenz")
    with pytest.raises(ConfigError, match="unknown figure"):
        emit_figure_data(tmp_path, "heatmap")


@pytest.mark.parametrize("figure", FIGURES)
def test_every_figure_from_demo_run(demo_run, figure):
    out, _ = demo_run
    fig = emit_figure_data(out, figure)
    assert len(fig) > 0
    if figure == "waterfall":
        assert fig.step.tolist()[0] == "Baseline" and fig.step.tolist()[-1] == "All Countries"
        assert len(fig) == 5
    if figure == "choropleth":
        finite = fig.value[np.isfinite(fig.value)]
        assert (finite.abs() <= 1.5).all()

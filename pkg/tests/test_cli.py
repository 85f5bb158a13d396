import json
import subprocess
import sys

import pytest

from pbrkit import __version__
from pbrkit.cli import EXIT_CODES, main
from pbrkit.demo import fixture_path
from pbrkit.outputs import read_csv

TINY = str(fixture_path("tiny_panel.csv"))
DEMO = str(fixture_path("demo_panel.csv"))
DEMO_PRED = str(fixture_path("demo_predictors.csv"))
DEMO_COMP = str(fixture_path("demo_components.csv"))


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def payload(text):
    return json.loads(text)["result"]


def test_exit_code_table():
    assert {t.__name__: c for t, c in EXIT_CODES} == \
        {"ConfigError": 2, "DataValidationError": 3, "NumericalError": 4}


def test_version_flag():
    out = subprocess.run([sys.executable, "-m", "pbrkit.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout


def test_ingest_emits_header_and_rows(capsys):
    code, out = run(capsys, "ingest", TINY, "--seed", "4")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == f"# pbrkit {__version__} seed=4"
    assert len(lines) == 2 + 12


def test_ingest_output_reingests(capsys, tmp_path):
    from pbrkit.panel import ingest_panel
    out = tmp_path / "p.csv"
    assert run(capsys, "ingest", TINY, "--out", str(out))[0] == 0
    assert ingest_panel(out) == ingest_panel(TINY)


def test_metrics_pbr_and_gini(capsys, tmp_path):
    code, _ = run(capsys, "metrics", "pbr", "--panel", TINY, "--out", str(tmp_path / "p.csv"))
    assert code == 0
    pairs = read_csv(tmp_path / "p.csv").set_index(["country", "disease"])
    assert pairs.loc[("USA", 0), "pbr"] == pytest.approx(35 / 16, abs=1e-12)
    code, out = run(capsys, "metrics", "gini", "--panel", TINY)
    assert code == 0 and 0 <= payload(out)["gini"] <= 1


@pytest.mark.parametrize("kind", ["si", "lorenz", "leave-out"])
def test_metrics_variants(capsys, kind):
    code, out = run(capsys, "metrics", kind, "--panel", DEMO)
    assert code == 0 and out


def test_metrics_cis_bootstrap_seeded(capsys):
    a = run(capsys, "metrics", "cis", "--panel", DEMO, "--bootstrap", "30", "--seed", "1")
    b = run(capsys, "metrics", "cis", "--panel", DEMO, "--bootstrap", "30", "--seed", "1")
    assert a == b and a[0] == 0


def test_metrics_alignment(capsys):
    code, out = run(capsys, "metrics", "alignment", "--panel", DEMO, "--predictors", DEMO_PRED)
    assert code == 0 and out


@pytest.mark.parametrize("kind", ["theil", "anova", "trend"])
def test_decompose(capsys, kind):
    extra = ["--bootstrap", "20"] if kind == "trend" else []
    code, out = run(capsys, "decompose", kind, "--panel", DEMO, *extra)
    assert code == 0 and out


def test_decompose_theil_identity(capsys):
    _, out = run(capsys, "decompose", "theil", "--panel", DEMO, "--group", "country")
    r = payload(out)
    assert r["between"] + r["within"] == pytest.approx(r["total"], abs=1e-10)


def test_attribute_shapley_small_budget(capsys):
    code, out = run(capsys, "attribute", "shapley", "--panel", DEMO, "--predictors", DEMO_PRED,
                    "--permutations", "20", "--bootstrap", "5", "--bootstrap-permutations", "5")
    assert code == 0 and out


def test_attribute_hierarchical(capsys):
    code, out = run(capsys, "attribute", "hierarchical", "--panel", DEMO, "--predictors", DEMO_PRED)
    assert code == 0 and out


def test_classify_then_network(capsys, tmp_path):
    pairs = tmp_path / "classified.csv"
    code, _ = run(capsys, "classify", "--panel", DEMO, "--predictors", DEMO_PRED, "--components", DEMO_COMP,
                  "--out", str(pairs))
    assert code == 0 and pairs.is_file()
    code, _ = run(capsys, "network", "build", "--pairs", str(pairs), "--out", str(tmp_path / "g"))
    assert code == 0
    edges, nodes = tmp_path / "g" / "graph_edges.csv", tmp_path / "g" / "graph_nodes.csv"
    code, out = run(capsys, "network", "metrics", "--edges", str(edges), "--nodes", str(nodes),
                    "--out", str(tmp_path / "m.json"))
    assert code == 0
    m = json.loads((tmp_path / "m.json").read_text())["result"]
    assert 0 <= m["density"] <= 1
    code, out = run(capsys, "network", "evolve", "--baseline", str(tmp_path / "m.json"),
                    "--delta-g", "0,0.5,1", "--noise-bootstrap", "0")
    assert code == 0 and out


def test_simulate(capsys):
    code, out = run(capsys, "simulate", "--panel", DEMO, "--scenario", "full", "--bootstrap", "20")
    assert code == 0
    lines = out.splitlines()
    assert lines[1].startswith("step,") and len(lines) == 2 + 5


@pytest.mark.parametrize("argv,check", [
    (["stats", "permutation", "--a", "1,2,3", "--b", "4,5,6"], lambda r: r["p_value"] == pytest.approx(0.1)),
    (["stats", "paired-t", "--a", "1,2,3", "--b", "1,2,3"], lambda r: r["p_value"] == 1.0),
    (["stats", "spearman", "--a", "1,2,3,4", "--b", "2,4,6,8"], lambda r: r["rho"] == 1.0),
])
def test_stats_subcommands(capsys, argv, check):
    code, out = run(capsys, *argv)
    assert code == 0 and check(payload(out))


def test_stats_tables(capsys, tmp_path):
    (tmp_path / "t.csv").write_text("row,x,y\na,10,0\nb,0,10\n")
    code, out = run(capsys, "stats", "cramers-v", "--table", str(tmp_path / "t.csv"), "--uncorrected")
    assert code == 0 and payload(out)["cramers_v"] == pytest.approx(1.0)
    (tmp_path / "g.csv").write_text("g,v\na,1\na,2\nb,3\nb,4\n")
    code, out = run(capsys, "stats", "kruskal", "--input", str(tmp_path / "g.csv"), "--group", "g", "--value", "v")
    assert code == 0 and payload(out)["H"] > 0


def test_run_and_emit(capsys, tmp_path):
    out_dir = tmp_path / "res"
    code, _ = run(capsys, "run", "--fixture", "tiny", "--out", str(out_dir))
    assert code == 0 and (out_dir / "manifest.json").is_file()
    code, out = run(capsys, "emit", "lorenz", "--results", str(out_dir))
    assert code == 0 and out.startswith("# pbrkit")
    # waterfall needs the simulation stage output, which the tiny fixture skips
    code, _ = run(capsys, "emit", "waterfall", "--results", str(out_dir))
    assert code == 2


def test_config_env_var(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(f"panel: {TINY}\nseed: 77\n")
    monkeypatch.setenv("PBRKIT_CONFIG", str(cfg))
    code, out = run(capsys, "ingest")
    assert code == 0 and out.startswith(f"# pbrkit {__version__} seed=77")


def test_exit_2_missing_file(capsys, tmp_path):
    code, _ = run(capsys, "ingest", str(tmp_path / "nope.csv"))
    assert code == 2
    code, _ = run(capsys, "run", "--config", str(tmp_path / "nope.yaml"))
    assert code == 2


def test_exit_3_bad_data(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("country,disease,year,participants,dalys\nUSA,0,2000,-5,10\n")
    code, _ = run(capsys, "ingest", str(bad))
    assert code == 3


def test_exit_4_numerical(capsys, tmp_path):
    zero = tmp_path / "zero.csv"
    zero.write_text("country,disease,year,participants,dalys\nUSA,0,2000,0,10\nGBR,0,2000,0,5\n")
    code, _ = run(capsys, "metrics", "gini", "--panel", str(zero))
    assert code in (3, 4)


def test_subprocess_exit_codes(tmp_path):
    r = subprocess.run([sys.executable, "-m", "pbrkit.cli", "ingest", str(tmp_path / "x.csv")],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "not found" in r.stderr

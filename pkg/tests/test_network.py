import itertools
import math

import networkx as nx
import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pbrkit.errors import DataValidationError
from pbrkit.network import (
    DEFAULT_BETAS, SensitivityModel, build_graph, categorical_assortativity, edge_redistribution,
    evolve, evolve_point, exact_partition, louvain, metrics, modularity, read_graph,
    redistribution_summary, write_graph,
)


# -- oracles -------------------------------------------------------------------

def set_partitions(items):
    """All set partitions of a list, by recursive insertion."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def q_matrix(graph, part):
    """Modularity from the adjacency matrix: (1/2m) sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j)."""
    nodes = list(graph.nodes())
    a = nx.to_numpy_array(graph, nodelist=nodes, weight="weight")
    two_m = a.sum()
    k = a.sum(axis=1)
    comm = {v: ci for ci, block in enumerate(part) for v in block}
    q = 0.0
    for i, u in enumerate(nodes):
        for j, v in enumerate(nodes):
            if comm[u] == comm[v]:
                q += a[i, j] - k[i] * k[j] / two_m
    return q / two_m


def best_q(graph):
    return max(q_matrix(graph, p) for p in set_partitions(list(graph.nodes())))


def random_weighted(seed, n_lo=5, n_hi=8, p=0.45):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_lo, n_hi + 1))
    g = nx.gnp_random_graph(n, p, seed=seed)
    for u, v in g.edges():
        g[u][v]["weight"] = int(rng.integers(1, 5))
    return g


def pairs_frame(rows):
    return pd.DataFrame(rows, columns=["country", "disease", "factor", "status", "residual"])


# -- build_graph ---------------------------------------------------------------

def test_build_graph_edge_weight_is_shared_disease_count():
    rows = [("AAA", d, "Governance", "UnderPerforming", -1.0) for d in (0, 1, 2, 3)]
    rows += [("BBB", d, "Governance", "UnderPerforming", -1.0) for d in (1, 2, 3, 5)]
    rows += [("CCC", d, "Research_Investment", "AsExpected", 0.0) for d in (0, 7)]
    g = build_graph(pairs_frame(rows)).graph
    assert g["AAA:Governance"]["BBB:Governance"]["weight"] == 3
    # CCC shares only disease 0 with AAA: below min_weight 2
    assert not g.has_edge("AAA:Governance", "CCC:Research_Investment")
    assert g.nodes["CCC:Research_Investment"]["disease_count"] == 2
    assert nx.number_of_selfloops(g) == 0


def test_build_graph_min_weight_one_and_unassigned_dropped():
    rows = [("AAA", 0, "Governance", "AsExpected", 0.0), ("BBB", 0, "Governance", "AsExpected", 0.0),
            ("CCC", 0, "Unassigned", "OverPerforming", 1.0)]
    rg = build_graph(pairs_frame(rows), min_weight=1)
    assert rg.n_nodes == 2 and rg.n_edges == 1


def test_build_graph_one_node_per_country_factor():
    rows = [("AAA", 0, "Governance", "UnderPerforming", -1.0),
            ("AAA", 1, "Research_Investment", "UnderPerforming", -1.0),
            ("AAA", 2, "Governance", "AsExpected", 0.1)]
    g = build_graph(pairs_frame(rows)).graph
    assert sorted(g.nodes()) == ["AAA:Governance", "AAA:Research_Investment"]
    assert g.nodes["AAA:Governance"]["diseases"] == frozenset({0, 2})


def test_node_status_rules():
    rows = [("AAA", 0, "Governance", "UnderPerforming", -0.9),
            ("AAA", 1, "Governance", "UnderPerforming", -0.8),
            ("AAA", 2, "Governance", "OverPerforming", 3.0)]
    assert build_graph(pairs_frame(rows), status_rule="modal").graph.nodes["AAA:Governance"]["status"] \
        == "UnderPerforming"
    # mean residual 1.3/3 = 0.433 lies in the unclassified gap
    assert build_graph(pairs_frame(rows), status_rule="mean_residual").graph.nodes["AAA:Governance"][
        "status"] == "Unclassified"
    with pytest.raises(ValueError):
        build_graph(pairs_frame(rows), status_rule="median")


def test_build_graph_rejects_empty():
    with pytest.raises(DataValidationError):
        build_graph(pairs_frame([("AAA", 0, "Unassigned", "AsExpected", 0.0)]))


# -- metrics -------------------------------------------------------------------

def factor_graph(edges, factors):
    g = nx.Graph()
    for n, f in factors.items():
        g.add_node(n, factor=f, status="AsExpected")
    g.add_edges_from(edges, weight=1)
    return g


def test_k4_density_and_path():
    g = factor_graph(itertools.combinations("abcd", 2), dict(zip("abcd", "xxyy")))
    m = metrics(g)
    assert m.density == 1.0
    assert m.avg_path_length == 1.0
    assert m.diameter == 1 and m.n_components == 1


def test_triangle_homophily_by_hand():
    # a, b share a factor; c differs: edges ab (same), ac, bc (cross) -> 1/3
    g = factor_graph([("a", "b"), ("a", "c"), ("b", "c")], {"a": "x", "b": "x", "c": "y"})
    m = metrics(g)
    assert m.factor_homophily == pytest.approx(1 / 3, abs=1e-15)
    table = redistribution_summary(edge_redistribution(g))
    cross = table.set_index("class").loc["cross", "share"]
    assert m.factor_homophily + cross == 1.0


@given(st.integers(0, 10_000))
def test_density_and_homophily_identities(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 14))
    g = nx.gnp_random_graph(n, float(rng.uniform(0.2, 0.9)), seed=seed)
    if g.number_of_edges() == 0:
        g.add_edge(0, 1)
    nx.set_node_attributes(g, {v: str(rng.choice(["F1", "F2", "F3"])) for v in g}, "factor")
    nx.set_node_attributes(g, "AsExpected", "status")
    m = metrics(g)
    e = g.number_of_edges()
    assert m.density == 2 * e / (n * (n - 1))
    same = sum(g.nodes[u]["factor"] == g.nodes[v]["factor"] for u, v in g.edges())
    assert m.factor_homophily + (e - same) / e == pytest.approx(1.0, abs=1e-15)
    assert 0 <= m.density <= 1 and 0 <= m.factor_homophily <= 1
    assert -0.5 <= m.modularity <= 1


@given(st.integers(0, 10_000))
def test_factor_assortativity_matches_networkx(seed):
    rng = np.random.default_rng(seed)
    g = nx.gnp_random_graph(12, 0.4, seed=seed)
    nx.set_node_attributes(g, {v: str(rng.choice(["A", "B", "C"])) for v in g}, "factor")
    ours = categorical_assortativity(g, "factor")
    with np.errstate(all="ignore"):
        ref = nx.attribute_assortativity_coefficient(g, "factor")
    if math.isnan(ref):
        assert math.isnan(ours)
    else:
        assert ours == pytest.approx(ref, abs=1e-12)


def test_disconnected_graph_uses_largest_component():
    g = factor_graph([("a", "b"), ("b", "c"), ("d", "e")], dict(zip("abcde", "xxyyx")))
    m = metrics(g)
    assert m.largest_component_only and m.n_components == 2
    assert m.avg_path_length == pytest.approx(4 / 3)
    assert m.diameter == 2


def test_metrics_needs_two_nodes():
    g = nx.Graph()
    g.add_node("a", factor="x", status="AsExpected")
    with pytest.raises(DataValidationError):
        metrics(g)


# -- Louvain -------------------------------------------------------------------

def two_cliques():
    g = nx.Graph()
    g.add_edges_from(itertools.combinations(range(5), 2), weight=1)
    g.add_edges_from(itertools.combinations(range(5, 10), 2), weight=1)
    g.add_edge(4, 5, weight=1)
    return g


@pytest.mark.parametrize("exact_max_nodes", [0, 10])
def test_two_cliques_recover_two_communities(exact_max_nodes):
    parts, q = louvain(two_cliques(), seed=0, exact_max_nodes=exact_max_nodes)
    assert sorted(sorted(p) for p in parts) == [list(range(5)), list(range(5, 10))]
    assert q == pytest.approx(q_matrix(two_cliques(), parts), abs=1e-12)


def test_modularity_matches_matrix_oracle_on_every_partition():
    g = random_weighted(3, 6, 6)
    for part in set_partitions(list(g.nodes())):
        assert modularity(g, part) == pytest.approx(q_matrix(g, part), abs=1e-12)


@pytest.mark.parametrize("seed", range(40))
def test_louvain_matches_brute_force_on_small_graphs(seed):
    g = random_weighted(seed)
    if g.number_of_edges() == 0:
        pytest.skip("edgeless draw")
    parts, q = louvain(g, seed=0)
    assert abs(q - best_q(g)) <= 1e-9
    assert sorted(v for p in parts for v in p) == sorted(g.nodes())


def test_exact_partition_beats_heuristic_on_known_local_optimum():
    # search the fixed draws for one where the heuristic stalls, then check the exact path
    for seed in range(200):
        g = random_weighted(seed)
        if g.number_of_edges() == 0:
            continue
        _, q_h = louvain(g, seed=0, exact_max_nodes=0)
        target = best_q(g)
        if target - q_h > 1e-9:
            _, q_e = exact_partition(g)
            assert abs(q_e - target) <= 1e-9
            return
    pytest.skip("heuristic reached the optimum on every draw")


@given(st.integers(0, 10_000))
def test_louvain_nonnegative_on_connected_graphs(seed):
    g = nx.connected_watts_strogatz_graph(20, 4, 0.3, seed=seed)
    nx.set_edge_attributes(g, 1, "weight")
    _, q = louvain(g, seed=seed % 7)
    assert q >= -1e-12


def test_louvain_seed_determinism():
    g = nx.connected_watts_strogatz_graph(40, 6, 0.2, seed=1)
    nx.set_edge_attributes(g, 1, "weight")
    assert louvain(g, seed=5, n_starts=3) == louvain(g, seed=5, n_starts=3)


def test_exact_partition_limits():
    with pytest.raises(ValueError):
        exact_partition(nx.path_graph(13))
    parts, q = exact_partition(nx.empty_graph(3))
    assert q == 0.0 and len(parts) == 3


# -- evolution -----------------------------------------------------------------

BASE = {"density": 0.441, "factor_homophily": 0.523, "modularity": 0.121, "avg_path_length": 1.562}


def test_zero_delta_is_identity():
    assert evolve_point(BASE, SensitivityModel(), 0.0) == BASE


def test_full_alignment_finals():
    out = evolve_point(BASE, SensitivityModel(), 1.0)
    assert out["density"] == pytest.approx(0.661, abs=1e-12)
    assert out["factor_homophily"] == pytest.approx(0.313, abs=1e-12)
    assert out["modularity"] == pytest.approx(0.121 - 0.042, abs=1e-12)


def test_targeted_finals():
    out = evolve_point(BASE, SensitivityModel(), 0.2 / 0.22)
    assert out["density"] == pytest.approx(0.641, abs=1e-12)
    assert out["factor_homophily"] == pytest.approx(0.333, abs=1.5e-3)


@given(st.floats(0, 0.5), st.floats(0, 0.5))
def test_evolution_is_linear(a, b):
    m = SensitivityModel()
    pa, pb, pab = evolve_point(BASE, m, a), evolve_point(BASE, m, b), evolve_point(BASE, m, a + b)
    for k in DEFAULT_BETAS:
        assert pab[k] - BASE[k] == pytest.approx((pa[k] - BASE[k]) + (pb[k] - BASE[k]), abs=1e-12)


@given(st.floats(0, 1), st.floats(-5, 5), st.floats(-5, 5))
def test_clamping(dg, beta_d, beta_h):
    model = SensitivityModel(betas={"density": beta_d, "factor_homophily": beta_h})
    out = evolve_point({"density": 0.9, "factor_homophily": 0.1}, model, dg)
    assert 0 <= out["density"] <= 1 and 0 <= out["factor_homophily"] <= 1


def test_evolve_noise_schedule_and_determinism():
    steps = evolve(BASE, delta_g=[0.0, 0.5, 1.0], noise_bootstrap=200, seed=3)
    noise = sorted({(s.step, s.noise) for s in steps})
    assert [n for _, n in noise] == pytest.approx([0.10, 0.125, 0.15])
    assert steps == evolve(BASE, delta_g=[0.0, 0.5, 1.0], noise_bootstrap=200, seed=3)
    for s in steps:
        assert s.ci_low <= s.ci_high
        if s.metric in ("density", "factor_homophily"):
            assert 0 <= s.ci_low and s.ci_high <= 1
    flat = evolve(BASE, delta_g=[1.0], noise_bootstrap=0)
    assert all(s.ci_low == s.value == s.ci_high for s in flat)


def test_evolve_rejects_bad_schedule():
    with pytest.raises(ValueError):
        evolve(BASE, delta_g=[0.5, 0.2])
    with pytest.raises(ValueError):
        evolve(BASE, delta_g=[1.2])


# -- redistribution ------------------------------------------------------------

def counted_graph(within, cross, n_per=70):
    """Graph over four factors with the requested within/cross edge counts."""
    g = nx.Graph()
    factors = ["F0", "F1", "F2", "F3"]
    nodes = {f: [f"{f}_{i}" for i in range(n_per)] for f in factors}
    for f in factors:
        for n in nodes[f]:
            g.add_node(n, factor=f, status="AsExpected")
    w_pool = [e for f in factors for e in itertools.combinations(nodes[f], 2)]
    c_pool = [(u, v) for a, b in itertools.combinations(factors, 2) for u in nodes[a] for v in nodes[b]]
    rng = np.random.default_rng(0)
    for pool, k in ((w_pool, within), (c_pool, cross)):
        for i in rng.choice(len(pool), size=k, replace=False):
            g.add_edge(*pool[i], weight=2)
    return g


def test_redistribution_unchanged_equals_baseline():
    g = counted_graph(300, 250, n_per=20)
    t = edge_redistribution(g)
    assert (t.edges == t.baseline_edges).all()
    t2 = edge_redistribution(g, homophily=300 / 550)
    assert (t2.edges == t2.baseline_edges).all()


def test_redistribution_release_shaped_counts():
    g = counted_graph(7886, 7179)
    s = redistribution_summary(edge_redistribution(g)).set_index("class")
    assert s.loc["within", "edges"] == 7886 and s.loc["cross", "edges"] == 7179
    assert s.loc["within", "share"] == pytest.approx(0.523, abs=5e-4)
    s36 = redistribution_summary(edge_redistribution(g, homophily=0.36)).set_index("class")
    assert abs(s36.loc["within", "edges"] - 5421) <= 3
    assert s36.edges.sum() == 15065


@given(st.floats(0, 1))
def test_redistribution_holds_total(h):
    g = counted_graph(120, 80, n_per=12)
    t = edge_redistribution(g, homophily=h)
    assert t.edges.sum() == 200
    assert (t.edges >= 0).all()


def test_redistribution_rejects_out_of_range():
    with pytest.raises(ValueError):
        edge_redistribution(counted_graph(5, 5, n_per=5), homophily=1.5)


# -- I/O -----------------------------------------------------------------------

def test_graph_round_trip(tmp_path):
    rows = [(c, d, f, "AsExpected", 0.0) for c, f in (("AAA", "Governance"), ("BBB", "Governance"),
                                                     ("CCC", "Multiple_Factors"))
            for d in (0, 1, 2)]
    rg = build_graph(pairs_frame(rows))
    write_graph(rg, tmp_path / "e.csv", tmp_path / "n.csv")
    back = read_graph(tmp_path / "e.csv", tmp_path / "n.csv")
    assert back.edges_frame().equals(rg.edges_frame())
    assert back.nodes_frame().equals(rg.nodes_frame())


def test_read_graph_rejects_self_loop(tmp_path):
    (tmp_path / "n.csv").write_text("node,country,factor,status,disease_count,diseases\n"
                                    "A:x,A,x,AsExpected,2,0;1\n")
    (tmp_path / "e.csv").write_text("source,target,weight\nA:x,A:x,2\n")
    with pytest.raises(DataValidationError):
        read_graph(tmp_path / "e.csv", tmp_path / "n.csv")

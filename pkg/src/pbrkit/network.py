"""Country-factor disease-sharing graph, structural metrics and evolution."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np
import pandas as pd

from .classify import STATUSES, UNASSIGNED, Thresholds, classify_residual
from .errors import DataValidationError
from .outputs import write_csv
from .stats import rng_for

STATUS_RULES = ("modal", "mean_residual")


@dataclass
class ResearchGraph:
    graph: nx.Graph
    min_weight: int = 2

    @property
    def n_nodes(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def n_edges(self) -> int:
        return self.graph.number_of_edges()

    def nodes_frame(self) -> pd.DataFrame:
        rows = []
        for n, a in self.graph.nodes(data=True):
            rows.append({"node": n, "country": a["country"], "factor": a["factor"],
                         "status": a["status"], "disease_count": a["disease_count"],
                         "diseases": ";".join(str(d) for d in sorted(a["diseases"]))})
        return pd.DataFrame(rows, columns=["node", "country", "factor", "status",
                                           "disease_count", "diseases"])

    def edges_frame(self) -> pd.DataFrame:
        rows = sorted((min(u, v), max(u, v), int(w)) for u, v, w in self.graph.edges(data="weight"))
        return pd.DataFrame(rows, columns=["source", "target", "weight"])


def _pair_rows(pairs) -> pd.DataFrame:
    if isinstance(pairs, pd.DataFrame):
        df = pairs.copy()
    else:
        df = pd.DataFrame([{"country": p.country, "disease": p.disease, "factor": p.factor,
                            "status": p.status, "residual": p.residual} for p in pairs])
    need = {"country", "disease", "factor", "status"}
    if df.empty or not need <= set(df.columns):
        raise DataValidationError("build_graph needs pairs with country, disease, factor and status")
    return df


def _node_status(group: pd.DataFrame, rule: str, thresholds: Thresholds) -> str:
    if rule == "modal":
        counts = Counter(group.status)
        top = max(counts.values())
        return next(s for s in STATUSES if counts.get(s, 0) == top)
    if rule == "mean_residual":
        return classify_residual(float(group.residual.mean()), thresholds)
    raise ValueError(f"status rule must be one of {STATUS_RULES}")


def build_graph(pairs, min_weight: int = 2, status_rule: str = "modal",
                thresholds: Thresholds = Thresholds()) -> ResearchGraph:
    """One node per (country, factor); edge weight = number of shared diseases.

    Pairs without an assigned factor are ignored. Node status is the modal
    pair status (ties broken by status order) or the class of the mean
    residual.
    """
    df = _pair_rows(pairs)
    df = df[df.factor != UNASSIGNED]
    if df.empty:
        raise DataValidationError("no pairs with an assigned factor")
    g = nx.Graph()
    names, masks = [], []
    for (country, factor), grp in df.groupby(["country", "factor"], sort=True):
        node = f"{country}:{factor}"
        diseases = frozenset(int(d) for d in grp.disease)
        g.add_node(node, country=country, factor=factor, status=_node_status(grp, status_rule, thresholds),
                   diseases=diseases, disease_count=len(diseases))
        names.append(node)
        masks.append(diseases)
    levels = sorted(set().union(*masks))
    ind = np.zeros((len(names), len(levels)), dtype=np.int64)
    col = {d: j for j, d in enumerate(levels)}
    for i, ds in enumerate(masks):
        ind[i, [col[d] for d in ds]] = 1
    shared = ind @ ind.T
    iu, ju = np.nonzero(np.triu(shared >= min_weight, k=1))
    g.add_weighted_edges_from((names[i], names[j], int(shared[i, j])) for i, j in zip(iu, ju))
    return ResearchGraph(g, min_weight)


# -- metrics ----------------------------------------------------------------

def modularity(graph: nx.Graph, communities: Iterable[Iterable], weight: str | None = "weight",
               resolution: float = 1.0) -> float:
    """Newman modularity: sum over communities of L_c/m - (d_c / 2m)^2."""
    m = graph.size(weight=weight)
    if m == 0:
        return 0.0
    deg = dict(graph.degree(weight=weight))
    q = 0.0
    for comm in communities:
        comm = set(comm)
        inside = sum(w for u, v, w in graph.subgraph(comm).edges(data=weight, default=1)) \
            if weight else graph.subgraph(comm).number_of_edges()
        d = sum(deg[n] for n in comm)
        q += inside / m - resolution * (d / (2 * m)) ** 2
    return float(q)


def _restricted_growth(n: int):
    """Every set partition of range(n) as a block label per element."""
    labels = [0] * n

    def rec(i, top):
        if i == n:
            yield tuple(labels)
            return
        for b in range(top + 2):
            labels[i] = b
            yield from rec(i + 1, max(top, b))

    if n:
        labels[0] = 0
        yield from rec(1, 0)


def exact_partition(graph: nx.Graph, weight: str = "weight",
                    resolution: float = 1.0) -> tuple[list[frozenset], float]:
    """Maximum-modularity partition by exhaustive search (Bell(n) candidates).

    Feasible only for small graphs; ties go to the first partition in
    restricted-growth order over sorted nodes.
    """
    nodes = sorted(graph.nodes())
    n = len(nodes)
    if n == 0:
        raise DataValidationError("empty graph")
    if n > 12:
        raise ValueError("exhaustive partition search is limited to 12 nodes")
    a = nx.to_numpy_array(graph, nodelist=nodes, weight=weight)
    two_m = a.sum()
    if two_m == 0:
        return [frozenset([v]) for v in nodes], 0.0
    k = a.sum(axis=1)
    b = a - resolution * np.outer(k, k) / two_m
    best, best_q = None, -math.inf
    for lab in _restricted_growth(n):
        lab = np.asarray(lab)
        q = b[lab[:, None] == lab[None, :]].sum() / two_m
        if q > best_q + 1e-12:
            best, best_q = lab, q
    comms = [sorted(np.flatnonzero(best == c)) for c in range(best.max() + 1)]
    comms = sorted(comms, key=lambda c: (-len(c), c[0]))
    # recompute through the shared evaluator so both paths report identical Q
    out = [frozenset(nodes[i] for i in c) for c in comms]
    return out, modularity(graph, out, weight, resolution)


def louvain(graph: nx.Graph, seed: int = 0, weight: str = "weight", resolution: float = 1.0,
            n_starts: int = 1, exact_max_nodes: int = 8) -> tuple[list[frozenset], float]:
    """Louvain partition (best of ``n_starts`` seeded runs) and its modularity.

    Graphs with at most ``exact_max_nodes`` nodes are solved exactly instead,
    since the heuristic can stop at a local optimum there. Pass 0 to always
    run the heuristic.
    """
    if graph.number_of_nodes() == 0:
        raise DataValidationError("empty graph")
    if graph.number_of_nodes() <= exact_max_nodes:
        return exact_partition(graph, weight, resolution)
    # integer labels keep set iteration (and so the result) independent of string hashing
    labels = list(graph.nodes())
    h = nx.relabel_nodes(graph, {n: i for i, n in enumerate(labels)})
    best, best_q = None, -math.inf
    for s in range(n_starts):
        sub_seed = int(rng_for(seed, "louvain", s).integers(0, 2**31 - 1))
        comms = nx.community.louvain_communities(h, weight=weight, resolution=resolution,
                                                 seed=sub_seed)
        comms = [sorted(c) for c in comms]
        q = modularity(h, comms, weight, resolution)
        if q > best_q + 1e-15:
            best, best_q = comms, q
    ordered = sorted(best, key=lambda c: (-len(c), c[0]))
    return [frozenset(labels[i] for i in c) for c in ordered], best_q


@dataclass(frozen=True)
class NetworkMetrics:
    density: float
    factor_homophily: float
    status_homophily: float
    degree_assortativity: float
    factor_assortativity: float
    avg_clustering: float
    modularity: float
    avg_path_length: float
    diameter: int
    n_components: int
    n_nodes: int = 0
    n_edges: int = 0
    n_communities: int = 0
    largest_component_only: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def _homophily(graph: nx.Graph, attr: str) -> float:
    e = graph.number_of_edges()
    if e == 0:
        return math.nan
    same = sum(graph.nodes[u][attr] == graph.nodes[v][attr] for u, v in graph.edges())
    return same / e


def categorical_assortativity(graph: nx.Graph, attr: str) -> float:
    """Newman's r = (sum e_ii - sum a_i b_i) / (1 - sum a_i b_i) over sorted categories."""
    cats = sorted({a[attr] for _, a in graph.nodes(data=True)})
    if graph.number_of_edges() == 0:
        return math.nan
    pos = {c: i for i, c in enumerate(cats)}
    e = np.zeros((len(cats), len(cats)))
    for u, v in graph.edges():
        i, j = pos[graph.nodes[u][attr]], pos[graph.nodes[v][attr]]
        e[i, j] += 1
        e[j, i] += 1
    e /= e.sum()
    ab = float(e.sum(axis=1) @ e.sum(axis=0))
    if ab >= 1.0:
        return math.nan
    return (float(np.trace(e)) - ab) / (1.0 - ab)


def _safe(fn, *args, **kw) -> float:
    try:
        with np.errstate(all="ignore"):
            v = float(fn(*args, **kw))
    except (ValueError, ZeroDivisionError, nx.NetworkXError):
        return math.nan
    return v


def metrics(graph: ResearchGraph | nx.Graph, seed: int = 0, n_starts: int = 1) -> NetworkMetrics:
    """The ten structural metrics; path metrics use the largest component if disconnected."""
    g = graph.graph if isinstance(graph, ResearchGraph) else graph
    n = g.number_of_nodes()
    if n < 2:
        raise DataValidationError("path metrics need at least two nodes")
    comps = list(nx.connected_components(g))
    core = g if len(comps) == 1 else g.subgraph(max(comps, key=len))
    if core.number_of_nodes() > 1:
        apl = nx.average_shortest_path_length(core)
        diam = nx.diameter(core)
    else:
        apl, diam = math.nan, 0
    parts, q = louvain(g, seed, n_starts=n_starts) if g.number_of_edges() else ([], 0.0)
    has_factor = all("factor" in a for _, a in g.nodes(data=True))
    return NetworkMetrics(
        density=nx.density(g),
        factor_homophily=_homophily(g, "factor") if has_factor else math.nan,
        status_homophily=_homophily(g, "status") if has_factor else math.nan,
        degree_assortativity=_safe(nx.degree_assortativity_coefficient, g),
        factor_assortativity=categorical_assortativity(g, "factor") if has_factor else math.nan,
        avg_clustering=nx.average_clustering(g),
        modularity=q,
        avg_path_length=float(apl),
        diameter=int(diam),
        n_components=len(comps),
        n_nodes=n,
        n_edges=g.number_of_edges(),
        n_communities=len(parts),
        largest_component_only=len(comps) > 1,
    )


# -- evolution ---------------------------------------------------------------

DEFAULT_BETAS = {
    "density": 0.220,
    "factor_homophily": -0.210,
    "modularity": -0.042,
    "avg_path_length": -0.085,
}
CLAMPED = ("density", "factor_homophily")


@dataclass(frozen=True)
class SensitivityModel:
    betas: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_BETAS))
    noise_start: float = 0.10
    noise_end: float = 0.15

    def noise(self, step: int, n_steps: int) -> float:
        """Relative noise magnitude, linear from start to end across steps."""
        if n_steps <= 1:
            return self.noise_start
        return self.noise_start + (self.noise_end - self.noise_start) * step / (n_steps - 1)


def evolve_point(baseline: Mapping[str, float], model: SensitivityModel, delta_g: float) -> dict:
    """Noise-free M + beta * dG, with density and homophily clamped to [0, 1]."""
    out = {}
    for name, beta in model.betas.items():
        v = float(baseline[name]) + beta * float(delta_g)
        out[name] = min(max(v, 0.0), 1.0) if name in CLAMPED else v
    return out


@dataclass(frozen=True)
class EvolutionStep:
    step: int
    delta_g: float
    metric: str
    baseline: float
    value: float
    ci_low: float
    ci_high: float
    noise: float


def evolve(baseline, model: SensitivityModel = SensitivityModel(), delta_g: Sequence[float] = (1.0,),
           noise_bootstrap: int = 100, seed: int = 0) -> list[EvolutionStep]:
    """Stepwise metric projections with parametric-bootstrap intervals.

    ``delta_g`` holds cumulative Gini-reduction fractions (1.0 = full
    alignment). Noise is Gaussian with SD equal to the scheduled fraction
    of the baseline metric; ``noise_bootstrap=0`` gives noise-free output.
    """
    base = baseline.as_dict() if isinstance(baseline, NetworkMetrics) else dict(baseline)
    dg = [float(x) for x in delta_g]
    if any(not 0 <= x <= 1 for x in dg) or any(b < a for a, b in zip(dg, dg[1:])):
        raise ValueError("delta_g must be ascending fractions in [0, 1]")
    out = []
    for k, d in enumerate(dg):
        point = evolve_point(base, model, d)
        rel = model.noise(k, len(dg))
        rng = rng_for(seed, "evolve", k)
        for j, (name, v) in enumerate(point.items()):
            if noise_bootstrap > 0:
                draws = v + rng.normal(0.0, rel * abs(base[name]), noise_bootstrap)
                if name in CLAMPED:
                    draws = np.clip(draws, 0.0, 1.0)
                lo, hi = (float(x) for x in np.percentile(draws, [2.5, 97.5]))
            else:
                lo = hi = v
            out.append(EvolutionStep(k, d, name, float(base[name]), v, lo, hi, rel))
    return out


def evolution_frame(steps: Sequence[EvolutionStep]) -> pd.DataFrame:
    return pd.DataFrame([asdict(s) for s in steps])


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    if total == 0 or weights.sum() == 0:
        return np.zeros(weights.size, dtype=np.int64)
    exact = weights / weights.sum() * total
    base = np.floor(exact).astype(np.int64)
    order = np.argsort(-(exact - base), kind="stable")
    base[order[: total - base.sum()]] += 1
    return base


def edge_redistribution(graph: ResearchGraph | nx.Graph, homophily: float | None = None) -> pd.DataFrame:
    """Within/cross-factor edge counts after matching a target homophily.

    The total edge count is held fixed; counts per factor pair are scaled
    proportionally within their class (largest-remainder rounding).
    """
    g = graph.graph if isinstance(graph, ResearchGraph) else graph
    counts = Counter()
    for u, v in g.edges():
        a, b = sorted((g.nodes[u]["factor"], g.nodes[v]["factor"]))
        counts[(a, b)] += 1
    total = sum(counts.values())
    if homophily is not None and not 0 <= homophily <= 1:
        raise ValueError("homophily must lie in [0, 1]")
    keys = sorted(counts)
    within_keys = [k for k in keys if k[0] == k[1]]
    cross_keys = [k for k in keys if k[0] != k[1]]
    base_within = sum(counts[k] for k in within_keys)
    target_within = base_within if homophily is None else int(round(homophily * total))
    rows = []
    for cls, ks, tot in (("within", within_keys, target_within), ("cross", cross_keys, total - target_within)):
        w = np.array([counts[k] for k in ks], dtype=np.float64)
        new = _largest_remainder(w, tot) if ks else np.array([], dtype=np.int64)
        for k, b, e in zip(ks, w, new):
            rows.append({"class": cls, "factor_a": k[0], "factor_b": k[1], "baseline_edges": int(b),
                         "edges": int(e), "share": e / total if total else math.nan})
    return pd.DataFrame(rows, columns=["class", "factor_a", "factor_b", "baseline_edges", "edges", "share"])


def redistribution_summary(table: pd.DataFrame) -> pd.DataFrame:
    s = table.groupby("class", sort=False)[["baseline_edges", "edges"]].sum()
    total = s.edges.sum()
    s["share"] = s.edges / total if total else math.nan
    return s.reset_index()


# -- I/O ---------------------------------------------------------------------

def write_graph(graph: ResearchGraph, edges_path, nodes_path, seed: int | None = None) -> None:
    write_csv(edges_path, graph.edges_frame(), seed)
    write_csv(nodes_path, graph.nodes_frame(), seed)


def read_graph(edges_path, nodes_path, min_weight: int = 2) -> ResearchGraph:
    nodes = pd.read_csv(nodes_path, dtype={"node": str, "country": str, "factor": str, "status": str,
                                           "diseases": str}, keep_default_na=False, comment="#")
    edges = pd.read_csv(edges_path, dtype={"source": str, "target": str}, comment="#")
    g = nx.Graph()
    for r in nodes.itertuples(index=False):
        ds = frozenset(int(x) for x in r.diseases.split(";") if x)
        if len(ds) != int(r.disease_count):
            raise DataValidationError(f"node {r.node}: disease_count does not match disease list")
        g.add_node(r.node, country=r.country, factor=r.factor, status=r.status, diseases=ds,
                   disease_count=len(ds))
    for r in edges.itertuples(index=False):
        if r.source == r.target:
            raise DataValidationError(f"self-loop on {r.source}")
        if r.source not in g or r.target not in g:
            raise DataValidationError(f"edge {r.source}-{r.target} references an unknown node")
        g.add_edge(r.source, r.target, weight=int(r.weight))
    return ResearchGraph(g, min_weight)

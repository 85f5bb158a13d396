"""End-to-end pipeline: ingest, metrics, decomposition, attribution,
classification, simulation and network stages with a run manifest."""
from __future__ import annotations

import dataclasses
import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, kernels
from .attribution import load_blocks, run_attribution
from .classify import Thresholds, run_classification
from .config import STAGES, RunConfig
from .counterfactual import FULL_STEPS, SCENARIOS, efficiency, national_frame, national_pbr, simulate
from .decomposition import (TREND_METRICS, BinnedCells, metric_trends, theil_decompose,
                            variance_partition)
from .errors import ConfigError, DataValidationError, PbrkitError
from .figures import lorenz_figure
from .metrics import alignment_regression, cis_all, gini, pair_table, specialization_table, weighted_gini
from .network import (SensitivityModel, build_graph, edge_redistribution, evolution_frame, evolve,
                      metrics as network_metrics, write_graph)
from .outputs import csv_text, json_text, sha256
from .panel import emit_panel, ingest_panel
from .predictors import INCOME_GROUPS, ingest_predictors

log = logging.getLogger(__name__)
TREND_OUTPUT_METRICS = ("gini", "between_share_disease", "between_share_country")


@dataclass
class RunManifest:
    version: str
    backend: str
    config_hash: str
    seed: int
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    failed_stage: str | None = None
    note: str | None = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"


class _Context:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(__version__, kernels.BACKEND, cfg.digest(), cfg.seed)
        self.panel = self.predictors = self.components = self.pairs = None
        self.classification = self.scenarios = None

    def write(self, name: str, obj) -> None:
        text = csv_text(obj, self.cfg.seed) if isinstance(obj, pd.DataFrame) else json_text(obj, self.cfg.seed)
        path = self.out / name
        path.write_text(text, encoding="utf-8")
        self.manifest.outputs[name] = sha256(path)

    def warn(self, stage: str, msg: str) -> None:
        self.manifest.warnings.append(f"{stage}: {msg}")
        log.warning("%s: %s", stage, msg)


def _stage_ingest(ctx: _Context) -> None:
    cfg = ctx.cfg
    ctx.panel = ingest_panel(cfg.panel, cfg.schema or None, delimiter=cfg.delimiter,
                             relax_years=cfg.relax_years)
    ctx.manifest.inputs["panel"] = sha256(cfg.panel)
    rep = ctx.panel.report
    if rep is not None and (rep.n_duplicates or rep.n_daly_conflicts):
        ctx.warn("ingest", f"{rep.n_duplicates} duplicate keys merged, {rep.n_daly_conflicts} DALY conflicts")
    out = ctx.out / "panel.csv"
    out.write_text(f"# pbrkit {__version__} seed={cfg.seed}\n" + emit_panel(ctx.panel), encoding="utf-8")
    ctx.manifest.outputs["panel.csv"] = sha256(out)
    if cfg.predictors:
        ctx.predictors = ingest_predictors(cfg.predictors)
        ctx.manifest.inputs["predictors"] = sha256(cfg.predictors)
        if ctx.predictors.excluded:
            ctx.warn("ingest", f"predictors over 50% missing: {list(ctx.predictors.excluded)}")
    if cfg.components:
        ctx.components = pd.read_csv(cfg.components, comment="#")
        ctx.manifest.inputs["components"] = sha256(cfg.components)
    if cfg.blocks:
        ctx.manifest.inputs["blocks"] = sha256(cfg.blocks)


def _stage_metrics(ctx: _Context) -> None:
    cfg = ctx.cfg
    pairs = pair_table(ctx.panel, cfg.period)
    ctx.pairs = pairs
    ctx.write("pairs.csv", pairs)
    summary = {
        "n_pairs": len(pairs),
        "n_zero_participation": int((pairs.pbr == 0).sum()),
        "n_dropped": pairs.attrs.get("n_dropped", 0),
        "gini": gini(pairs.pbr.to_numpy()),
        "gini_participant_weighted": weighted_gini(pairs.pbr.to_numpy(), pairs.participants.to_numpy()),
        "total_participants": ctx.panel.total_participants,
        "total_dalys": ctx.panel.total_dalys,
        "period": list(cfg.period) if cfg.period else None,
    }
    ctx.write("metrics_summary.json", summary)
    ctx.write("lorenz.csv", lorenz_figure(pairs))
    ctx.write("specialization.csv", specialization_table(ctx.panel, cfg.period))
    for unit in ("disease", "country"):
        recs = cis_all(pairs, unit, n_bootstrap=cfg.cis_bootstrap, seed=cfg.seed)
        ctx.write(f"cis_{unit}.csv", pd.DataFrame([dataclasses.asdict(r) for r in recs]))
    if ctx.predictors is not None and ctx.predictors.income_group:
        rows = []
        for g in INCOME_GROUPS:
            try:
                rows.append(dataclasses.asdict(alignment_regression(ctx.panel, ctx.predictors, g, cfg.period)))
            except DataValidationError as exc:
                ctx.warn("metrics", f"alignment for {g} skipped: {exc}")
        if rows:
            ctx.write("alignment.csv", pd.DataFrame(rows))


def _theil_dict(d) -> dict:
    return {"total": d.total, "between": d.between, "within": d.within,
            "between_share": d.between_share, "within_share": d.within_share,
            "n_excluded": d.n_excluded,
            "groups": {str(k): dataclasses.asdict(v) for k, v in d.group_terms.items()}}


def _stage_decomposition(ctx: _Context) -> None:
    cfg = ctx.cfg
    ctx.write("theil.json", {g: _theil_dict(theil_decompose(ctx.pairs, g)) for g in ("disease", "country")})
    if "year" not in ctx.panel.dims:
        ctx.warn("decomposition", "panel has no year dimension; variance partition and trends skipped")
        return
    panel = ctx.panel if cfg.period is None else ctx.panel.select(period=cfg.period)
    vp = variance_partition(panel)
    ctx.write("variance_partition.json", {"sequential": vp.sequential.as_dict(),
                                          "marginal": vp.marginal.as_dict(),
                                          "r2_full": vp.r2_full, "discrepancy": vp.discrepancy,
                                          "n_dropped": vp.n_dropped})
    cells = BinnedCells(panel.frame(), cfg.bin_width, 2000)
    per_bin = {m: cells.metric(TREND_METRICS[m]) for m in TREND_METRICS}
    bins = sorted(next(iter(per_bin.values())))
    ctx.write("theil_bins.csv", pd.DataFrame({"bin": bins, **{m: [per_bin[m].get(b) for b in bins]
                                                             for m in TREND_METRICS}}))
    if len(bins) < 3:
        ctx.warn("decomposition", f"{len(bins)} time bins; trend estimation needs 3")
        return
    trends = {}
    for m, t in zip(TREND_OUTPUT_METRICS, metric_trends(panel, TREND_OUTPUT_METRICS, cfg.bin_width,
                                                         cfg.trend_bootstrap, cfg.seed)):
        trends[m] = {"slope": t.slope, "intercept": t.intercept, "r2": t.r2, "p_value": t.p_value,
                     "ci_low": t.ci_low, "ci_high": t.ci_high}
    ctx.write("trends.json", trends)


def _stage_attribution(ctx: _Context) -> None:
    cfg = ctx.cfg
    blocks = load_blocks(cfg.blocks) if cfg.blocks else {}
    for part in (1, 2):
        res = run_attribution(ctx.panel, ctx.predictors, part, blocks.get(f"part{part}"),
                              cfg.shapley_permutations, cfg.shapley_bootstrap,
                              cfg.shapley_bootstrap_permutations, cfg.seed, cfg.threads, cfg.period)
        sh = res.shapley
        payload = {
            "part": part,
            "n_countries": len(res.countries),
            "predictors": list(res.predictors),
            "excluded_missing": list(res.preprocess.excluded_missing),
            "excluded_constant": list(res.preprocess.excluded_constant),
            "hierarchical": [dict(dataclasses.asdict(s), n_variables=s.n_variables) for s in res.hierarchical],
            "r2_full": sh.r2_full,
            "block_totals": dict(sh.block_totals),
            "n_permutations": sh.n_permutations,
            "n_bootstrap": sh.n_bootstrap,
            "shapley": sh.frame().to_dict(orient="records"),
        }
        if res.residualization is not None:
            payload["residual_variance_fraction"] = res.residualization.residual_variance_fraction
        ctx.write(f"attribution_part{part}.json", payload)
        ctx.write(f"shapley_part{part}.csv", sh.frame())


def _stage_classification(ctx: _Context) -> None:
    cfg = ctx.cfg
    res = run_classification(ctx.panel, ctx.predictors, Thresholds(cfg.over_threshold, cfg.expected_threshold),
                             cfg.significance, cfg.multi_factor, ctx.components, cfg.period)
    ctx.classification = res
    for n in res.notes:
        ctx.warn("classification", n)
    ctx.write("classified.csv", res.frame())
    ctx.write("classification.json", {
        "counts": res.counts(),
        "diagnoses": {str(d): {"factor": f.diagnosis.factor, "winner": f.diagnosis.winner,
                               "multiple_factor_flag": f.diagnosis.multiple_factor_flag,
                               "scores": dict(f.diagnosis.scores), "n": f.fit.n, "r2": f.fit.r2}
                      for d, f in sorted(res.fits.items())},
        "skipped_diseases": {str(k): v for k, v in res.skipped_diseases.items()},
        "notes": res.notes,
    })


def _stage_simulation(ctx: _Context) -> None:
    cfg = ctx.cfg
    national = national_pbr(ctx.panel, cfg.period)
    ctx.write("national.csv", national_frame(national))
    n = len(national)
    results = {}
    for key, (_, steps) in SCENARIOS.items():
        if int(np.floor(n * min(steps))) == 0:
            ctx.warn("simulation", f"{key} scenario skipped: {n} countries too few for a {min(steps):g} step")
            continue
        results[key] = simulate(key, national, bootstrap_iters=cfg.simulation_bootstrap, seed=cfg.seed,
                                ranking=cfg.ranking)
        ctx.write(f"scenario_{key}.csv", results[key].frame())
    ctx.scenarios = results
    summary = {k: {"baseline_gini": r.baseline_gini, "median": r.median, "efficiency": r.efficiency,
                   "p_value": r.p_value, "monotone": r.monotone, "ranking": r.ranking}
               for k, r in results.items()}
    for k, r in results.items():
        if not r.monotone:
            ctx.warn("simulation", f"{k} scenario reduction is not monotone across steps")
    if len(results) == 2:
        e = efficiency(results["full"], results["targeted"])
        summary["efficiency_ratio"] = dataclasses.asdict(e)
    ctx.write("simulation.json", summary)


def _stage_network(ctx: _Context) -> None:
    cfg = ctx.cfg
    graph = build_graph(ctx.classification.pairs, cfg.min_weight, cfg.status_rule,
                        Thresholds(cfg.over_threshold, cfg.expected_threshold))
    edges, nodes = ctx.out / "graph_edges.csv", ctx.out / "graph_nodes.csv"
    write_graph(graph, edges, nodes, cfg.seed)
    ctx.manifest.outputs[edges.name] = sha256(edges)
    ctx.manifest.outputs[nodes.name] = sha256(nodes)
    base = network_metrics(graph, cfg.seed, cfg.louvain_starts)
    ctx.write("network_metrics.json", base.as_dict())
    if ctx.scenarios and "full" in ctx.scenarios:
        dg = [s.pct_reduction / 100.0 for s in ctx.scenarios["full"].steps[1:]]
    else:
        dg = list(FULL_STEPS)
    dg = [min(max(x, 0.0), 1.0) for x in dg]
    dg = [max(dg[: i + 1]) for i in range(len(dg))]  # cumulative reductions are ascending
    steps = evolve(base, SensitivityModel(), dg, cfg.noise_bootstrap, cfg.seed)
    ctx.write("network_evolution.csv", evolution_frame(steps))
    final_h = [s.value for s in steps if s.metric == "factor_homophily"][-1]
    if graph.n_edges:
        ctx.write("edge_redistribution.csv", edge_redistribution(graph, final_h))


_STAGES = {
    "ingest": _stage_ingest,
    "metrics": _stage_metrics,
    "decomposition": _stage_decomposition,
    "attribution": _stage_attribution,
    "classification": _stage_classification,
    "simulation": _stage_simulation,
    "network": _stage_network,
}


def _precondition(ctx: _Context, stage: str) -> str | None:
    if stage in ("attribution", "classification") and ctx.predictors is None:
        return "no predictor table configured"
    if stage == "network" and ctx.classification is None:
        return "classification did not run"
    return None


def run_pipeline(cfg: RunConfig) -> RunManifest:
    """Run the configured stages in order and write ``manifest.json``.

    A failing stage stops the run; the manifest still lists everything
    written before the failure and names the failed stage.
    """
    cfg.validate()
    ctx = _Context(cfg)
    requested = [s for s in STAGES if s in cfg.stages or s == "ingest"]
    error: PbrkitError | None = None
    for stage in requested:
        why = _precondition(ctx, stage)
        if why:
            ctx.manifest.stages[stage] = "skipped"
            ctx.warn(stage, f"skipped: {why}")
            continue
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                _STAGES[stage](ctx)
            except PbrkitError as exc:
                error = exc
            except FileNotFoundError as exc:
                error = ConfigError(str(exc))
        for w in caught:
            ctx.warn(stage, str(w.message))
        ctx.manifest.timings[stage] = round(time.perf_counter() - t0, 6)
        if error is not None:
            ctx.manifest.stages[stage] = "failed"
            ctx.manifest.failed_stage = stage
            ctx.manifest.note = f"partial results: stage {stage} failed ({error})"
            break
        ctx.manifest.stages[stage] = "ok"
    ctx.manifest.warnings = sorted(set(ctx.manifest.warnings), key=ctx.manifest.warnings.index)
    (ctx.out / "manifest.json").write_text(ctx.manifest.to_json(), encoding="utf-8")
    if error is not None:
        raise error
    return ctx.manifest

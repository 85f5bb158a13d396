"""``pbrkit`` command-line interface."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import pandas as pd

from . import __version__, kernels
from .config import ENV_CONFIG, load_config
from .errors import ConfigError, DataValidationError, NumericalError, PbrkitError
from .outputs import csv_text, header, json_text, read_csv, read_json

log = logging.getLogger("pbrkit")


# -- helpers -------------------------------------------------------------------

def _period(text: str | None):
    if not text:
        return None
    parts = text.replace(":", "-").split("-")
    if len(parts) != 2:
        raise ConfigError(f"period must look like 2000-2024, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"period must look like 2000-2024, got {text!r}") from None


def _floats(text: str | None, what: str):
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated list of numbers") from None


def _config(args):
    return load_config(getattr(args, "config", None), seed=getattr(args, "seed", None),
                       threads=getattr(args, "threads", None))


def _emit(args, obj, seed) -> None:
    text = csv_text(obj, seed) if isinstance(obj, pd.DataFrame) else json_text(obj, seed)
    out = getattr(args, "out", None)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_panel(args, cfg):
    from .panel import ingest_panel
    path = getattr(args, "panel", None) or cfg.panel
    if not path:
        raise ConfigError("no panel given (use --panel or a config file)")
    if not Path(path).is_file():
        raise ConfigError(f"panel file not found: {path}")
    return ingest_panel(path, cfg.schema or None, delimiter=cfg.delimiter,
                        relax_years=getattr(args, "relax_years", False) or cfg.relax_years)


def _load_predictors(args, cfg):
    from .predictors import ingest_predictors
    path = getattr(args, "predictors", None) or cfg.predictors
    if not path:
        raise ConfigError("no predictor table given (use --predictors or a config file)")
    if not Path(path).is_file():
        raise ConfigError(f"predictor file not found: {path}")
    return ingest_predictors(path)


def _seed(args, cfg) -> int:
    return args.seed if getattr(args, "seed", None) is not None else cfg.seed


# -- subcommands -----------------------------------------------------------------

def cmd_ingest(args) -> None:
    from .panel import emit_panel
    cfg = _config(args)
    panel = _load_panel(args, cfg)
    rep = panel.report
    if rep is not None:
        log.info("ingested %d rows: %d duplicates, %d DALY conflicts, %d rejected",
                 rep.n_rows, rep.n_duplicates, rep.n_daly_conflicts, len(rep.rejected))
    text = header(_seed(args, cfg)) + emit_panel(panel, delimiter="\t" if args.tab else ",")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_metrics(args) -> None:
    from . import metrics as m
    cfg = _config(args)
    seed = _seed(args, cfg)
    panel = _load_panel(args, cfg)
    period = _period(args.period) or cfg.period
    kind = args.kind
    if kind == "pbr":
        obj = m.pair_table(panel, period, by_year=args.by_year, variant=args.variant)
    elif kind == "si":
        obj = m.specialization_table(panel, period)
    elif kind == "gini":
        pairs = m.pair_table(panel, period)
        values = pairs.pbr.to_numpy()
        obj = {"gini": m.gini(values), "n_pairs": len(pairs)}
        if args.weighting == "participant_weighted":
            obj["gini_participant_weighted"] = m.weighted_gini(values, pairs.participants.to_numpy())
    elif kind == "lorenz":
        from .figures import lorenz_figure
        obj = lorenz_figure(m.pair_table(panel, period))
    elif kind == "cis":
        pairs = m.pair_table(panel, period)
        recs = m.cis_all(pairs, args.unit, args.weighting, args.bootstrap, seed)
        obj = pd.DataFrame([dataclasses.asdict(r) for r in recs])
    elif kind == "leave-out":
        pairs = m.pair_table(panel, period)
        r = m.leave_out_gini(pairs, args.unit, ranking=args.ranking, top_fraction=args.top_fraction)
        obj = dict(dataclasses.asdict(r), pct_change=r.pct_change)
    else:  # alignment
        table = _load_predictors(args, cfg)
        from .predictors import INCOME_GROUPS
        rows = []
        for g in ([args.group] if args.group else INCOME_GROUPS):
            try:
                rows.append(dataclasses.asdict(m.alignment_regression(panel, table, g, period)))
            except DataValidationError as exc:
                log.warning("alignment for %s skipped: %s", g, exc)
        obj = pd.DataFrame(rows)
    _emit(args, obj, seed)


def cmd_decompose(args) -> None:
    from . import decomposition as d
    from .metrics import pair_table
    cfg = _config(args)
    seed = _seed(args, cfg)
    panel = _load_panel(args, cfg)
    period = _period(args.period) or cfg.period
    if args.kind == "theil":
        if args.bins:
            from .panel import aggregate
            binned = aggregate(panel, ("country", "disease", "year"), bin_width=args.bins)
            pairs = pair_table(binned, period, by_year=True)
            rows = []
            for b, grp in pairs.groupby("year"):
                t = d.theil_decompose(grp, args.group)
                rows.append({"bin": int(b), "total": t.total, "between": t.between, "within": t.within,
                             "between_share": t.between_share, "within_share": t.within_share})
            obj = pd.DataFrame(rows)
        else:
            t = d.theil_decompose(pair_table(panel, period), args.group)
            obj = {"grouping": t.grouping, "total": t.total, "between": t.between, "within": t.within,
                   "between_share": t.between_share, "within_share": t.within_share,
                   "n_excluded": t.n_excluded}
    elif args.kind == "anova":
        r = d.variance_partition(panel, period)
        obj = {"sequential": r.sequential.as_dict(), "marginal": r.marginal.as_dict(),
               "r2_full": r.r2_full, "discrepancy": r.discrepancy, "n_dropped": r.n_dropped}
    else:
        sub = panel if period is None else panel.select(period=period)
        t = d.metric_trend(sub, args.metric, args.bins or cfg.bin_width, args.bootstrap, seed)
        obj = {"metric": args.metric, "slope": t.slope, "intercept": t.intercept, "r2": t.r2,
               "p_value": t.p_value, "ci_low": t.ci_low, "ci_high": t.ci_high,
               "points": t.points.to_dict(orient="records")}
    _emit(args, obj, seed)


def cmd_attribute(args) -> None:
    from .attribution import load_blocks, run_attribution
    cfg = _config(args)
    seed = _seed(args, cfg)
    panel = _load_panel(args, cfg)
    table = _load_predictors(args, cfg)
    blocks_file = args.blocks or cfg.blocks
    blocks = load_blocks(blocks_file).get(f"part{args.part}") if blocks_file else None
    n_boot = 0 if args.kind == "hierarchical" else args.bootstrap
    res = run_attribution(panel, table, args.part, blocks, args.permutations, n_boot,
                          args.bootstrap_permutations, seed, cfg.threads, _period(args.period) or cfg.period)
    if args.kind == "hierarchical":
        obj = {"part": args.part, "n_countries": len(res.countries),
               "steps": [dict(dataclasses.asdict(s), n_variables=s.n_variables) for s in res.hierarchical]}
    else:
        sh = res.shapley
        obj = {"part": args.part, "n_countries": len(res.countries), "r2_full": sh.r2_full,
               "n_permutations": sh.n_permutations, "n_bootstrap": sh.n_bootstrap,
               "block_totals": dict(sh.block_totals), "predictors": sh.frame().to_dict(orient="records")}
    if res.residualization is not None:
        obj["residual_variance_fraction"] = res.residualization.residual_variance_fraction
    _emit(args, obj, seed)


def cmd_classify(args) -> None:
    from .classify import Thresholds, run_classification
    cfg = _config(args)
    seed = _seed(args, cfg)
    panel = _load_panel(args, cfg)
    table = _load_predictors(args, cfg)
    over, expected = _floats(args.thresholds, "--thresholds") or [cfg.over_threshold, cfg.expected_threshold]
    comp_path = args.components or cfg.components
    comps = pd.read_csv(comp_path, comment="#") if comp_path else None
    res = run_classification(panel, table, Thresholds(over, expected),
                             args.sig if args.sig is not None else cfg.significance,
                             args.multi if args.multi is not None else cfg.multi_factor,
                             comps, _period(args.period) or cfg.period)
    for note in res.notes:
        log.info(note)
    _emit(args, res.frame(), seed)


def cmd_simulate(args) -> None:
    from .counterfactual import national_pbr, read_national, simulate
    from .figures import waterfall_figure
    cfg = _config(args)
    seed = _seed(args, cfg)
    if args.national:
        national = read_national(args.national)
    else:
        national = national_pbr(_load_panel(args, cfg), _period(args.period) or cfg.period)
    res = simulate(args.scenario, national, _floats(args.steps, "--steps"), args.bootstrap, seed, args.ranking)
    log.info("%s: baseline Gini %.6f, median %.6g, efficiency %.4f, p=%.3g",
             res.scenario, res.baseline_gini, res.median, res.efficiency, res.p_value)
    _emit(args, waterfall_figure(res.frame()), seed)


def cmd_network(args) -> None:
    from . import network as nw
    from .classify import Thresholds
    cfg = _config(args)
    seed = _seed(args, cfg)
    if args.kind == "build":
        pairs = read_csv(args.pairs)
        g = nw.build_graph(pairs, args.min_weight, args.status_rule,
                           Thresholds(cfg.over_threshold, cfg.expected_threshold))
        out = Path(args.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        nw.write_graph(g, out / "graph_edges.csv", out / "graph_nodes.csv", seed)
        log.info("graph: %d nodes, %d edges", g.n_nodes, g.n_edges)
        return
    if args.kind == "metrics":
        if args.edges and args.nodes:
            g = nw.read_graph(args.edges, args.nodes, args.min_weight)
        elif args.pairs:
            g = nw.build_graph(read_csv(args.pairs), args.min_weight, args.status_rule)
        else:
            raise ConfigError("network metrics needs --edges/--nodes or --pairs")
        _emit(args, nw.metrics(g, seed, args.louvain_starts).as_dict(), seed)
        return
    # evolve
    if not args.baseline:
        raise ConfigError("network evolve needs --baseline metrics JSON")
    base = read_json(args.baseline)
    dg = _floats(args.delta_g, "--delta-g") or [0.25, 0.5, 0.75, 1.0]
    steps = nw.evolve(base, nw.SensitivityModel(), dg, args.noise_bootstrap, seed)
    _emit(args, nw.evolution_frame(steps), seed)


def cmd_stats(args) -> None:
    from . import stats as st
    seed = args.seed if args.seed is not None else 0
    if args.kind == "cramers-v":
        table = pd.read_csv(args.table, index_col=0, comment="#").to_numpy(dtype=float)
        v = st.cramers_v(table, corrected=not args.uncorrected, pool_below=args.pool_below)
        chi2, df, p = st.chi_square(table)
        obj = {"cramers_v": v.value, "uncorrected": v.uncorrected, "band": v.band,
               "chi2": chi2, "df": df, "p_value": p}
    elif args.kind == "kruskal":
        data = read_csv(args.input)
        groups = [g[args.value].to_numpy() for _, g in data.groupby(args.group, sort=True)]
        h, p = st.kruskal_wallis(groups)
        obj = {"H": h, "p_value": p, "n_groups": len(groups)}
    else:
        a, b = _floats(args.a, "--a"), _floats(args.b, "--b")
        if a is None or b is None:
            raise ConfigError(f"stats {args.kind} needs --a and --b")
        if args.kind == "permutation":
            obj = {"p_value": st.permutation_test(a, b, n_perm=args.n_perm, seed=seed)}
        elif args.kind == "paired-t":
            obj = {"p_value": st.paired_t_test(a, b)}
        else:
            rho, p = st.spearman(a, b)
            obj = {"rho": rho, "p_value": p}
    _emit(args, obj, seed)


def cmd_run(args) -> None:
    from .demo import fixture_path
    from .pipeline import run_pipeline
    path = args.config or None
    if path is None and not os.environ.get(ENV_CONFIG):
        path = fixture_path(f"{args.fixture}_config.yaml")
        log.info("no config given; using bundled %s fixture", args.fixture)
    cfg = load_config(path, seed=args.seed, threads=args.threads, out=args.out)
    m = run_pipeline(cfg)
    log.info("wrote %d files to %s (%d warnings)", len(m.outputs), cfg.out, len(m.warnings))


def cmd_emit(args) -> None:
    from .figures import emit_figure_data
    df = emit_figure_data(args.results, args.figure, args.scenario, clamp=not args.no_clamp)
    seed = args.seed
    if seed is None:
        man = Path(args.results) / "manifest.json"
        if man.is_file():
            seed = json.loads(man.read_text()).get("seed")
    _emit(args, df, seed)


# -- parser ----------------------------------------------------------------------

def _globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help=f"YAML config (default: ${ENV_CONFIG})")
    p.add_argument("--seed", type=int, default=d, help="master seed for all randomized stages")
    p.add_argument("--out", default=d, help="output file (directory for run / network build)")
    p.add_argument("--threads", type=int, default=d, help="worker threads where supported")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pbrkit", description="Participation-to-burden inequality toolkit")
    parser.add_argument("--version", action="version", version=f"pbrkit {__version__} ({kernels.BACKEND})")
    _globals(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--panel", help="panel file (country, disease, year, participants, dalys)")
    data.add_argument("--period", help="year range, e.g. 2000-2024")
    data.add_argument("--relax-years", action="store_true", help="accept years outside 2000-2024")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common, data], help="validate and re-emit a panel")
    p.add_argument("panel_file", nargs="?", help="panel file (alternative to --panel)")
    p.add_argument("--tab", action="store_true", help="emit tab-separated")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("metrics", parents=[common, data], help="PBR, SI, Gini, Lorenz, CIS, leave-out, alignment")
    p.add_argument("kind", choices=["pbr", "si", "gini", "lorenz", "cis", "leave-out", "alignment"])
    p.add_argument("--weighting", choices=["equal", "participant_weighted"], default="equal")
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--unit", choices=["disease", "country"], default="disease")
    p.add_argument("--variant", choices=["global", "within_country"], default="global")
    p.add_argument("--by-year", action="store_true")
    p.add_argument("--ranking", choices=["cis", "participant_volume"], default="cis")
    p.add_argument("--top-fraction", type=float, default=0.2)
    p.add_argument("--predictors")
    p.add_argument("--group", help="income group for alignment (default: all)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("decompose", parents=[common, data], help="Theil, variance partition, trends")
    p.add_argument("kind", choices=["theil", "anova", "trend"])
    p.add_argument("--group", choices=["disease", "country"], default="disease")
    p.add_argument("--bins", type=int, help="year bin width")
    p.add_argument("--metric", default="between_share_disease")
    p.add_argument("--bootstrap", type=int, default=1000)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("attribute", parents=[common, data], help="hierarchical partition and Shapley R2")
    p.add_argument("kind", choices=["hierarchical", "shapley"])
    p.add_argument("--part", type=int, choices=[1, 2], default=1)
    p.add_argument("--permutations", type=int, default=100)
    p.add_argument("--bootstrap", type=int, default=100)
    p.add_argument("--bootstrap-permutations", type=int, default=50)
    p.add_argument("--predictors")
    p.add_argument("--blocks", help="YAML block definitions")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("classify", parents=[common, data], help="status classes and limiting factors")
    p.add_argument("--thresholds", help="over,expected (default 0.5,0.3)")
    p.add_argument("--sig", type=float)
    p.add_argument("--multi", type=float)
    p.add_argument("--predictors")
    p.add_argument("--components", help="CSV with authorship, burden, recruitment per pair")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", parents=[common, data], help="full / targeted alignment counterfactual")
    p.add_argument("--scenario", choices=["full", "targeted"], default="full")
    p.add_argument("--steps", help="comma-separated fractions")
    p.add_argument("--bootstrap", type=int, default=200)
    p.add_argument("--ranking", choices=["log", "abs", "participants"], default="log")
    p.add_argument("--national", help="precomputed national table (country, pbr)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("network", parents=[common], help="graph build, metrics, evolution")
    p.add_argument("kind", choices=["build", "metrics", "evolve"])
    p.add_argument("--pairs", help="classified pairs CSV")
    p.add_argument("--edges")
    p.add_argument("--nodes")
    p.add_argument("--min-weight", type=int, default=2)
    p.add_argument("--status-rule", choices=["modal", "mean_residual"], default="modal")
    p.add_argument("--louvain-starts", type=int, default=1)
    p.add_argument("--baseline", help="metrics JSON for evolve")
    p.add_argument("--delta-g", help="cumulative Gini-reduction fractions")
    p.add_argument("--noise-bootstrap", type=int, default=100)
    p.set_defaults(func=cmd_network)

    p = sub.add_parser("stats", parents=[common], help="ad-hoc statistical tests")
    p.add_argument("kind", choices=["permutation", "paired-t", "spearman", "kruskal", "cramers-v"])
    p.add_argument("--a", help="comma-separated sample")
    p.add_argument("--b", help="comma-separated sample")
    p.add_argument("--n-perm", type=int, default=10000)
    p.add_argument("--input", help="CSV for kruskal")
    p.add_argument("--group", default="group")
    p.add_argument("--value", default="value")
    p.add_argument("--table", help="contingency table CSV (first column = row labels)")
    p.add_argument("--uncorrected", action="store_true")
    p.add_argument("--pool-below", type=float)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("run", parents=[common], help="full pipeline")
    p.add_argument("--fixture", choices=["tiny", "demo"], default="tiny",
                   help="bundled input used when no config is given")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("emit", parents=[common], help="plot-ready figure tables from a results directory")
    p.add_argument("figure", choices=["lorenz", "waterfall", "choropleth", "cis_bars", "theil_timeline",
                                      "network_metrics"])
    p.add_argument("--results", default="results")
    p.add_argument("--scenario", choices=["full", "targeted"], default="full")
    p.add_argument("--no-clamp", action="store_true", help="do not clamp choropleth values to [-1.5, 1.5]")
    p.set_defaults(func=cmd_emit)
    return parser


EXIT_CODES = ((ConfigError, 2), (DataValidationError, 3), (NumericalError, 4))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "panel_file", None) and not args.panel:
        args.panel = args.panel_file
    try:
        args.func(args)
    except PbrkitError as exc:
        code = next((c for t, c in EXIT_CODES if isinstance(exc, t)), 1)
        print(f"pbrkit: error: {exc}", file=sys.stderr)
        return code
    except FileNotFoundError as exc:
        print(f"pbrkit: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

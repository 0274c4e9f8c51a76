"""Command-line front end: generate, analyze, recommend, materialize, bench.

Exit codes: 0 success, 1 error while processing inputs, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .bench import bench_workload, materialize, read_view_collection, write_view_collection
from .clustering import ClusterPolicy, cluster_queries
from .exceptions import AdvisorError, IntegrityError
from .reports import (
    RunManifest,
    analysis_text,
    analysis_xml,
    read_recommendation,
    recommendation_text,
    recommendation_xml,
    write_manifest,
)
from .selection import ViewSelector
from .synthetic import clustered_workload
from .workload import build_matrix, read_workload, write_workload
from .xcube_store import (
    DimensionSpec,
    GenerationSpec,
    generate_synthetic,
    load_schema,
    load_warehouse,
    write_warehouse,
)

log = logging.getLogger("xcube_advisor")

DEFAULT_SEED = 42


class UsageError(Exception):
    pass


def parse_dims(text: str) -> tuple[DimensionSpec, ...]:
    """``name:cardinality:bytes[:attr+attr...]`` entries separated by commas.

    ``bytes`` is the size of each attribute. Without an attribute list the
    dimension gets ``<name>_desc`` and ``<name>_class``.
    """
    dims = []
    for entry in filter(None, (e.strip() for e in text.split(","))):
        parts = entry.split(":")
        if len(parts) not in (3, 4):
            raise UsageError(f"bad dimension spec {entry!r}; expected name:card:bytes[:a+b]")
        name, card, size = parts[:3]
        try:
            card, size = int(card), int(size)
        except ValueError:
            raise UsageError(f"bad dimension spec {entry!r}: cardinality and bytes must be integers")
        attrs = parts[3].split("+") if len(parts) == 4 else [f"{name}_desc", f"{name}_class"]
        try:
            dims.append(DimensionSpec(name, tuple((a, size) for a in attrs), card))
        except AdvisorError as exc:
            raise UsageError(str(exc))
    if not dims:
        raise UsageError("--dims lists no dimensions")
    return tuple(dims)


def cmd_generate(args):
    dims = parse_dims(args.dims)
    if args.facts < 0:
        raise UsageError("--facts must be >= 0")
    try:
        spec = GenerationSpec(dims, args.facts, value_domain=args.value_domain)
    except AdvisorError as exc:
        raise UsageError(str(exc))
    print(f"seed: {args.seed}")
    w = generate_synthetic(spec, args.seed)
    out = Path(args.out)
    for path in write_warehouse(w, out):
        print(f"wrote {path}")
    inputs = {}
    if args.workload_out:
        queries = clustered_workload(w, args.queries, seed=args.seed)
        write_workload(queries, args.workload_out)
        inputs["workload"] = args.workload_out
        print(f"wrote {args.workload_out}")
    manifest = RunManifest("generate", inputs, args.seed,
                           {"dims": args.dims, "facts": args.facts,
                            "value_domain": args.value_domain})
    write_manifest(manifest, out / "run-manifest.xml")
    return 0


def _policy(args):
    try:
        return ClusterPolicy.parse(args.cluster_policy)
    except ValueError as exc:
        raise UsageError(str(exc))


def cmd_analyze(args):
    policy = _policy(args)
    schema = load_schema(args.schema)
    queries = read_workload(args.workload)
    if not queries:
        raise AdvisorError(f"{args.workload} contains no queries")
    matrix = build_matrix(queries, schema)
    clusters = cluster_queries(matrix, policy)
    print(analysis_text(matrix, clusters, policy))
    if args.report:
        manifest = RunManifest("analyze", {"workload": args.workload, "schema": args.schema},
                               None, {"cluster_policy": str(policy)})
        Path(args.report).write_text(analysis_xml(matrix, clusters, policy, manifest),
                                     encoding="utf-8")
    return 0


def _selector_from_args(args, schema):
    if args.objective in ("ratio", "hybrid") and args.budget is None:
        raise UsageError(f"--objective {args.objective} requires --budget")
    if args.objective == "hybrid" and args.alpha is None:
        raise UsageError("--objective hybrid requires --alpha")
    if args.alpha is not None and not 0 < args.alpha <= 1:
        raise UsageError("--alpha must lie in (0, 1]")
    if args.budget is not None and args.budget < 0:
        raise UsageError("--budget must be >= 0")
    if args.update_ratio < 0:
        raise UsageError("--update-ratio must be >= 0")
    return ViewSelector(schema, objective=args.objective, storage_budget=args.budget,
                        alpha=args.alpha, update_query_ratio=args.update_ratio,
                        estimator=args.estimator, cluster_policy=str(_policy(args)),
                        fact_count=args.facts)


def cmd_recommend(args):
    schema = load_schema(args.schema)
    selector = _selector_from_args(args, schema)
    queries = read_workload(args.workload)
    if not queries:
        raise AdvisorError(f"{args.workload} contains no queries")
    selector.fit(queries)
    print(recommendation_text(selector))
    if args.out:
        manifest = RunManifest(
            "recommend", {"workload": args.workload, "schema": args.schema}, None,
            {"objective": args.objective, "budget": args.budget, "alpha": args.alpha,
             "update_ratio": args.update_ratio, "estimator": args.estimator,
             "cluster_policy": selector.cluster_policy},
        )
        Path(args.out).write_text(recommendation_xml(selector, manifest), encoding="utf-8")
    return 0


def cmd_materialize(args):
    rec = read_recommendation(args.recommendation)
    w = load_warehouse(args.warehouse)
    if rec.fact_name != w.schema.fact_name:
        raise IntegrityError(
            f"recommendation targets fact {rec.fact_name!r}, warehouse holds {w.schema.fact_name!r}"
        )
    views = []
    for v in rec.selected:
        try:
            views.append(materialize(v, w))
        except AdvisorError as exc:
            raise IntegrityError(f"view {v.id!r} does not fit the warehouse: {exc}") from None
    paths = write_view_collection(views, args.out, w.schema)
    for mv in views:
        print(f"{mv.id}: {mv.exact_cell_count} rows")
    print(f"wrote {len(paths)} file(s) to {args.out}")
    return 0


def cmd_bench(args):
    views_dir = Path(args.views)
    if not views_dir.is_dir():
        raise UsageError(f"views directory {views_dir} does not exist")
    w = load_warehouse(args.warehouse)
    queries = read_workload(args.workload)
    views = read_view_collection(views_dir)
    report = bench_workload(queries, views, w, verify=not args.no_verify)
    print(report.to_text())
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    if not report.all_results_match:
        log.error("view results differ from base evaluation")
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xcube-advisor", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic XCube warehouse")
    g.add_argument("--dims", required=True, help="name:card:bytes[:attr+attr],...")
    g.add_argument("--facts", type=int, required=True)
    g.add_argument("--seed", type=int, default=DEFAULT_SEED)
    g.add_argument("--out", required=True)
    g.add_argument("--value-domain", type=int, default=5,
                   help="distinct values per attribute (default 5)")
    g.add_argument("--workload-out", help="also write a clustered workload for the sales schema")
    g.add_argument("--queries", type=int, default=10)
    g.set_defaults(func=cmd_generate)

    def policy_flag(sp):
        sp.add_argument("--cluster-policy", default="sim-dominates",
                        help="sim-dominates or threshold:N")

    a = sub.add_parser("analyze", help="query-attribute matrix and clusters")
    a.add_argument("--workload", required=True)
    a.add_argument("--schema", required=True)
    a.add_argument("--report", help="write the XML report here")
    policy_flag(a)
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("recommend", help="select views to materialize")
    r.add_argument("--workload", required=True)
    r.add_argument("--schema", required=True)
    r.add_argument("--objective", choices=("profit", "ratio", "hybrid"), default="profit")
    r.add_argument("--budget", type=float, help="storage budget in bytes")
    r.add_argument("--alpha", type=float)
    r.add_argument("--update-ratio", type=float, default=0.0)
    r.add_argument("--estimator", choices=("cardenas", "yao"), default="cardenas")
    r.add_argument("--facts", type=int, help="override the fact count from Schema.xml")
    r.add_argument("--out", help="write the XML recommendation here")
    policy_flag(r)
    r.set_defaults(func=cmd_recommend)

    m = sub.add_parser("materialize", help="build the recommended views")
    m.add_argument("--recommendation", required=True)
    m.add_argument("--warehouse", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_materialize)

    b = sub.add_parser("bench", help="workload cost with and without views")
    b.add_argument("--workload", required=True)
    b.add_argument("--warehouse", required=True)
    b.add_argument("--views", required=True)
    b.add_argument("--csv", help="per-query costs as CSV")
    b.add_argument("--no-verify", action="store_true",
                   help="skip comparing view results with base results")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (AdvisorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

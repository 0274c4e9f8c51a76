"""Materialize views, evaluate queries on base facts or views, and compare
the logical cost of a workload with and without the selected views.

A materialized view keeps one row per distinct combination of members of
its dimensions. Each row carries the view's attribute values for those
members and the stored aggregates, so a query answerable by the view
applies its own equality predicates and grouping at evaluation time.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

from .clustering import CandidateView, answerable
from .exceptions import IntegrityError, NotAnswerableError, SchemaValidationError, XMLParseError
from .selection import SelectionResult
from .workload import Aggregation, DecisionQuery, canonical
from .xcube_store import format_number, parse_number

__all__ = [
    "ViewRow", "MaterializedView", "ResultRow", "BenchRow", "BenchReport",
    "answerable", "materialize", "materialize_selection", "evaluate", "bench_workload",
    "write_view_collection", "read_view_collection", "serialize_view", "MANIFEST_FILE",
]

MANIFEST_FILE = "views-manifest.xml"


@dataclass(frozen=True)
class ViewRow:
    members: Mapping[str, str]
    values: Mapping[str, str]
    aggregates: Mapping[Aggregation, object]


@dataclass(frozen=True)
class MaterializedView:
    definition: CandidateView
    rows: tuple[ViewRow, ...]

    @property
    def exact_cell_count(self) -> int:
        return len(self.rows)

    @property
    def id(self) -> str:
        return self.definition.id


class ResultRow(NamedTuple):
    key: tuple
    values: tuple


def _attribute_columns(view: CandidateView, schema):
    """(canonical attribute, owning dimension, schema spelling) per attribute."""
    cols = []
    for attr in sorted(view.attributes):
        owner = schema.owner_of(attr)
        spelled = next(a for a in schema.dimension(owner).attribute_names
                       if canonical(a) == attr)
        cols.append((attr, owner, spelled))
    return cols


def _view_dimensions(view: CandidateView, schema, cols):
    dims = sorted({schema.dimension(d).name for d in view.dimensions})
    owners = sorted({owner for _, owner, _ in cols})
    if owners != dims:
        raise SchemaValidationError(
            f"view {view.id!r}: dimensions {dims} do not match attribute owners {owners}"
        )
    return dims


def _measure_name(schema, measure):
    return schema.measure(measure).name


def _fold_in(op, acc, value):
    if op == "sum":
        return value if acc is None else acc + value
    if op == "count":
        return (acc or 0) + 1
    if op == "min":
        return value if acc is None or value < acc else acc
    if op == "max":
        return value if acc is None or value > acc else acc
    raise ValueError(f"cannot store aggregate {op!r}")


def materialize(v: CandidateView, w) -> MaterializedView:
    schema = w.schema
    cols = _attribute_columns(v, schema)
    dims = _view_dimensions(v, schema, cols)
    measures = sorted(v.measures)
    spelled = {m: _measure_name(schema, m) for _, m in measures}
    groups: dict[tuple, dict] = {}
    for f in w.facts:
        key = tuple(f.dimension_refs[d] for d in dims)
        acc = groups.get(key)
        if acc is None:
            acc = groups[key] = dict.fromkeys(measures)
        for agg in measures:
            acc[agg] = _fold_in(agg.op, acc[agg], f.measure_values[spelled[agg.measure]])
    index = w.member_index
    rows = []
    for key in sorted(groups):
        members = dict(zip(dims, key))
        values = {attr: index[(owner, members[owner])].attribute_values[name]
                  for attr, owner, name in cols}
        rows.append(ViewRow(members, values, groups[key]))
    return MaterializedView(v, tuple(rows))


def materialize_selection(selection: SelectionResult, w) -> list[MaterializedView]:
    return [materialize(v, w) for v in selection.views]


class _Accumulator:
    def __init__(self, aggregations):
        self.aggregations = aggregations
        self.state = [None] * len(aggregations)

    def add_fact(self, measure_values):
        for k, (op, m) in enumerate(self.aggregations):
            value = measure_values[m]
            if op == "avg":
                s, c = self.state[k] or (0, 0)
                self.state[k] = (s + value, c + 1)
            else:
                self.state[k] = _fold_in(op, self.state[k], value)

    def add_row(self, aggregates):
        for k, (op, m) in enumerate(self.aggregations):
            cur = self.state[k]
            if op == "avg":
                s, c = cur or (0, 0)
                self.state[k] = (s + aggregates[Aggregation("sum", m)],
                                 c + aggregates[Aggregation("count", m)])
            elif op in ("sum", "count"):
                part = aggregates[Aggregation(op, m)]
                self.state[k] = part if cur is None else cur + part
            else:
                self.state[k] = _fold_in(op, cur, aggregates[Aggregation(op, m)])

    def result(self):
        out = []
        for (op, _), st in zip(self.aggregations, self.state):
            if op == "avg":
                s, c = st
                out.append(Decimal(s) / Decimal(c))
            else:
                out.append(st)
        return tuple(out)


def _evaluate_base(q: DecisionQuery, w):
    schema = w.schema
    index = w.member_index
    preds = []
    for p in q.predicates:
        dim = schema.dimension(p.dimension).name
        name = next((a for a in schema.dimension(dim).attribute_names
                     if canonical(a) == canonical(p.attribute)), None)
        if name is None:
            raise SchemaValidationError(f"dimension {dim!r} has no attribute {p.attribute!r}")
        preds.append((dim, name, p.value))
    groups = []
    for attr in q.group_by:
        owner = schema.owner_of(attr)
        name = next(a for a in schema.dimension(owner).attribute_names
                    if canonical(a) == canonical(attr))
        groups.append((owner, name))
    aggs = [(op, _measure_name(schema, m)) for op, m in q.aggregations]
    out: dict[tuple, _Accumulator] = {}
    for f in w.facts:
        refs = f.dimension_refs
        if any(index[(d, refs[d])].attribute_values[a] != val for d, a, val in preds):
            continue
        key = tuple(index[(d, refs[d])].attribute_values[a] for d, a in groups)
        acc = out.get(key)
        if acc is None:
            acc = out[key] = _Accumulator(aggs)
        acc.add_fact(f.measure_values)
    return out, len(w.facts)


def _evaluate_view(q: DecisionQuery, mv: MaterializedView):
    if not answerable(q, mv.definition):
        raise NotAnswerableError(f"query {q.id!r} cannot be answered by view {mv.id!r}")
    preds = [(canonical(p.attribute), p.value) for p in q.predicates]
    groups = [canonical(a) for a in q.group_by]
    aggs = list(q.aggregations)
    out: dict[tuple, _Accumulator] = {}
    for row in mv.rows:
        if any(row.values[a] != val for a, val in preds):
            continue
        key = tuple(row.values[a] for a in groups)
        acc = out.get(key)
        if acc is None:
            acc = out[key] = _Accumulator(aggs)
        acc.add_row(row.aggregates)
    return out, len(mv.rows)


def evaluate(q: DecisionQuery, source) -> tuple[list[ResultRow], int]:
    """Run ``q`` on a Warehouse or a MaterializedView.

    Returns the result rows sorted by group key, and the number of cells
    scanned (all facts, or all view rows).
    """
    if isinstance(source, MaterializedView):
        groups, scanned = _evaluate_view(q, source)
    else:
        groups, scanned = _evaluate_base(q, source)
    rows = [ResultRow(key, acc.result()) for key, acc in groups.items()]
    rows.sort(key=lambda r: r.key)
    return rows, scanned


class BenchRow(NamedTuple):
    query_id: str
    base_cost: int
    view_cost: int
    view_id: str | None
    results_match: bool | None


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]

    @property
    def base_total(self) -> int:
        return sum(r.base_cost for r in self.rows)

    @property
    def view_total(self) -> int:
        return sum(r.view_cost for r in self.rows)

    @property
    def speedup(self) -> float:
        if self.view_total == 0:
            return 1.0
        return self.base_total / self.view_total

    @property
    def all_results_match(self) -> bool:
        return all(r.results_match is not False for r in self.rows)

    def to_text(self) -> str:
        width = max([len(r.query_id) for r in self.rows] + [5])
        lines = [f"{'query'.ljust(width)}  {'base':>10}  {'with views':>10}  view    match"]
        for r in self.rows:
            match = "-" if r.results_match is None else ("yes" if r.results_match else "NO")
            lines.append(f"{r.query_id.ljust(width)}  {r.base_cost:>10}  {r.view_cost:>10}  "
                         f"{(r.view_id or 'base'):<6}  {match}")
        lines.append(f"{'total'.ljust(width)}  {self.base_total:>10}  {self.view_total:>10}")
        lines.append(f"speedup: {self.speedup:.2f}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["query,base_cost,view_cost,view"]
        lines += [f"{r.query_id},{r.base_cost},{r.view_cost},{r.view_id or ''}"
                  for r in self.rows]
        return "\n".join(lines) + "\n"


def bench_workload(Q: Sequence[DecisionQuery], views, w, verify: bool = True) -> BenchReport:
    """Cost of each query on the facts vs. on its cheapest answering view.

    ``views`` is a SelectionResult (materialized on the fly) or a sequence of
    MaterializedView. With ``verify`` the view result is checked against
    the base result.
    """
    if isinstance(views, SelectionResult):
        views = materialize_selection(views, w)
    views = sorted(views, key=lambda mv: (mv.exact_cell_count, mv.id))
    base_cost = len(w.facts)
    rows = []
    for q in Q:
        mv = next((m for m in views if answerable(q, m.definition)), None)
        if mv is None or mv.exact_cell_count >= base_cost:
            rows.append(BenchRow(q.id, base_cost, base_cost, None, None))
            continue
        match = None
        if verify:
            match = evaluate(q, w)[0] == evaluate(q, mv)[0]
        rows.append(BenchRow(q.id, base_cost, mv.exact_cell_count, mv.id, match))
    return BenchReport(tuple(rows))


# -- view collection on disk ----------------------------------------------

def _indent(root) -> str:
    ET.indent(root, space="  ")
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def view_definition_element(parent, v: CandidateView, tag="view", **extra):
    el = ET.SubElement(parent, tag, id=v.id, **{k: str(x) for k, x in extra.items()})
    if v.source_cluster is not None:
        el.set("cluster", str(v.source_cluster))
    for a in sorted(v.attributes):
        ET.SubElement(el, "attribute", name=a)
    for d in sorted(v.dimensions):
        ET.SubElement(el, "dimension", name=d)
    for op, m in sorted(v.measures):
        ET.SubElement(el, "measure", op=op, name=m)
    return el


def parse_view_definition(el) -> CandidateView:
    try:
        cluster = el.get("cluster")
        return CandidateView(
            el.get("id"),
            frozenset(a.get("name") for a in el.findall("attribute")),
            frozenset(d.get("name") for d in el.findall("dimension")),
            frozenset(Aggregation(m.get("op"), m.get("name")) for m in el.findall("measure")),
            int(cluster) if cluster is not None else None,
        )
    except (TypeError, ValueError) as exc:
        raise IntegrityError(f"invalid view definition: {exc}") from None


def write_view_collection(views: Sequence[MaterializedView], directory, schema) -> list[Path]:
    """Write ``<view id>.xml`` per view plus the manifest; returns all paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = ET.Element("views")
    paths = []
    for mv in views:
        path = directory / f"{mv.id}.xml"
        path.write_text(serialize_view(mv, schema), encoding="utf-8")
        paths.append(path)
        view_definition_element(manifest, mv.definition, file=path.name,
                                rows=mv.exact_cell_count)
    mpath = directory / MANIFEST_FILE
    mpath.write_text(_indent(manifest), encoding="utf-8")
    return [mpath] + paths


def serialize_view(mv: MaterializedView, schema) -> str:
    """Facts.xml-shaped document; attributes sit under their dimension."""
    owners = {a: owner for a, owner, _ in _attribute_columns(mv.definition, schema)}
    root = ET.Element("CubeFacts", view=mv.id)
    cube = ET.SubElement(root, "cube")
    for row in mv.rows:
        cell = ET.SubElement(cube, "Cell")
        for dim in sorted(row.members):
            de = ET.SubElement(cell, "dimension", id=dim, node=row.members[dim])
            for attr in sorted(a for a in row.values if owners[a] == dim):
                ET.SubElement(de, "attribute", name=attr, value=row.values[attr])
        for agg in sorted(row.aggregates):
            ET.SubElement(cell, agg.measure, op=agg.op).text = format_number(row.aggregates[agg])
    return _indent(root)


def _parse_file(path, root_tag):
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise XMLParseError(f"malformed XML in {path}", *exc.position) from None
    if root.tag != root_tag:
        raise IntegrityError(f"{path}: expected <{root_tag}>, found <{root.tag}>")
    return root


def read_view_collection(directory) -> list[MaterializedView]:
    directory = Path(directory)
    manifest = _parse_file(directory / MANIFEST_FILE, "views")
    views = []
    for el in manifest.findall("view"):
        definition = parse_view_definition(el)
        root = _parse_file(directory / el.get("file", f"{definition.id}.xml"), "CubeFacts")
        rows = []
        for cell in root.iter("Cell"):
            members, values, aggs = {}, {}, {}
            for child in cell:
                if child.tag == "dimension":
                    members[child.get("id")] = child.get("node")
                    for a in child.findall("attribute"):
                        values[a.get("name")] = a.get("value")
                else:
                    try:
                        aggs[Aggregation(child.get("op"), child.tag)] = parse_number(child.text)
                    except ValueError as exc:
                        raise IntegrityError(f"view {definition.id!r}: {exc}") from None
            if set(values) != definition.attributes or set(aggs) != definition.measures:
                raise IntegrityError(f"view {definition.id!r}: row does not match its definition")
            rows.append(ViewRow(members, values, aggs))
        declared = int(el.get("rows", len(rows)))
        if declared != len(rows):
            raise IntegrityError(
                f"view {definition.id!r}: manifest lists {declared} rows, file has {len(rows)}"
            )
        views.append(MaterializedView(definition, tuple(rows)))
    return views

"""XML and plain-text reports written by the command-line tools."""
from __future__ import annotations

import datetime as _dt
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .bench import parse_view_definition, view_definition_element
from .exceptions import IntegrityError, XMLParseError


@dataclass
class RunManifest:
    """Provenance stamped into every machine-readable output."""

    command: str
    inputs: dict = field(default_factory=dict)
    seed: int | None = None
    config: dict = field(default_factory=dict)
    tool_version: str = __version__
    created: str = field(
        default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    )

    def to_element(self, parent=None):
        attrs = {"command": self.command, "tool": "xcube-advisor",
                 "version": self.tool_version, "created": self.created}
        if self.seed is not None:
            attrs["seed"] = str(self.seed)
        el = ET.Element("manifest", attrs) if parent is None else ET.SubElement(
            parent, "manifest", attrs)
        for name, path in self.inputs.items():
            ET.SubElement(el, "input", name=name, path=str(path))
        if self.config:
            ET.SubElement(el, "config", {k: _fmt(v) for k, v in self.config.items()
                                         if v is not None})
        return el


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_xml(root) -> str:
    ET.indent(root, space="  ")
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def write_manifest(manifest: RunManifest, path) -> None:
    Path(path).write_text(to_xml(manifest.to_element()), encoding="utf-8")


def analysis_xml(matrix, clusters, policy, manifest: RunManifest | None = None) -> str:
    root = ET.Element("analysis")
    if manifest is not None:
        manifest.to_element(root)
    m = ET.SubElement(root, "matrix", queries=str(len(matrix.queries)),
                      attributes=str(len(matrix.attributes)))
    for a in matrix.attributes:
        ET.SubElement(m, "attribute", name=a)
    for qid, row in zip(matrix.queries, matrix.cells):
        ET.SubElement(m, "row", query=qid).text = " ".join(str(int(x)) for x in row)
    cs = ET.SubElement(root, "clusters", policy=str(policy))
    for c in clusters:
        ce = ET.SubElement(cs, "cluster", id=str(c.id))
        for qid in c.query_ids:
            ET.SubElement(ce, "query", id=qid)
    return to_xml(root)


def analysis_text(matrix, clusters, policy) -> str:
    lines = ["Query-attribute matrix", matrix.to_text(), "",
             f"Clusters ({policy}): {len(clusters)}"]
    for c in clusters:
        lines.append(f"  cluster {c.id}: {', '.join(c.query_ids)}")
    return "\n".join(lines)


def recommendation_xml(selector, manifest: RunManifest | None = None) -> str:
    """Serialize a fitted ViewSelector: candidates, selection and trace."""
    sel = selector.selection_
    params = selector.cost_params_
    root = ET.Element("recommendation")
    if manifest is not None:
        manifest.to_element(root)
    ET.SubElement(root, "warehouse", fact=selector.schema.fact_name,
                  facts=str(params.fact_count))
    cands = ET.SubElement(root, "candidates", estimator=selector.estimator)
    for v in selector.candidates_:
        view_definition_element(cands, v, cells=repr(float(selector.estimates_[v.id])),
                                bytes=repr(float(selector.sizes_[v.id])))
    se = ET.SubElement(root, "selection", objective=selector.config_.objective,
                       baseline=repr(sel.baseline_cost), final=repr(sel.final_workload_cost))
    if selector.config_.storage_budget is not None:
        se.set("budget", repr(float(selector.config_.storage_budget)))
    for step in sel.selected:
        st = ET.SubElement(se, "step", view=step.view_id, objective=repr(float(step.objective)))
        if step.remaining_budget is not None:
            st.set("remaining", repr(float(step.remaining_budget)))
    tr = ET.SubElement(root, "trace")
    for k, values in enumerate(sel.trace, start=1):
        it = ET.SubElement(tr, "iteration", n=str(k))
        for vid, val in values.items():
            ET.SubElement(it, "candidate", view=vid, objective=repr(float(val)))
    return to_xml(root)


def recommendation_text(selector) -> str:
    sel = selector.selection_
    lines = [f"Candidates ({selector.estimator} estimate):",
             f"  {'view':<6} {'cells':>12} {'bytes':>14}  attributes"]
    for v in selector.candidates_:
        lines.append(f"  {v.id:<6} {selector.estimates_[v.id]:>12.1f} "
                     f"{selector.sizes_[v.id]:>14.1f}  {', '.join(sorted(v.attributes))}")
    lines.append(f"Selection ({selector.config_.objective}):")
    if not sel.selected:
        lines.append("  (no view selected)")
    for k, step in enumerate(sel.selected, start=1):
        extra = "" if step.remaining_budget is None else f"  remaining={step.remaining_budget:.1f}"
        lines.append(f"  {k}. {step.view_id}  objective={step.objective:.4f}{extra}")
    lines.append(f"Estimated workload cost: {sel.baseline_cost:.1f} -> {sel.final_workload_cost:.1f}")
    return "\n".join(lines)


@dataclass(frozen=True)
class Recommendation:
    fact_name: str
    fact_count: int
    selected: tuple


def read_recommendation(path) -> Recommendation:
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise XMLParseError(f"malformed recommendation {path}", *exc.position) from None
    if root.tag != "recommendation":
        raise IntegrityError(f"{path} is not a recommendation document")
    wh = root.find("warehouse")
    cands = {el.get("id"): parse_view_definition(el)
             for el in root.iterfind("candidates/view")}
    selected = []
    for step in root.iterfind("selection/step"):
        vid = step.get("view")
        if vid not in cands:
            raise IntegrityError(f"selected view {vid!r} has no candidate definition")
        selected.append(cands[vid])
    return Recommendation(wh.get("fact"), int(wh.get("facts")), tuple(selected))

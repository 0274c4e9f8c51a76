"""In-memory XCube warehouse: schema, dimension members and fact cells.

The three documents follow these grammars (whitespace is insignificant)::

    Schema.xml      Schema > fact[@name][@count?]
                    Schema > dimension[@name][@cardinality] > attribute[@name][@size]
                    Schema > measure[@name]
    Dimensions.xml  dimensionData > classification > Level[@node] > node[@id]
                        > attribute[@name][@value]*
    Facts.xml       CubeFacts > cube > Cell > (dimension[@id][@node]*, <measure>*)
"""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import IntegrityError, SchemaValidationError, XMLParseError

SCHEMA_FILE = "Schema.xml"
DIMENSIONS_FILE = "Dimensions.xml"
FACTS_FILE = "Facts.xml"

_XML_DECL = '<?xml version="1.0" encoding="UTF-8"?>\n'
_INT_RE = re.compile(r"[+-]?\d+\Z")


def _fold(name: str) -> str:
    return name.casefold()


@dataclass(frozen=True)
class DimensionSpec:
    name: str
    attributes: tuple[tuple[str, int], ...]
    cardinality: int

    def __post_init__(self):
        object.__setattr__(
            self, "attributes", tuple((str(a), int(s)) for a, s in self.attributes)
        )
        if not self.name:
            raise SchemaValidationError("dimension name must be non-empty")
        if self.cardinality < 1:
            raise SchemaValidationError(
                f"dimension {self.name!r}: cardinality must be >= 1"
            )
        if not self.attributes:
            raise SchemaValidationError(
                f"dimension {self.name!r} declares no attributes"
            )
        seen = set()
        for attr, size in self.attributes:
            if not attr:
                raise SchemaValidationError(f"dimension {self.name!r}: empty attribute name")
            if _fold(attr) in seen:
                raise SchemaValidationError(
                    f"dimension {self.name!r}: duplicate attribute {attr!r}"
                )
            seen.add(_fold(attr))
            if size < 1:
                raise SchemaValidationError(
                    f"attribute {self.name}.{attr}: byte size must be >= 1"
                )

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.attributes)

    @property
    def byte_size(self) -> int:
        """Bytes needed to store one member (sum over its attributes)."""
        return sum(s for _, s in self.attributes)


@dataclass(frozen=True)
class MeasureSpec:
    name: str
    value_kind: str = "numeric"

    def __post_init__(self):
        if not self.name:
            raise SchemaValidationError("measure name must be non-empty")


@dataclass(frozen=True)
class WarehouseSchema:
    fact_name: str
    dimensions: tuple[DimensionSpec, ...]
    measures: tuple[MeasureSpec, ...]
    fact_count: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        object.__setattr__(self, "measures", tuple(self.measures))
        for kind, names in (
            ("dimension", [d.name for d in self.dimensions]),
            ("measure", [m.name for m in self.measures]),
        ):
            folded = [_fold(n) for n in names]
            if len(set(folded)) != len(folded):
                raise SchemaValidationError(f"duplicate {kind} names in {names}")
        if self.fact_count is not None and self.fact_count < 0:
            raise SchemaValidationError("fact count must be >= 0")

    @cached_property
    def _dims_by_name(self) -> dict[str, DimensionSpec]:
        return {_fold(d.name): d for d in self.dimensions}

    @cached_property
    def _owners(self) -> dict[str, list[str]]:
        owners: dict[str, list[str]] = {}
        for d in self.dimensions:
            for a in d.attribute_names:
                owners.setdefault(_fold(a), []).append(d.name)
        return owners

    @property
    def dimension_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dimensions)

    @property
    def measure_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.measures)

    def dimension(self, name: str) -> DimensionSpec:
        try:
            return self._dims_by_name[_fold(name)]
        except KeyError:
            raise SchemaValidationError(f"unknown dimension {name!r}") from None

    def has_dimension(self, name: str) -> bool:
        return _fold(name) in self._dims_by_name

    def measure(self, name: str) -> MeasureSpec:
        for m in self.measures:
            if _fold(m.name) == _fold(name):
                return m
        raise SchemaValidationError(f"unknown measure {name!r}")

    def owner_of(self, attribute: str) -> str:
        """Name of the single dimension declaring ``attribute``."""
        owners = self._owners.get(_fold(attribute))
        if not owners:
            raise SchemaValidationError(f"attribute {attribute!r} not found in schema")
        if len(owners) > 1:
            raise SchemaValidationError(
                f"attribute {attribute!r} is ambiguous: declared by {owners}"
            )
        return owners[0]

    def ambiguous_attributes(self) -> list[str]:
        return sorted(a for a, owners in self._owners.items() if len(owners) > 1)


@dataclass(frozen=True)
class DimensionMember:
    dimension: str
    member_id: str
    attribute_values: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class FactCell:
    dimension_refs: Mapping[str, str]
    measure_values: Mapping[str, object]


@dataclass(frozen=True)
class Warehouse:
    schema: WarehouseSchema
    members: tuple[DimensionMember, ...]
    facts: tuple[FactCell, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "facts", tuple(self.facts))
        self.validate()

    def validate(self):
        schema = self.schema
        counts = {d.name: 0 for d in schema.dimensions}
        for m in self.members:
            spec = schema.dimension(m.dimension)
            if m.dimension != spec.name:
                raise IntegrityError(
                    f"member {m.member_id!r}: dimension {m.dimension!r} "
                    f"must be spelled {spec.name!r}"
                )
            if set(m.attribute_values) != set(spec.attribute_names):
                raise IntegrityError(
                    f"member {spec.name}/{m.member_id}: attributes "
                    f"{sorted(m.attribute_values)} != declared {sorted(spec.attribute_names)}"
                )
            counts[spec.name] += 1
        if len(self.member_index) != len(self.members):
            raise IntegrityError("duplicate member ids within a dimension")
        for d in schema.dimensions:
            if counts[d.name] != d.cardinality:
                raise IntegrityError(
                    f"dimension {d.name!r} declares cardinality {d.cardinality} "
                    f"but has {counts[d.name]} members"
                )
        if schema.fact_count is not None and schema.fact_count != len(self.facts):
            raise IntegrityError(
                f"schema declares {schema.fact_count} facts, found {len(self.facts)}"
            )
        _check_facts(self.facts, schema, self.member_index)

    @cached_property
    def member_index(self) -> dict[tuple[str, str], DimensionMember]:
        return {(m.dimension, m.member_id): m for m in self.members}

    def members_of(self, dimension: str) -> list[DimensionMember]:
        name = self.schema.dimension(dimension).name
        return [m for m in self.members if m.dimension == name]


def _check_facts(facts, schema, member_index=None):
    dims = set(schema.dimension_names)
    measures = set(schema.measure_names)
    for i, cell in enumerate(facts):
        if set(cell.dimension_refs) != dims:
            missing = sorted(dims - set(cell.dimension_refs))
            extra = sorted(set(cell.dimension_refs) - dims)
            raise IntegrityError(
                f"Cell {i}: dimension references mismatch (missing {missing}, unknown {extra})"
            )
        if set(cell.measure_values) != measures:
            raise IntegrityError(
                f"Cell {i}: measures {sorted(cell.measure_values)} != schema {sorted(measures)}"
            )
        if member_index is not None:
            for dim, mid in cell.dimension_refs.items():
                if (dim, mid) not in member_index:
                    raise IntegrityError(
                        f"Cell {i}: dimension {dim!r} references unknown member {mid!r}"
                    )


# -- parsing ---------------------------------------------------------------

def _parse_root(xml_text, expected_tag):
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, column = exc.position
        reason = str(exc).rsplit(": line", 1)[0]
        raise XMLParseError(f"malformed XML: {reason}", line, column) from None
    if root.tag != expected_tag:
        raise SchemaValidationError(
            f"expected root element <{expected_tag}>, found <{root.tag}>"
        )
    return root


def _required(elem, attr):
    value = elem.get(attr)
    if value is None:
        raise SchemaValidationError(f"<{elem.tag}> is missing required attribute {attr!r}")
    return value


def _positive_int(elem, attr):
    raw = _required(elem, attr)
    try:
        value = int(raw)
    except ValueError:
        raise SchemaValidationError(
            f"<{elem.tag}> attribute {attr!r} must be an integer, got {raw!r}"
        ) from None
    return value


def parse_number(text: str):
    """Integers stay ``int``; anything else becomes an exact ``Decimal``."""
    text = (text or "").strip()
    if _INT_RE.match(text):
        return int(text)
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise ValueError(f"not a number: {text!r}") from None
    if not value.is_finite():
        raise ValueError(f"not a finite number: {text!r}")
    return value


def format_number(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_schema(xml_text: str) -> WarehouseSchema:
    root = _parse_root(xml_text, "Schema")
    fact = root.find("fact")
    if fact is None:
        raise SchemaValidationError("Schema.xml has no <fact> element")
    fact_count = None
    if fact.get("count") is not None:
        fact_count = _positive_int(fact, "count")
    dimensions = []
    for d in root.findall("dimension"):
        attrs = tuple(
            (_required(a, "name"), _positive_int(a, "size")) for a in d.findall("attribute")
        )
        dimensions.append(
            DimensionSpec(_required(d, "name"), attrs, _positive_int(d, "cardinality"))
        )
    measures = [MeasureSpec(_required(m, "name")) for m in root.findall("measure")]
    if not dimensions:
        raise SchemaValidationError("Schema.xml declares no dimensions")
    return WarehouseSchema(_required(fact, "name"), tuple(dimensions), tuple(measures),
                           fact_count)


def parse_dimensions(xml_text: str) -> list[DimensionMember]:
    root = _parse_root(xml_text, "dimensionData")
    members = []
    for classification in root.findall("classification"):
        for level in classification.findall("Level"):
            dim = _required(level, "node")
            seen = set()
            for node in level.findall("node"):
                mid = _required(node, "id")
                if mid in seen:
                    raise IntegrityError(f"duplicate member id {mid!r} in Level {dim!r}")
                seen.add(mid)
                values = {}
                for a in node.findall("attribute"):
                    values[_required(a, "name")] = _required(a, "value")
                members.append(DimensionMember(dim, mid, values))
    return members


def parse_facts(xml_text: str, schema: WarehouseSchema, members=None) -> list[FactCell]:
    """Parse Facts.xml against ``schema``.

    Dimension ids are matched case-insensitively and stored with the schema's
    spelling. When ``members`` is given, every reference must resolve.
    """
    root = _parse_root(xml_text, "CubeFacts")
    measure_names = {_fold(m): m for m in schema.measure_names}
    cells = []
    index = 0
    for cube in root.findall("cube"):
        for cell in cube.findall("Cell"):
            refs, values = {}, {}
            for child in cell:
                if child.tag == "dimension":
                    dim_id = _required(child, "id")
                    if not schema.has_dimension(dim_id):
                        raise IntegrityError(f"Cell {index}: unknown dimension {dim_id!r}")
                    refs[schema.dimension(dim_id).name] = _required(child, "node")
                    continue
                name = measure_names.get(_fold(child.tag))
                if name is None:
                    raise IntegrityError(f"Cell {index}: unknown measure element <{child.tag}>")
                try:
                    values[name] = parse_number(child.text)
                except ValueError as exc:
                    raise IntegrityError(f"Cell {index}: {exc}") from None
            cells.append(FactCell(refs, values))
            index += 1
    known = None
    if members is not None:
        known = {(schema.dimension(m.dimension).name, m.member_id) for m in members}
    _check_facts(cells, schema, known)
    return cells


def parse_warehouse(schema_xml: str, dimensions_xml: str, facts_xml: str) -> Warehouse:
    schema = parse_schema(schema_xml)
    members = []
    for m in parse_dimensions(dimensions_xml):
        if not schema.has_dimension(m.dimension):
            raise IntegrityError(f"Level {m.dimension!r} is not a schema dimension")
        members.append(
            DimensionMember(schema.dimension(m.dimension).name, m.member_id, m.attribute_values)
        )
    facts = parse_facts(facts_xml, schema, members)
    return Warehouse(schema, tuple(members), tuple(facts))


# -- serialization ---------------------------------------------------------

def _to_text(root) -> str:
    ET.indent(root, space="  ")
    return _XML_DECL + ET.tostring(root, encoding="unicode") + "\n"


def serialize_schema(schema: WarehouseSchema) -> str:
    root = ET.Element("Schema")
    fact = ET.SubElement(root, "fact", name=schema.fact_name)
    if schema.fact_count is not None:
        fact.set("count", str(schema.fact_count))
    for d in schema.dimensions:
        de = ET.SubElement(root, "dimension", name=d.name, cardinality=str(d.cardinality))
        for attr, size in d.attributes:
            ET.SubElement(de, "attribute", name=attr, size=str(size))
    for m in schema.measures:
        ET.SubElement(root, "measure", name=m.name)
    return _to_text(root)


def serialize_dimensions(schema: WarehouseSchema, members: Sequence[DimensionMember]) -> str:
    root = ET.Element("dimensionData")
    classification = ET.SubElement(root, "classification")
    for d in schema.dimensions:
        level = ET.SubElement(classification, "Level", node=d.name)
        for m in members:
            if m.dimension != d.name:
                continue
            node = ET.SubElement(level, "node", id=m.member_id)
            for attr in d.attribute_names:
                ET.SubElement(node, "attribute", name=attr, value=m.attribute_values[attr])
    return _to_text(root)


def serialize_facts(schema: WarehouseSchema, facts: Sequence[FactCell]) -> str:
    root = ET.Element("CubeFacts")
    cube = ET.SubElement(root, "cube")
    for f in facts:
        cell = ET.SubElement(cube, "Cell")
        for d in schema.dimension_names:
            ET.SubElement(cell, "dimension", id=d, node=f.dimension_refs[d])
        for m in schema.measure_names:
            ET.SubElement(cell, m).text = format_number(f.measure_values[m])
    return _to_text(root)


def serialize_warehouse(warehouse: Warehouse) -> tuple[str, str, str]:
    """Return ``(schema_xml, dimensions_xml, facts_xml)``."""
    s = warehouse.schema
    return (
        serialize_schema(s),
        serialize_dimensions(s, warehouse.members),
        serialize_facts(s, warehouse.facts),
    )


def write_warehouse(warehouse: Warehouse, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in zip((SCHEMA_FILE, DIMENSIONS_FILE, FACTS_FILE),
                          serialize_warehouse(warehouse)):
        path = directory / name
        path.write_text(text, encoding="utf-8")
        paths.append(path)
    return paths


def load_warehouse(directory) -> Warehouse:
    directory = Path(directory)
    texts = [(directory / n).read_text(encoding="utf-8")
             for n in (SCHEMA_FILE, DIMENSIONS_FILE, FACTS_FILE)]
    return parse_warehouse(*texts)


def load_schema(path) -> WarehouseSchema:
    path = Path(path)
    if path.is_dir():
        path = path / SCHEMA_FILE
    return parse_schema(path.read_text(encoding="utf-8"))


# -- synthetic generation --------------------------------------------------

@dataclass(frozen=True)
class MeasureRange:
    name: str
    low: float
    high: float
    integral: bool = True


DEFAULT_MEASURES = (
    MeasureRange("quantity", 1, 10, integral=True),
    MeasureRange("amount", 1, 500, integral=False),
)


@dataclass(frozen=True)
class GenerationSpec:
    """What to generate. ``value_domain`` caps distinct values per attribute;
    ``awkward_values`` embeds characters that need XML escaping."""

    dimensions: tuple[DimensionSpec, ...]
    fact_count: int
    measures: tuple[MeasureRange, ...] = DEFAULT_MEASURES
    fact_name: str = "sales"
    value_domain: int = 5
    awkward_values: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        object.__setattr__(self, "measures", tuple(self.measures))
        if self.fact_count < 0:
            raise SchemaValidationError("fact count must be >= 0")
        if self.value_domain < 1:
            raise SchemaValidationError("value domain must be >= 1")


def generate_synthetic(spec: GenerationSpec, seed: int) -> Warehouse:
    """Build a warehouse whose facts pick members uniformly per dimension."""
    rng = np.random.default_rng(seed)
    schema = WarehouseSchema(
        spec.fact_name,
        spec.dimensions,
        tuple(MeasureSpec(m.name) for m in spec.measures),
        spec.fact_count,
    )
    members = []
    member_ids = {}
    for d in spec.dimensions:
        ids = [f"{d.name}-{i}" for i in range(d.cardinality)]
        member_ids[d.name] = ids
        domain = min(spec.value_domain, d.cardinality)
        picks = {a: rng.integers(0, domain, size=d.cardinality) for a in d.attribute_names}
        for i, mid in enumerate(ids):
            values = {}
            for a in d.attribute_names:
                k = int(picks[a][i])
                values[a] = f"{a} <{k}> & \"q\"" if spec.awkward_values else f"{a}_{k}"
            members.append(DimensionMember(d.name, mid, values))

    n = spec.fact_count
    ref_cols = {d.name: rng.integers(0, d.cardinality, size=n) for d in spec.dimensions}
    measure_cols = {}
    for m in spec.measures:
        if m.integral:
            measure_cols[m.name] = [int(v) for v in rng.integers(int(m.low), int(m.high) + 1, size=n)]
        else:
            measure_cols[m.name] = [Decimal(f"{v:.2f}") for v in rng.uniform(m.low, m.high, size=n)]
    facts = [
        FactCell(
            {d: member_ids[d][int(ref_cols[d][i])] for d in member_ids},
            {m: measure_cols[m][i] for m in measure_cols},
        )
        for i in range(n)
    ]
    return Warehouse(schema, tuple(members), tuple(facts))

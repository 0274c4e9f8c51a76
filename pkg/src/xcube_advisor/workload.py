"""Decision-support query dialect, representative attributes and the
query-attribute matrix.

The accepted dialect is the FLWOR subset used against XCube documents::

    for $a in //dimensionData/classification/Level[@node='customers']/node,
        $x in //CubeFacts/cube/Cell
    where $a/attribute[@name='cust_city',@value='Lyon']
      and $x/dimension/@node=$a/@id
      and $x/dimension/@id='customers'
    group by(@cust_last_name)
    return @cust_last_name, sum(quantity)

Selections are conjunctive equality tests on dimension attributes, either
in the bracketed form above or as the pair
``$a/attribute/@name='X' and $a/attribute/@value='V'``. Fact/dimension join
conditions are recognised and skipped.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_queries
from .exceptions import QuerySyntaxError, SchemaValidationError, UnsupportedConstructError

AGGREGATE_OPS = ("sum", "count", "min", "max", "avg")


def canonical(name: str) -> str:
    """Attribute and measure identity is case-insensitive."""
    return name.casefold()


class Predicate(NamedTuple):
    dimension: str
    attribute: str
    value: str


class Aggregation(NamedTuple):
    op: str
    measure: str


@dataclass(frozen=True)
class DecisionQuery:
    id: str
    predicates: tuple[Predicate, ...] = ()
    group_by: tuple[str, ...] = ()
    aggregations: tuple[Aggregation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "predicates", tuple(Predicate(*p) for p in self.predicates))
        object.__setattr__(self, "group_by", tuple(self.group_by))
        aggs = tuple(Aggregation(op.lower(), canonical(m)) for op, m in self.aggregations)
        object.__setattr__(self, "aggregations", aggs)
        if not self.predicates and not self.group_by:
            raise ValueError(
                f"query {self.id!r} has neither selection predicates nor group-by attributes"
            )
        for op, _ in aggs:
            if op not in AGGREGATE_OPS:
                raise ValueError(f"query {self.id!r}: unknown aggregate {op!r}")


def representative_attributes(q: DecisionQuery) -> frozenset[str]:
    """Attributes used in selections or grouping, in canonical form."""
    return frozenset(canonical(p.attribute) for p in q.predicates) | frozenset(
        canonical(a) for a in q.group_by
    )


def validate_query(q: DecisionQuery, schema) -> None:
    """Check that every dimension, attribute and measure of ``q`` exists."""
    for p in q.predicates:
        owner = schema.owner_of(p.attribute)
        if canonical(owner) != canonical(p.dimension):
            raise SchemaValidationError(
                f"query {q.id!r}: attribute {p.attribute!r} belongs to {owner!r}, "
                f"not {p.dimension!r}"
            )
    for a in q.group_by:
        schema.owner_of(a)
    for agg in q.aggregations:
        schema.measure(agg.measure)


# -- tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\(:.*?:\))
  | (?P<var>\$[A-Za-z_][\w.\-]*)
  | (?P<string>'(?:[^']|'')*'|"(?:[^"]|"")*")
  | (?P<attr>@[A-Za-z_][\w.\-]*)
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<name>[A-Za-z_][\w.\-]*)
  | (?P<op>:=|!=|<=|>=|//|[/=<>\[\](),*])
    """,
    re.VERBOSE | re.DOTALL,
)

_CLAUSE_WORDS = {"for", "let", "where", "group", "order", "return"}
_INEQUALITIES = {"!=", "<", ">", "<=", ">="}


def _unquote(literal: str) -> str:
    q = literal[0]
    return literal[1:-1].replace(q + q, q)


def _quote(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


class Token(NamedTuple):
    kind: str
    text: str
    pos: int

    def word(self):
        return self.text.lower() if self.kind == "name" else None


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    return tokens


# -- parser ----------------------------------------------------------------

class _Parser:
    def __init__(self, text, query_id):
        self.text = text
        self.query_id = query_id
        self.tokens = tokenize(text)
        self.i = 0
        self.bindings = {}  # variable -> (kind, dimension name or None)

    def error(self, message, tok=None):
        pos = tok.pos if tok is not None else self._pos()
        return QuerySyntaxError(message, pos, self.text, self.query_id)

    def unsupported(self, construct, tok):
        return UnsupportedConstructError(construct, tok.pos, self.text, self.query_id)

    def _pos(self):
        if self.i < len(self.tokens):
            return self.tokens[self.i].pos
        return len(self.text)

    def peek(self, offset=0):
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise self.error("unexpected end of query")
        self.i += 1
        return tok

    def expect(self, kind, text=None):
        tok = self.next()
        if tok.kind != kind or (text is not None and tok.text.lower() != text):
            want = text or kind
            raise self.error(f"expected {want!r}, found {tok.text!r}", tok)
        return tok

    def at_word(self, *words):
        tok = self.peek()
        return tok is not None and tok.word() in words

    def collect_until_clause(self, stop_at_binding=False):
        """Tokens up to the next top-level clause keyword.

        With ``stop_at_binding`` a top-level ``, $var`` also ends the run.
        """
        out = []
        depth = 0
        while (tok := self.peek()) is not None:
            prev = out[-1] if out else None
            after_path_sep = prev is not None and prev.text in ("/", "//")
            if tok.text in ("(", "["):
                depth += 1
            elif tok.text in (")", "]"):
                depth -= 1
            elif depth == 0 and not after_path_sep and tok.word() in _CLAUSE_WORDS:
                break
            elif tok.word() in ("for", "let") and not after_path_sep:
                raise self.unsupported("nested FLWOR expression", tok)
            if (stop_at_binding and depth == 0 and tok.text == ","
                    and (nxt := self.peek(1)) is not None and nxt.kind == "var"):
                break
            out.append(self.next())
        return out

    # ---------------------------------------------------------------------

    def parse(self):
        if not self.tokens:
            raise self.error("empty query")
        if not self.at_word("for"):
            raise self.error(f"query must start with 'for', found {self.peek().text!r}")
        while self.at_word("for", "let"):
            kw = self.next().word()
            self.parse_bindings(kw)
        predicates = []
        group_by = []
        aggregations = []
        if self.at_word("where"):
            self.next()
            predicates = self.parse_where(self.collect_until_clause())
        if self.at_word("group"):
            self.next()
            self.expect("name", "by")
            group_by = self.parse_group_by(self.collect_until_clause())
        if self.at_word("order"):
            raise self.unsupported("order by", self.peek())
        if self.at_word("for", "let"):
            raise self.unsupported("nested FLWOR expression", self.peek())
        if not self.at_word("return"):
            tok = self.peek()
            found = tok.text if tok else "end of query"
            raise self.error(f"expected 'return', found {found!r}", tok)
        ret = self.next()
        if self.at_word("for", "let"):
            raise self.unsupported("nested FLWOR expression", self.peek())
        aggregations = self.parse_return(self.collect_until_clause(), ret)
        if self.peek() is not None:
            tok = self.peek()
            if tok.word() in ("for", "let"):
                raise self.unsupported("nested FLWOR expression", tok)
            raise self.error(f"unexpected {tok.text!r} after return clause", tok)
        try:
            return DecisionQuery(self.query_id or "q", predicates, group_by, aggregations)
        except ValueError as exc:
            raise QuerySyntaxError(str(exc), None, None, self.query_id) from None

    def parse_bindings(self, kw):
        while True:
            var = self.expect("var")
            if kw == "for":
                self.expect("name", "in")
            else:
                self.expect("op", ":=")
            path = self.collect_until_clause(stop_at_binding=True)
            if not path:
                raise self.error(f"empty binding for {var.text}", var)
            if kw == "for":
                self.bindings[var.text] = self.classify_path(path)
            if self.peek() is not None and self.peek().text == ",":
                self.next()
                continue
            return

    def classify_path(self, path):
        texts = [t.text for t in path]
        for j, tok in enumerate(path):
            if tok.kind == "name" and tok.text == "Level":
                # Level [ @node = 'DIM' ]
                if (texts[j + 1:j + 4] == ["[", "@node", "="]
                        and j + 4 < len(path) and path[j + 4].kind == "string"):
                    return ("dimension", _unquote(path[j + 4].text))
                raise self.error("Level step must be qualified by [@node='<dimension>']", tok)
        if "Cell" in texts:
            return ("fact", None)
        return ("other", None)

    def split_conjuncts(self, tokens):
        parts, cur, depth = [], [], 0
        for tok in tokens:
            if tok.text in ("(", "["):
                depth += 1
            elif tok.text in (")", "]"):
                depth -= 1
            word = tok.word()
            if word == "or":
                raise self.unsupported("disjunction (or)", tok)
            if depth == 0 and word == "and":
                if not cur:
                    raise self.error("empty condition before 'and'", tok)
                parts.append(cur)
                cur = []
                continue
            cur.append(tok)
        if not cur:
            raise self.error("empty where condition")
        parts.append(cur)
        return parts

    def dimension_of(self, var_tok):
        kind, dim = self.bindings.get(var_tok.text, (None, None))
        if kind is None:
            raise self.error(f"unbound variable {var_tok.text}", var_tok)
        if kind != "dimension":
            raise self.error(
                f"selection on {var_tok.text}, which is not bound to a dimension Level", var_tok
            )
        return dim

    def parse_where(self, tokens):
        if not tokens:
            raise self.error("empty where clause")
        predicates = []  # (position, Predicate)
        pending = {}  # var -> {"name": [(pos, val)], "value": [(pos, val)]}
        for cond in self.split_conjuncts(tokens):
            for tok in cond:
                if tok.text in _INEQUALITIES:
                    raise self.unsupported(f"inequality predicate ({tok.text})", tok)
            texts = [t.text for t in cond]
            head = cond[0]
            if head.kind != "var":
                raise self.error(f"unrecognised where condition starting at {head.text!r}", head)
            if texts[1:3] == ["/", "attribute"] and len(cond) > 3 and texts[3] == "[":
                dim = self.dimension_of(head)
                predicates.append((head.pos, self.parse_bracket_predicate(cond, dim)))
            elif texts[1:4] == ["/", "attribute", "/"] and len(cond) == 7:
                attr_tok, eq, lit = cond[4], cond[5], cond[6]
                if (attr_tok.text not in ("@name", "@value") or eq.text != "="
                        or lit.kind != "string"):
                    raise self.error("expected attribute/@name='...' or attribute/@value='...'",
                                     attr_tok)
                self.dimension_of(head)
                slot = pending.setdefault(head.text, {"@name": [], "@value": []})
                slot[attr_tok.text].append((head.pos, _unquote(lit.text)))
            elif texts[1:3] == ["/", "dimension"]:
                self.check_join(cond)
            else:
                raise self.error("unrecognised where condition", head)
        for var, slot in pending.items():
            names, values = slot["@name"], slot["@value"]
            if len(names) != len(values):
                tok = next(t for t in self.tokens if t.text == var)
                raise self.error(
                    f"unpaired attribute/@name and attribute/@value tests on {var}", tok
                )
            dim = self.bindings[var][1]
            for (pos, name), (_, value) in zip(names, values):
                predicates.append((pos, Predicate(dim, name, value)))
        predicates.sort(key=lambda p: p[0])
        return [p for _, p in predicates]

    def parse_bracket_predicate(self, cond, dim):
        # $v / attribute [ @name = 'A' (,|and) @value = 'V' ]
        inner = cond[4:]
        if not inner or inner[-1].text != "]":
            raise self.error("unterminated attribute predicate", cond[3])
        inner = inner[:-1]
        fields = {}
        j = 0
        while j < len(inner):
            tok = inner[j]
            if tok.text in (",",) or tok.word() == "and":
                j += 1
                continue
            if (tok.kind != "attr" or j + 2 >= len(inner) or inner[j + 1].text != "="
                    or inner[j + 2].kind != "string"):
                raise self.error("expected @name='...' or @value='...' inside attribute[...]", tok)
            fields[tok.text] = _unquote(inner[j + 2].text)
            j += 3
        if set(fields) != {"@name", "@value"}:
            raise self.error("attribute[...] must test exactly @name and @value", cond[3])
        return Predicate(dim, fields["@name"], fields["@value"])

    def check_join(self, cond):
        # $x/dimension/@node = $a/@id    or    $x/dimension/@id = 'dim'
        texts = [t.text for t in cond]
        if texts[3:4] != ["/"] or len(cond) < 7 or texts[5] != "=":
            raise self.error("unrecognised fact/dimension join condition", cond[0])
        rhs = cond[6:]
        if texts[4] == "@id" and len(rhs) == 1 and rhs[0].kind == "string":
            return
        if (texts[4] == "@node" and len(rhs) == 3 and rhs[0].kind == "var"
                and rhs[1].text == "/" and rhs[2].text == "@id"):
            self.dimension_of(rhs[0])
            return
        raise self.error("unrecognised fact/dimension join condition", cond[0])

    def parse_group_by(self, tokens):
        if tokens and tokens[0].text == "(":
            if tokens[-1].text != ")":
                raise self.error("unterminated group by list", tokens[0])
            tokens = tokens[1:-1]
        attrs = []
        expect_item = True
        for tok in tokens:
            if expect_item:
                if tok.kind not in ("attr", "name"):
                    raise self.error(f"expected group-by attribute, found {tok.text!r}", tok)
                attrs.append(tok.text.lstrip("@"))
            elif tok.text != ",":
                raise self.error(f"expected ',' in group by list, found {tok.text!r}", tok)
            expect_item = not expect_item
        if not attrs or expect_item:
            raise self.error("group by requires a non-empty attribute list")
        return attrs

    def parse_return(self, tokens, ret_tok):
        items, cur, depth = [], [], 0
        for tok in tokens:
            if tok.text in ("(", "["):
                depth += 1
            elif tok.text in (")", "]"):
                depth -= 1
            if depth == 0 and tok.text == ",":
                items.append(cur)
                cur = []
            else:
                cur.append(tok)
        items.append(cur)
        aggregations = []
        for item in items:
            if not item:
                raise self.error("empty item in return clause", ret_tok)
            head = item[0]
            if head.kind == "name" and len(item) > 1 and item[1].text == "(":
                op = head.text.lower()
                if op not in AGGREGATE_OPS:
                    raise self.unsupported(f"function {head.text}()", head)
                if item[-1].text != ")":
                    raise self.error(f"unterminated {head.text}(...)", head)
                names = [t for t in item[2:-1] if t.kind == "name"]
                if not names:
                    raise self.error(f"{head.text}() needs a measure argument", head)
                aggregations.append(Aggregation(op, names[-1].text))
            elif head.kind in ("attr", "var"):
                continue
            else:
                raise self.error(f"unsupported return item starting at {head.text!r}", head)
        if not aggregations:
            raise self.error("return clause contains no aggregate", ret_tok)
        return aggregations


def parse_query(text: str, query_id: str | None = None) -> DecisionQuery:
    """Parse one decision-support query.

    Raises:
        UnsupportedConstructError: for disjunctions, inequalities, ``order by``
            or nested FLWOR expressions.
        QuerySyntaxError: for anything else outside the dialect.
    """
    return _Parser(text, query_id).parse()


_ID_RE = re.compile(r"--\s*id\s*:\s*(\S+)\s*$")


def parse_workload(text: str) -> list[DecisionQuery]:
    """Split on lines containing only ``---`` and parse each query.

    A query may start with ``-- id: <name>``; otherwise it is numbered
    ``q1, q2, ...`` by position.
    """
    chunks, cur = [], []
    for line in text.splitlines():
        if line.strip() == "---":
            chunks.append(cur)
            cur = []
        else:
            cur.append(line)
    chunks.append(cur)
    queries = []
    for lines in chunks:
        while lines and not lines[0].strip():
            lines = lines[1:]
        if not any(l.strip() for l in lines):
            continue
        qid = f"q{len(queries) + 1}"
        m = _ID_RE.match(lines[0].strip())
        if m:
            qid = m.group(1)
            lines = lines[1:]
        queries.append(parse_query("\n".join(lines), qid))
    return check_queries(queries, allow_empty=True)


def read_workload(path) -> list[DecisionQuery]:
    return parse_workload(Path(path).read_text(encoding="utf-8"))


def render_query(q: DecisionQuery) -> str:
    """Render ``q`` back into the dialect (bracketed predicate form)."""
    dims = []
    for p in q.predicates:
        if p.dimension not in dims:
            dims.append(p.dimension)
    variables = {d: f"$d{i}" for i, d in enumerate(dims)}
    lines = []
    bindings = [
        f"{v} in //dimensionData/classification/Level[@node={_quote(d)}]/node"
        for d, v in variables.items()
    ]
    bindings.append("$x in //CubeFacts/cube/Cell")
    lines.append("for " + ",\n    ".join(bindings))
    conds = [
        f"{variables[p.dimension]}/attribute[@name={_quote(p.attribute)},@value={_quote(p.value)}]"
        for p in q.predicates
    ]
    for d, v in variables.items():
        conds.append(f"$x/dimension/@node={v}/@id")
        conds.append(f"$x/dimension/@id={_quote(d)}")
    if conds:
        lines.append("where " + "\n  and ".join(conds))
    if q.group_by:
        lines.append("group by(" + ",".join(f"@{a}" for a in q.group_by) + ")")
    ret = [f"@{a}" for a in q.group_by] + [f"{op}({m})" for op, m in q.aggregations]
    lines.append("return " + ", ".join(ret))
    return "\n".join(lines)


def write_workload(queries: Sequence[DecisionQuery], path) -> None:
    parts = [f"-- id: {q.id}\n{render_query(q)}" for q in queries]
    Path(path).write_text("\n---\n".join(parts) + "\n", encoding="utf-8")


# -- query-attribute matrix ------------------------------------------------

@dataclass(frozen=True)
class QueryAttributeMatrix:
    queries: tuple[str, ...]
    attributes: tuple[str, ...]
    cells: np.ndarray

    @property
    def shape(self):
        return self.cells.shape

    def row(self, query_id: str) -> np.ndarray:
        return self.cells[self.queries.index(query_id)]

    def to_text(self) -> str:
        width = max([len(q) for q in self.queries] + [5])
        head = " " * width + " | " + " ".join(self.attributes)
        lines = [head, "-" * len(head)]
        for qid, row in zip(self.queries, self.cells):
            cols = " ".join(str(int(v)).center(len(a)) for v, a in zip(row, self.attributes))
            lines.append(qid.ljust(width) + " | " + cols)
        return "\n".join(lines)


def check_attribute_collisions(queries, schema=None) -> None:
    """Bare attribute names must identify a single dimension."""
    seen: dict[str, str] = {}
    for q in queries:
        for p in q.predicates:
            key, dim = canonical(p.attribute), canonical(p.dimension)
            if seen.setdefault(key, dim) != dim:
                raise SchemaValidationError(
                    f"attribute {p.attribute!r} is used on dimensions {seen[key]!r} and "
                    f"{dim!r}; disambiguate the attribute names in the schema"
                )
    if schema is not None:
        for q in queries:
            validate_query(q, schema)


class QueryAttributeVectorizer(TransformerMixin, BaseEstimator):
    """Turn parsed queries into rows of the binary query-attribute matrix.

    Columns are the representative attributes seen during ``fit``, sorted.
    Attributes unseen at fit time are ignored by ``transform``.

    Parameters
    ----------
    schema : WarehouseSchema, optional
        When given, every attribute must belong to exactly one schema
        dimension.
    """

    def __init__(self, schema=None):
        self.schema = schema

    def fit(self, X, y=None):
        queries = check_queries(X)
        check_attribute_collisions(queries, self.schema)
        attrs = set()
        for q in queries:
            attrs |= representative_attributes(q)
        self.attributes_ = tuple(sorted(attrs))
        self.vocabulary_ = {a: k for k, a in enumerate(self.attributes_)}
        self.n_features_in_ = len(self.attributes_)
        return self

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        queries = check_queries(X, allow_empty=True)
        cells = np.zeros((len(queries), len(self.attributes_)), dtype=np.int8)
        for i, q in enumerate(queries):
            for a in representative_attributes(q):
                k = self.vocabulary_.get(a)
                if k is not None:
                    cells[i, k] = 1
        return cells

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "attributes_")
        return np.asarray(self.attributes_, dtype=object)


def build_matrix(workload: Sequence[DecisionQuery], schema=None) -> QueryAttributeMatrix:
    queries = check_queries(workload)
    vec = QueryAttributeVectorizer(schema=schema).fit(queries)
    return QueryAttributeMatrix(
        tuple(q.id for q in queries), vec.attributes_, vec.transform(queries)
    )

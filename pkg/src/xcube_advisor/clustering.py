"""Query similarity, workload clustering and candidate view construction."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_binary_matrix, check_binary_row, check_queries
from .workload import Aggregation, DecisionQuery, QueryAttributeMatrix, representative_attributes


def _bit(x):
    if x not in (0, 1):
        raise ValueError(f"expected a bit (0 or 1), got {x!r}")
    return int(x)


def delta_sim(x, y) -> int:
    """1 when the attribute is present in both queries."""
    return int(_bit(x) == 1 and _bit(y) == 1)


def delta_dissim(x, y) -> int:
    """1 when exactly one of the two queries uses the attribute."""
    return int(_bit(x) != _bit(y))


def _pair(qi, qj):
    qi, qj = check_binary_row(qi), check_binary_row(qj)
    if qi.shape != qj.shape:
        raise ValueError(f"rows differ in length: {qi.shape[0]} vs {qj.shape[0]}")
    return qi, qj


def sim(qi, qj) -> int:
    qi, qj = _pair(qi, qj)
    return int(np.sum(qi & qj))


def dissim(qi, qj) -> int:
    qi, qj = _pair(qi, qj)
    return int(np.sum(qi != qj))


def pairwise_similarity(X):
    """Return ``(sim, dissim)`` matrices over all row pairs of ``X``."""
    X = check_binary_matrix(X)
    S = X @ X.T
    sizes = np.diag(S)
    D = sizes[:, None] + sizes[None, :] - 2 * S
    return S, D


@dataclass(frozen=True)
class ClusterPolicy:
    """How similar two queries must be to share an edge.

    ``sim-dominates`` links queries whose similarity exceeds their
    dissimilarity; ``threshold`` links them when similarity reaches
    ``theta``. Clusters are the connected components of the resulting graph.
    """

    kind: str = "sim-dominates"
    theta: float | None = None

    def __post_init__(self):
        if self.kind not in ("sim-dominates", "threshold"):
            raise ValueError(f"unknown cluster policy {self.kind!r}")
        if self.kind == "threshold" and self.theta is None:
            raise ValueError("threshold policy requires theta")

    @classmethod
    def parse(cls, spec) -> "ClusterPolicy":
        if isinstance(spec, ClusterPolicy):
            return spec
        spec = str(spec).strip()
        if spec == "sim-dominates":
            return cls()
        kind, sep, value = spec.partition(":")
        if kind == "threshold" and sep:
            try:
                return cls("threshold", float(value))
            except ValueError:
                pass
        raise ValueError(f"invalid cluster policy {spec!r}; use sim-dominates or threshold:N")

    def adjacency(self, S, D):
        if self.kind == "sim-dominates":
            A = S > D
        else:
            A = S >= self.theta
        A = A.copy()
        np.fill_diagonal(A, False)
        return A

    def __str__(self):
        if self.kind == "threshold":
            theta = int(self.theta) if float(self.theta).is_integer() else self.theta
            return f"threshold:{theta}"
        return self.kind


class QueryClusterer(ClusterMixin, BaseEstimator):
    """Partition rows of a query-attribute matrix into clusters.

    Parameters
    ----------
    policy : str, default="sim-dominates"
        ``"sim-dominates"`` or ``"threshold"``.
    threshold : float, optional
        Minimum similarity for the ``threshold`` policy.

    Attributes
    ----------
    labels_ : ndarray of shape (n_queries,)
        Cluster index per query. Clusters are numbered in order of their
        first member, so the labelling does not depend on graph traversal.
    n_clusters_ : int
    similarity_, dissimilarity_ : ndarray of shape (n_queries, n_queries)
    """

    def __init__(self, policy="sim-dominates", threshold=None):
        self.policy = policy
        self.threshold = threshold

    def _policy(self):
        if self.policy == "threshold":
            return ClusterPolicy("threshold", self.threshold)
        return ClusterPolicy.parse(self.policy)

    def fit(self, X, y=None):
        X = check_binary_matrix(X)
        policy = self._policy()
        S, D = pairwise_similarity(X)
        A = policy.adjacency(S, D)
        _, raw = connected_components(csr_matrix(A), directed=False)
        relabel = {}
        for lab in raw:
            relabel.setdefault(lab, len(relabel))
        self.labels_ = np.array([relabel[lab] for lab in raw], dtype=np.int64)
        self.n_clusters_ = len(relabel)
        self.similarity_ = S
        self.dissimilarity_ = D
        return self


@dataclass(frozen=True)
class Cluster:
    id: int
    query_ids: tuple[str, ...]

    def __post_init__(self):
        if not self.query_ids:
            raise ValueError("a cluster must contain at least one query")


def cluster_queries(matrix: QueryAttributeMatrix, policy="sim-dominates") -> list[Cluster]:
    """Deterministic partition of the workload; ids start at 1 in order of
    each cluster's earliest query."""
    if len(matrix.queries) == 0:
        raise ValueError("cannot cluster an empty workload")
    policy = ClusterPolicy.parse(policy)
    est = QueryClusterer(policy.kind, policy.theta).fit(matrix.cells)
    members: dict[int, list[str]] = {}
    for qid, lab in zip(matrix.queries, est.labels_):
        members.setdefault(int(lab), []).append(qid)
    return [Cluster(lab + 1, tuple(qids)) for lab, qids in sorted(members.items())]


@dataclass(frozen=True)
class CandidateView:
    """Signature of a view: group-by attributes, their dimensions and the
    aggregates it stores. Attribute and measure names are canonical."""

    id: str
    attributes: frozenset[str]
    dimensions: frozenset[str]
    measures: frozenset[Aggregation]
    source_cluster: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "attributes", frozenset(self.attributes))
        object.__setattr__(self, "dimensions", frozenset(self.dimensions))
        object.__setattr__(
            self, "measures", frozenset(Aggregation(op, m) for op, m in self.measures)
        )
        if not self.attributes:
            raise ValueError(f"view {self.id!r} has no attributes")
        if not self.measures:
            raise ValueError(f"view {self.id!r} stores no aggregates")


def stored_aggregations(q: DecisionQuery) -> set[Aggregation]:
    """Aggregates a view must store to answer ``q``; avg becomes sum+count."""
    out = set()
    for agg in q.aggregations:
        if agg.op == "avg":
            out.add(Aggregation("sum", agg.measure))
            out.add(Aggregation("count", agg.measure))
        else:
            out.add(agg)
    return out


def answerable(q: DecisionQuery, v: CandidateView) -> bool:
    """Can ``q`` be rewritten to run against ``v`` alone?"""
    if not representative_attributes(q) <= v.attributes:
        return False
    for agg in q.aggregations:
        if agg.op == "avg":
            needed = {Aggregation("sum", agg.measure), Aggregation("count", agg.measure)}
            if agg not in v.measures and not needed <= v.measures:
                return False
        elif agg not in v.measures:
            return False
    return True


def view_for_queries(view_id, queries: Sequence[DecisionQuery], schema,
                     source_cluster=None) -> CandidateView:
    attrs, measures = set(), set()
    for q in queries:
        attrs |= representative_attributes(q)
        measures |= stored_aggregations(q)
    for agg in measures:
        schema.measure(agg.measure)
    dims = {schema.owner_of(a) for a in attrs}
    return CandidateView(view_id, frozenset(attrs), frozenset(dims), frozenset(measures),
                         source_cluster)


def build_candidate_views(clusters: Sequence[Cluster], workload: Sequence[DecisionQuery],
                          schema) -> list[CandidateView]:
    """One candidate per cluster covering the union of its queries' needs."""
    queries = check_queries(workload)
    by_id = {q.id: q for q in queries}
    covered = [qid for c in clusters for qid in c.query_ids]
    if sorted(covered) != sorted(by_id):
        raise ValueError("clusters do not partition the workload")
    return [
        view_for_queries(f"v{c.id}", [by_id[qid] for qid in c.query_ids], schema, c.id)
        for c in clusters
    ]

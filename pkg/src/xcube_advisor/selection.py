"""Objective functions and greedy construction of a view configuration.

Query cost is measured in fact cells read: ``|F|`` when the query runs on
the fact document, ``|v|`` when it runs on a materialized view ``v``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_fraction, check_non_negative, check_queries
from .clustering import CandidateView, answerable, build_candidate_views, cluster_queries
from .cost_model import CostParams, estimate_cells, view_byte_size
from .workload import DecisionQuery, build_matrix

OBJECTIVES = ("profit", "ratio", "hybrid")


@dataclass(frozen=True)
class SelectionConfig:
    objective: str = "profit"
    storage_budget: float | None = None
    alpha: float | None = None
    update_query_ratio: float = 0.0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.objective in ("ratio", "hybrid") and self.storage_budget is None:
            raise ValueError(f"the {self.objective} objective requires a storage budget")
        if self.storage_budget is not None:
            check_non_negative(self.storage_budget, "storage_budget")
        if self.objective == "hybrid":
            check_fraction(self.alpha, "alpha")
        check_non_negative(self.update_query_ratio, "update_query_ratio")

    @property
    def budgeted(self) -> bool:
        return self.storage_budget is not None


class SelectionStep(NamedTuple):
    view_id: str
    objective: float
    remaining_budget: float | None


@dataclass(frozen=True)
class SelectionResult:
    """Accepted views in order, with the objective of every eligible
    candidate at each iteration (``trace``) for replay."""

    selected: tuple[SelectionStep, ...]
    final_workload_cost: float
    baseline_cost: float
    views: tuple[CandidateView, ...] = ()
    trace: tuple[dict, ...] = field(default=(), repr=False)

    @property
    def selected_ids(self) -> list[str]:
        return [s.view_id for s in self.selected]


class BudgetState(NamedTuple):
    remaining: float
    total: float


def cells_update_cost(view: CandidateView, estimates: Mapping[str, float]) -> float:
    """Maintenance cost of a view: rebuilding it touches each of its cells."""
    return estimates[view.id]


def query_cost(q: DecisionQuery, selected_views, estimates, fact_count) -> float:
    """Cheapest access path for ``q``: the fact document or a view answering it."""
    cost = float(fact_count)
    for v in selected_views:
        if answerable(q, v):
            cost = min(cost, float(estimates[v.id]))
    return cost


def workload_cost(Q, S, estimates, fact_count) -> float:
    return math.fsum(query_cost(q, S, estimates, fact_count) for q in Q)


def profit(v, S, Q, config: SelectionConfig, estimates, fact_count,
           update_cost: Callable = cells_update_cost) -> float:
    """Workload cost saved by adding ``v`` to ``S``, minus its expected
    maintenance cost ``|Q| * update_query_ratio * update_cost(v)``."""
    if any(s.id == v.id for s in S):
        raise ValueError(f"view {v.id!r} is already selected")
    before = workload_cost(Q, S, estimates, fact_count)
    after = workload_cost(Q, list(S) + [v], estimates, fact_count)
    beta = len(Q) * config.update_query_ratio
    return before - after - beta * update_cost(v, estimates)


def ratio_objective(v, S, Q, config, estimates, fact_count, sizes,
                    update_cost: Callable = cells_update_cost) -> float:
    size = sizes[v.id]
    if size <= 0:
        raise ValueError(f"view {v.id!r} has zero size; the profit/space ratio is undefined")
    return profit(v, S, Q, config, estimates, fact_count, update_cost) / size


def hybrid_uses_profit(remaining_after: float, total: float, alpha: float) -> bool:
    if total <= 0:
        raise ValueError("hybrid objective needs a positive storage budget")
    return remaining_after / total <= alpha


def hybrid_objective(v, S, budget_state: BudgetState, Q, config, estimates, fact_count,
                     sizes, update_cost: Callable = cells_update_cost) -> float:
    """Profit while the space left after adding ``v`` is at most ``alpha``
    of the budget, profit/space ratio otherwise."""
    remaining_after = budget_state.remaining - sizes[v.id]
    if hybrid_uses_profit(remaining_after, budget_state.total, config.alpha):
        return profit(v, S, Q, config, estimates, fact_count, update_cost)
    return ratio_objective(v, S, Q, config, estimates, fact_count, sizes, update_cost)


def _natural_key(view_id: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", view_id)]


def greedy_select(V: Sequence[CandidateView], Q: Sequence[DecisionQuery],
                  config: SelectionConfig, estimates: Mapping[str, float], fact_count,
                  sizes: Mapping[str, float] | None = None,
                  update_cost: Callable = cells_update_cost) -> SelectionResult:
    """Repeatedly add the candidate with the largest strictly positive
    objective until none is positive, none is left, or none fits the budget.

    Ties go to the smaller candidate id (natural order, so v2 < v10).
    """
    if (config.budgeted or config.objective != "profit") and sizes is None:
        raise ValueError("view sizes are required for budgeted selection")
    Q = list(Q)
    pool = sorted(V, key=lambda v: _natural_key(v.id))
    if len({v.id for v in pool}) != len(pool):
        raise ValueError("candidate view ids must be unique")
    S: list[CandidateView] = []
    used: list[float] = []
    steps, trace = [], []
    budget = config.storage_budget

    def fits(v):
        if budget is None:
            return True
        size = sizes[v.id]
        if size <= 0 and config.objective != "profit":
            return False
        return math.fsum(used + [size]) <= budget

    def evaluate(v):
        if config.objective == "profit":
            return profit(v, S, Q, config, estimates, fact_count, update_cost)
        if config.objective == "ratio":
            return ratio_objective(v, S, Q, config, estimates, fact_count, sizes, update_cost)
        state = BudgetState(budget - math.fsum(used), budget)
        return hybrid_objective(v, S, state, Q, config, estimates, fact_count, sizes,
                                update_cost)

    while True:
        chosen_ids = {s.id for s in S}
        pool = [v for v in pool if v.id not in chosen_ids and fits(v)]
        if not pool:
            break
        values = {v.id: evaluate(v) for v in pool}
        trace.append(values)
        best, f_max = None, 0.0
        for v in pool:
            if values[v.id] > f_max:
                best, f_max = v, values[v.id]
        if best is None:
            break
        S.append(best)
        remaining = None
        if budget is not None:
            used.append(sizes[best.id])
            remaining = max(0.0, budget - math.fsum(used))
        steps.append(SelectionStep(best.id, f_max, remaining))

    return SelectionResult(
        selected=tuple(steps),
        final_workload_cost=workload_cost(Q, S, estimates, fact_count),
        baseline_cost=float(len(Q) * fact_count),
        views=tuple(S),
        trace=tuple(trace),
    )


class ViewSelector(BaseEstimator):
    """Recommend materialized views for a decision-support workload.

    ``fit`` builds the query-attribute matrix, clusters the queries, derives
    one candidate view per cluster, estimates candidate sizes and runs the
    greedy selection.

    Parameters
    ----------
    schema : WarehouseSchema
        Warehouse metadata; supplies cardinalities, byte sizes and, unless
        ``fact_count`` is given, the number of facts.
    objective : {"profit", "ratio", "hybrid"}, default="profit"
    storage_budget : float, optional
        Bytes available for views. Required by "ratio" and "hybrid".
    alpha : float, optional
        Hybrid switch threshold in (0, 1].
    update_query_ratio : float, default=0.0
    estimator : {"cardenas", "yao"}, default="cardenas"
    cluster_policy : str, default="sim-dominates"
    fact_count : int, optional

    Attributes
    ----------
    matrix_, clusters_, candidates_ : clustering context and candidates
    estimates_, sizes_ : dict
        Estimated cells and bytes per candidate id.
    selection_ : SelectionResult
    selected_views_ : list of CandidateView
    """

    def __init__(self, schema=None, objective="profit", storage_budget=None, alpha=None,
                 update_query_ratio=0.0, estimator="cardenas",
                 cluster_policy="sim-dominates", fact_count=None):
        self.schema = schema
        self.objective = objective
        self.storage_budget = storage_budget
        self.alpha = alpha
        self.update_query_ratio = update_query_ratio
        self.estimator = estimator
        self.cluster_policy = cluster_policy
        self.fact_count = fact_count

    def _config(self):
        return SelectionConfig(self.objective, self.storage_budget, self.alpha,
                               self.update_query_ratio)

    def fit(self, X, y=None):
        if self.schema is None:
            raise ValueError("ViewSelector requires a warehouse schema")
        config = self._config()
        queries = check_queries(X)
        params = CostParams.from_schema(self.schema, self.fact_count)
        self.config_ = config
        self.cost_params_ = params
        self.matrix_ = build_matrix(queries, self.schema)
        self.clusters_ = cluster_queries(self.matrix_, self.cluster_policy)
        self.candidates_ = build_candidate_views(self.clusters_, queries, self.schema)
        self.estimates_ = {v.id: estimate_cells(v, params, self.estimator)
                           for v in self.candidates_}
        self.sizes_ = {v.id: view_byte_size(v, self.estimates_[v.id], params)
                       for v in self.candidates_}
        self.selection_ = greedy_select(self.candidates_, queries, config, self.estimates_,
                                        params.fact_count, self.sizes_)
        self.selected_views_ = list(self.selection_.views)
        return self

    def predict(self, X) -> np.ndarray:
        """Id of the cheapest selected view answering each query, or None
        when the query must read the fact document."""
        check_is_fitted(self, "selection_")
        out = []
        for q in check_queries(X, allow_empty=True):
            best, best_cost = None, float(self.cost_params_.fact_count)
            for v in self.selected_views_:
                if answerable(q, v) and self.estimates_[v.id] < best_cost:
                    best, best_cost = v.id, self.estimates_[v.id]
            out.append(best)
        return np.array(out, dtype=object)

    def score(self, X, y=None) -> float:
        """Estimated speedup (baseline cost over cost with selected views)."""
        check_is_fitted(self, "selection_")
        queries = check_queries(X)
        n = self.cost_params_.fact_count
        with_views = workload_cost(queries, self.selected_views_, self.estimates_, n)
        base = float(len(queries) * n)
        return base / with_views if with_views > 0 else 1.0

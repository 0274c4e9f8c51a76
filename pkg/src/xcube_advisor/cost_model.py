"""View size estimation under uniformly distributed facts.

A view's key space is the product of the cardinalities of the dimensions it
groups by. The number of distinct keys hit by ``n`` facts is estimated with
Yao's formula (sampling without replacement) or Cardenas's formula (with
replacement); the latter is the default since it needs only the key space
and the fact count.
"""
from __future__ import annotations

import math
import sys
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import SchemaValidationError

ESTIMATORS = ("cardenas", "yao")
_YAO_CHUNK = 1 << 20


class EstimateSaturationWarning(UserWarning):
    """More facts than possible fact cells; Yao's product saturates at zero."""


@dataclass(frozen=True)
class CostParams:
    dimension_cardinalities: Mapping[str, int]
    dimension_byte_sizes: Mapping[str, int]
    fact_count: int

    def __post_init__(self):
        for name, card in self.dimension_cardinalities.items():
            if card < 1:
                raise ValueError(f"dimension {name!r}: cardinality must be >= 1")
        for name, size in self.dimension_byte_sizes.items():
            if size < 1:
                raise ValueError(f"dimension {name!r}: byte size must be >= 1")
        if self.fact_count < 0:
            raise ValueError("fact count must be >= 0")

    @classmethod
    def from_schema(cls, schema, fact_count=None) -> "CostParams":
        if fact_count is None:
            fact_count = schema.fact_count
        if fact_count is None:
            raise SchemaValidationError(
                "fact count unknown: declare <fact count=...> in Schema.xml or pass it explicitly"
            )
        return cls(
            {d.name: d.cardinality for d in schema.dimensions},
            {d.name: d.byte_size for d in schema.dimensions},
            int(fact_count),
        )

    @classmethod
    def from_warehouse(cls, warehouse) -> "CostParams":
        return cls.from_schema(warehouse.schema, len(warehouse.facts))

    def _lookup(self, table, name):
        if name in table:
            return table[name]
        folded = {k.casefold(): v for k, v in table.items()}
        try:
            return folded[name.casefold()]
        except KeyError:
            raise SchemaValidationError(f"unknown dimension {name!r}") from None

    def cardinality(self, dimension: str) -> int:
        return self._lookup(self.dimension_cardinalities, dimension)

    def byte_size(self, dimension: str) -> int:
        return self._lookup(self.dimension_byte_sizes, dimension)


def _dims(view) -> Iterable[str]:
    return getattr(view, "dimensions", view)


def max_cells(params: CostParams) -> int:
    """Largest possible number of fact cells: product of all cardinalities."""
    return math.prod(params.dimension_cardinalities.values())


def max_view_size(view, params: CostParams) -> int:
    """Key space of ``view`` (a CandidateView or an iterable of dimensions)."""
    return math.prod(params.cardinality(d) for d in _dims(view))


def _as_float(value: int, what: str) -> float:
    if value > sys.float_info.max:
        raise OverflowError(f"{what} ({value}) exceeds floating-point range")
    return float(value)


def cardenas_count(keys: int, n: int) -> float:
    """Expected distinct keys when ``n`` records fall uniformly on ``keys``."""
    if keys < 1:
        raise ValueError("key space must be >= 1")
    if n == 0:
        return 0.0
    m = _as_float(keys, "view key space")
    est = -m * math.expm1(n * math.log1p(-1.0 / m)) if keys > 1 else 1.0
    return min(est, m, float(n))


def yao_count(keys: int, total_cells: int, n: int) -> float:
    """Yao's expectation of distinct keys hit by ``n`` of ``total_cells``
    records split evenly across ``keys`` groups.

    The product runs over ``i = 1..n``; it is summed in log space so large
    fact counts do not underflow.
    """
    if keys < 1:
        raise ValueError("key space must be >= 1")
    if n == 0:
        return 0.0
    m = _as_float(keys, "view key space")
    N = _as_float(total_cells, "maximum cell count")
    if n > total_cells:
        warnings.warn(
            f"{n} facts exceed the {total_cells} possible cells; every group is hit",
            EstimateSaturationWarning,
            stacklevel=3,
        )
        return min(m, float(n))
    per_group = N / m
    # term i is (N - N/m - i + 1) / (N - i + 1) = 1 - (N/m) / (N - i + 1)
    if N - per_group - n + 1 <= 0:
        return min(m, float(n))
    log_prod = 0.0
    for start in range(1, n + 1, _YAO_CHUNK):
        i = np.arange(start, min(n, start + _YAO_CHUNK - 1) + 1, dtype=np.float64)
        log_prod += float(np.sum(np.log1p(-per_group / (N - i + 1.0))))
    est = -m * math.expm1(log_prod)
    return min(max(est, 0.0), m, float(n))


def cardenas_estimate(view, params: CostParams) -> float:
    return cardenas_count(max_view_size(view, params), params.fact_count)


def yao_estimate(view, params: CostParams) -> float:
    return yao_count(max_view_size(view, params), max_cells(params), params.fact_count)


def estimate_cells(view, params: CostParams, estimator: str = "cardenas") -> float:
    if estimator == "cardenas":
        return cardenas_estimate(view, params)
    if estimator == "yao":
        return yao_estimate(view, params)
    raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")


def view_byte_size(view, estimated_cells: float, params: CostParams) -> float:
    """Bytes to store the view: cells times the summed dimension sizes."""
    if estimated_cells < 0:
        raise ValueError("estimated cell count must be >= 0")
    return estimated_cells * sum(params.byte_size(d) for d in _dims(view))


def exact_cell_count(view, warehouse) -> int:
    """Distinct projections of the facts onto the view's dimensions."""
    schema = warehouse.schema
    dims = sorted(schema.dimension(d).name for d in _dims(view))
    return len({tuple(f.dimension_refs[d] for d in dims) for f in warehouse.facts})


def simulate_cell_count(keys: int, n: int, trials: int = 1000, seed=None) -> float:
    """Monte-Carlo mean of distinct keys hit by ``n`` uniform draws."""
    rng = np.random.default_rng(seed)
    if n == 0:
        return 0.0
    total = 0
    batch = max(1, min(trials, 4_000_000 // max(n, 1)))
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        draws = np.sort(rng.integers(0, keys, size=(b, n)), axis=1)
        total += int(b + np.count_nonzero(np.diff(draws, axis=1), axis=1).sum())
        done += b
    return total / trials


class ViewSizeEstimator(BaseEstimator):
    """Estimate cell counts and byte sizes of candidate views.

    Parameters
    ----------
    method : {"cardenas", "yao"}
    fact_count : int, optional
        Overrides the fact count read from the schema or warehouse.
    """

    def __init__(self, method="cardenas", fact_count=None):
        self.method = method
        self.fact_count = fact_count

    def fit(self, X, y=None):
        if self.method not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.method!r}; expected one of {ESTIMATORS}")
        if hasattr(X, "facts"):
            fact_count = len(X.facts) if self.fact_count is None else self.fact_count
            self.params_ = CostParams.from_schema(X.schema, fact_count)
        else:
            self.params_ = CostParams.from_schema(X, self.fact_count)
        return self

    def predict(self, views) -> np.ndarray:
        check_is_fitted(self, "params_")
        return np.array([estimate_cells(v, self.params_, self.method) for v in views])

    def predict_bytes(self, views) -> np.ndarray:
        cells = self.predict(views)
        return np.array([view_byte_size(v, c, self.params_) for v, c in zip(views, cells)])

"""Input validation helpers used by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_queries(X, *, allow_empty=False):
    """Return ``X`` as a list of parsed queries, rejecting anything else."""
    from .workload import DecisionQuery

    if isinstance(X, DecisionQuery):
        raise TypeError("expected a sequence of DecisionQuery, got a single query")
    queries = list(X)
    if not queries and not allow_empty:
        raise ValueError("workload must contain at least one query")
    for q in queries:
        if not isinstance(q, DecisionQuery):
            raise TypeError(f"expected DecisionQuery, got {type(q).__name__}")
    ids = [q.id for q in queries]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate query ids in workload: {dupes}")
    return queries


def check_binary_matrix(X):
    """2-D 0/1 integer matrix with at least one row."""
    X = check_array(X, dtype=np.int64, ensure_min_features=0)
    if X.size and not np.isin(X, (0, 1)).all():
        raise ValueError("query-attribute matrix must be binary")
    return X


def check_binary_row(row):
    row = np.asarray(row, dtype=np.int64)
    if row.ndim != 1:
        raise ValueError(f"expected a 1-D row, got shape {row.shape}")
    if not np.isin(row, (0, 1)).all():
        raise ValueError("matrix rows must be binary")
    return row


def check_fraction(value, name, *, low_open=True):
    if value is None:
        raise ValueError(f"{name} is required")
    value = float(value)
    lo_ok = value > 0 if low_open else value >= 0
    if not (lo_ok and value <= 1):
        raise ValueError(f"{name} must lie in {'(' if low_open else '['}0, 1], got {value}")
    return value


def check_non_negative(value, name):
    if value is None:
        raise ValueError(f"{name} is required")
    if value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value

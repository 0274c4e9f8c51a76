"""Random (view, warehouse, workload) fixtures shared by several test modules."""
from dataclasses import replace

import numpy as np

from xcube_advisor.clustering import CandidateView, answerable
from xcube_advisor.workload import Aggregation, DecisionQuery, Predicate
from xcube_advisor.xcube_store import DimensionSpec, GenerationSpec, Warehouse, generate_synthetic

OPS = ("sum", "count", "min", "max", "avg")
MEASURES = ("quantity", "amount")


def random_pair(seed, n_queries=6):
    """A small warehouse, one view over a random attribute subset, and
    queries that the view can answer."""
    rng = np.random.default_rng(seed)
    n_dims = int(rng.integers(2, 5))
    dims = tuple(
        DimensionSpec(f"d{i}", ((f"d{i}_a", 4), (f"d{i}_b", 6)), int(rng.integers(1, 7)))
        for i in range(n_dims)
    )
    spec = GenerationSpec(dims, int(rng.integers(0, 250)), value_domain=3,
                          awkward_values=bool(rng.integers(2)))
    w = generate_synthetic(spec, int(rng.integers(2**31)))
    schema = w.schema

    all_attrs = [a for d in dims for a in d.attribute_names]
    k = int(rng.integers(1, len(all_attrs) + 1))
    attrs = sorted(rng.choice(all_attrs, size=k, replace=False).tolist())
    wanted = {Aggregation(str(rng.choice(OPS)), str(rng.choice(MEASURES)))
              for _ in range(int(rng.integers(1, 4)))}
    stored = set()
    for agg in wanted:
        if agg.op == "avg":
            stored |= {Aggregation("sum", agg.measure), Aggregation("count", agg.measure)}
        else:
            stored.add(agg)
    view = CandidateView("v1", attrs, {schema.owner_of(a) for a in attrs}, stored)

    queries = []
    for i in range(n_queries):
        used = rng.choice(attrs, size=int(rng.integers(1, len(attrs) + 1)), replace=False)
        preds, group = [], []
        for a in used:
            owner = schema.owner_of(a)
            if rng.random() < 0.4:
                values = sorted({m.attribute_values[a] for m in w.members_of(owner)})
                preds.append(Predicate(owner, a, values[int(rng.integers(len(values)))]))
            else:
                group.append(str(a))
        aggs = [agg for agg in sorted(wanted) if rng.random() < 0.7] or [sorted(wanted)[0]]
        q = DecisionQuery(f"q{i + 1}", preds, group, aggs)
        assert answerable(q, view)
        queries.append(q)
    return view, w, queries


def with_facts(w, facts):
    """Copy of ``w`` holding ``facts`` instead of its own."""
    facts = tuple(facts)
    return Warehouse(replace(w.schema, fact_count=len(facts)), w.members, facts)

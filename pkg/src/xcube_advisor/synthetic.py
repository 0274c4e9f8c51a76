"""Ready-made sales warehouse and clustered workloads for demos and tests."""
from __future__ import annotations

import numpy as np

from .workload import Aggregation, DecisionQuery, Predicate
from .xcube_store import DimensionSpec, GenerationSpec, generate_synthetic

SALES_DIMENSIONS = (
    DimensionSpec("channels", (("channel_desc", 16), ("channel_class", 12)), 10),
    DimensionSpec("promotions", (("promo_category", 20), ("promo_subcategory", 24)), 20),
    DimensionSpec("customers", (("cust_first_name", 16), ("cust_city", 20),
                                ("cust_gender", 4)), 100),
    DimensionSpec("products", (("prod_category", 20), ("prod_subcategory", 24)), 50),
    DimensionSpec("times", (("month_name", 10), ("year", 4)), 30),
)

# (predicate attributes, group-by attributes); each template seeds one cluster.
SALES_TEMPLATES = (
    (("channel_desc", "cust_city"), ("cust_first_name", "channel_class")),
    (("prod_category",), ("year", "prod_subcategory")),
    (("promo_category",), ("channel_class",)),
    (("cust_gender",), ("cust_city",)),
)

_AGGREGATES = (
    Aggregation("sum", "quantity"),
    Aggregation("sum", "amount"),
    Aggregation("avg", "amount"),
    Aggregation("count", "quantity"),
    Aggregation("max", "amount"),
)


def sales_spec(fact_count=10_000, value_domain=5, awkward_values=False) -> GenerationSpec:
    return GenerationSpec(SALES_DIMENSIONS, fact_count, value_domain=value_domain,
                          awkward_values=awkward_values)


def make_sales_warehouse(fact_count=10_000, seed=0, **kwargs):
    return generate_synthetic(sales_spec(fact_count, **kwargs), seed)


def clustered_workload(warehouse, n_queries=10, templates=SALES_TEMPLATES, seed=0):
    """Queries cycling through ``templates``; predicate values are drawn from
    real member values so results are non-empty."""
    rng = np.random.default_rng(seed)
    schema = warehouse.schema
    queries = []
    for k in range(n_queries):
        pred_attrs, group_attrs = templates[k % len(templates)]
        preds = []
        for attr in pred_attrs:
            dim = schema.owner_of(attr)
            values = sorted({m.attribute_values[attr] for m in warehouse.members_of(dim)})
            preds.append(Predicate(dim, attr, values[int(rng.integers(len(values)))]))
        n_aggs = int(rng.integers(1, 3))
        picks = rng.choice(len(_AGGREGATES), size=n_aggs, replace=False)
        aggs = [_AGGREGATES[int(i)] for i in sorted(picks)]
        queries.append(DecisionQuery(f"q{k + 1}", preds, group_attrs, aggs))
    return queries

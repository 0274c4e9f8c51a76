"""Materialized view selection for XCube XML data warehouses."""

__version__ = "0.1.0"

from .bench import MaterializedView, answerable, bench_workload, evaluate, materialize
from .clustering import (
    CandidateView,
    Cluster,
    QueryClusterer,
    build_candidate_views,
    cluster_queries,
    dissim,
    sim,
)
from .cost_model import (
    CostParams,
    ViewSizeEstimator,
    cardenas_estimate,
    exact_cell_count,
    max_cells,
    max_view_size,
    view_byte_size,
    yao_estimate,
)
from .selection import SelectionConfig, SelectionResult, ViewSelector, greedy_select
from .workload import (
    DecisionQuery,
    QueryAttributeVectorizer,
    build_matrix,
    parse_query,
    parse_workload,
    representative_attributes,
)
from .xcube_store import (
    GenerationSpec,
    Warehouse,
    WarehouseSchema,
    generate_synthetic,
    parse_warehouse,
    serialize_warehouse,
)

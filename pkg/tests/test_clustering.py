import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone

from xcube_advisor.clustering import (
    ClusterPolicy,
    QueryClusterer,
    answerable,
    build_candidate_views,
    cluster_queries,
    delta_dissim,
    delta_sim,
    dissim,
    pairwise_similarity,
    sim,
)
from xcube_advisor.exceptions import SchemaValidationError
from xcube_advisor.workload import (
    Aggregation,
    DecisionQuery,
    Predicate,
    QueryAttributeMatrix,
    build_matrix,
)


def matrix(rows):
    cells = np.asarray(rows, dtype=np.int8)
    return QueryAttributeMatrix(tuple(f"q{i + 1}" for i in range(len(cells))),
                                tuple(f"a{j}" for j in range(cells.shape[1])), cells)


def components_oracle(X, policy):
    """Union-find over explicit pair loops, independent of scipy."""
    n = len(X)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            s = sum(delta_sim(a, b) for a, b in zip(X[i], X[j]))
            d = sum(delta_dissim(a, b) for a, b in zip(X[i], X[j]))
            linked = s > d if policy.kind == "sim-dominates" else s >= policy.theta
            if linked:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(sorted(g) for g in groups.values())


@pytest.mark.parametrize("x, y, s, d", [(1, 1, 1, 0), (1, 0, 0, 1), (0, 1, 0, 1), (0, 0, 0, 0)])
def test_delta_tables(x, y, s, d):
    assert delta_sim(x, y) == s
    assert delta_dissim(x, y) == d


def test_delta_rejects_non_bits():
    with pytest.raises(ValueError):
        delta_sim(2, 1)


def test_sim_examples():
    assert sim([1, 1, 1, 1], [1, 1, 1, 1]) == 4
    assert dissim([1, 1, 1, 1], [1, 1, 1, 1]) == 0
    assert sim([1, 0, 1, 0], [0, 1, 0, 1]) == 0
    assert dissim([1, 0, 1, 0], [0, 1, 0, 1]) == 4
    assert dissim([1, 1, 0, 0], [1, 0, 1, 0]) == 2


def test_sim_length_mismatch():
    with pytest.raises(ValueError, match="differ in length"):
        sim([1, 0], [1, 0, 1])


rows = st.integers(1, 10).flatmap(
    lambda p: st.tuples(arrays(np.int8, p, elements=st.integers(0, 1)),
                        arrays(np.int8, p, elements=st.integers(0, 1))))


@given(rows)
def test_sim_properties(pair):
    a, b = pair
    p = len(a)
    assert sim(a, b) == sim(b, a) == sum(delta_sim(x, y) for x, y in zip(a, b))
    assert dissim(a, b) == dissim(b, a) == sum(delta_dissim(x, y) for x, y in zip(a, b))
    assert 0 <= sim(a, b) + dissim(a, b) <= p
    assert dissim(a, a) == 0 and sim(a, a) == a.sum()


@given(arrays(np.int8, st.tuples(st.integers(1, 8), st.integers(1, 6)),
              elements=st.integers(0, 1)))
def test_pairwise_matches_scalar(X):
    S, D = pairwise_similarity(X)
    for i in range(len(X)):
        for j in range(len(X)):
            assert S[i, j] == sim(X[i], X[j])
            assert D[i, j] == dissim(X[i], X[j])


def test_snapshot_single_cluster(snapshot_workload):
    clusters = cluster_queries(build_matrix(snapshot_workload))
    assert len(clusters) == 1
    assert clusters[0].id == 1 and clusters[0].query_ids == ("q1", "q2")


def test_disjoint_queries_two_singletons():
    clusters = cluster_queries(matrix([[1, 1, 0, 0], [0, 0, 1, 1]]))
    assert [c.query_ids for c in clusters] == [("q1",), ("q2",)]


def test_identical_rows_one_cluster():
    assert len(cluster_queries(matrix([[1, 0, 1]] * 6))) == 1


def test_single_query():
    (c,) = cluster_queries(matrix([[1]]))
    assert c.query_ids == ("q1",)


def test_transitive_chain():
    # q1~q2 and q2~q3 but not q1~q3
    X = [[1, 1, 1, 1, 0, 0], [0, 1, 1, 1, 1, 0], [0, 0, 1, 1, 1, 1]]
    S, D = pairwise_similarity(np.array(X))
    assert S[0, 1] > D[0, 1] and S[1, 2] > D[1, 2]
    assert S[0, 2] <= D[0, 2]
    assert len(cluster_queries(matrix(X))) == 1


def test_threshold_policy():
    X = [[1, 1, 0, 0], [1, 0, 1, 1], [0, 0, 0, 1]]
    assert len(cluster_queries(matrix(X), "threshold:1")) == 1
    assert len(cluster_queries(matrix(X), "threshold:2")) == 3
    # sim-dominates separates q1 and q2 (sim 1 < dissim 3)
    assert len(cluster_queries(matrix(X))) == 3


def test_policy_parse():
    assert ClusterPolicy.parse("threshold:3") == ClusterPolicy("threshold", 3.0)
    assert str(ClusterPolicy.parse("threshold:3")) == "threshold:3"
    for bad in ("nope", "threshold:", "threshold:x"):
        with pytest.raises(ValueError):
            ClusterPolicy.parse(bad)


policies = st.sampled_from([ClusterPolicy(), ClusterPolicy("threshold", 1),
                            ClusterPolicy("threshold", 2)])
workloads = arrays(np.int8, st.tuples(st.integers(1, 12), st.integers(1, 7)),
                   elements=st.integers(0, 1)).filter(lambda X: (X.sum(axis=1) > 0).all())


@settings(max_examples=80, deadline=None)
@given(workloads, policies)
def test_clusters_match_oracle(X, policy):
    m = matrix(X)
    clusters = cluster_queries(m, policy)
    got = sorted(sorted(int(qid[1:]) - 1 for qid in c.query_ids) for c in clusters)
    assert got == components_oracle(X.tolist(), policy)
    # partition: disjoint, covering, ids 1..k in order of first member
    flat = [qid for c in clusters for qid in c.query_ids]
    assert sorted(flat) == sorted(m.queries)
    assert [c.id for c in clusters] == list(range(1, len(clusters) + 1))
    firsts = [m.queries.index(c.query_ids[0]) for c in clusters]
    assert firsts == sorted(firsts)


@settings(max_examples=50, deadline=None)
@given(workloads, policies, st.randoms(use_true_random=False))
def test_permutation_invariance(X, policy, rnd):
    m = matrix(X)
    order = list(range(len(X)))
    rnd.shuffle(order)
    shuffled = QueryAttributeMatrix(tuple(m.queries[i] for i in order), m.attributes,
                                    m.cells[order])
    as_sets = lambda cs: {frozenset(c.query_ids) for c in cs}
    assert as_sets(cluster_queries(m, policy)) == as_sets(cluster_queries(shuffled, policy))


def test_clusterer_sklearn_api():
    est = QueryClusterer(policy="threshold", threshold=2)
    assert clone(est).get_params() == {"policy": "threshold", "threshold": 2}
    labels = est.fit_predict(np.array([[1, 1, 0], [1, 1, 1], [0, 0, 1]]))
    assert labels.tolist() == [0, 0, 1]
    assert est.n_clusters_ == 2


def test_snapshot_candidate_view(snapshot_workload, snapshot_schema):
    m = build_matrix(snapshot_workload, snapshot_schema)
    (v,) = build_candidate_views(cluster_queries(m), snapshot_workload, snapshot_schema)
    assert v.id == "v1"
    assert v.attributes == {"channel_desc", "cust_city", "cust_first_name", "channel_class"}
    assert v.dimensions == {"channels", "customers"}
    assert v.measures == {Aggregation("sum", "quantity")}
    assert all(answerable(q, v) for q in snapshot_workload)


def test_avg_stored_as_sum_and_count(snapshot_schema):
    q = DecisionQuery("a", (), ("cust_city",), (("avg", "amount"),))
    (v,) = build_candidate_views(cluster_queries(build_matrix([q])), [q], snapshot_schema)
    assert v.measures == {Aggregation("sum", "amount"), Aggregation("count", "amount")}
    assert answerable(q, v)


def test_answerable_requires_attributes_and_measures(snapshot_schema):
    q1 = DecisionQuery("a", (Predicate("customers", "cust_city", "x"),), (), (("sum", "quantity"),))
    q2 = DecisionQuery("b", (), ("cust_city", "prod_category"), (("sum", "quantity"),))
    q3 = DecisionQuery("c", (), ("cust_city",), (("max", "quantity"),))
    (v,) = build_candidate_views(cluster_queries(build_matrix([q1])), [q1], snapshot_schema)
    assert answerable(q1, v)
    assert not answerable(q2, v)
    assert not answerable(q3, v)


def test_candidate_covering_all_attributes(snapshot_schema):
    attrs = [a for d in snapshot_schema.dimensions for a in d.attribute_names]
    q = DecisionQuery("all", (), tuple(attrs), (("count", "quantity"),))
    (v,) = build_candidate_views(cluster_queries(build_matrix([q])), [q], snapshot_schema)
    assert v.dimensions == set(snapshot_schema.dimension_names)


def test_candidate_unknown_attribute(snapshot_schema):
    q = DecisionQuery("x", (), ("mystery",), (("sum", "quantity"),))
    with pytest.raises(SchemaValidationError):
        build_candidate_views(cluster_queries(build_matrix([q])), [q], snapshot_schema)

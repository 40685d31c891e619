import io

import numpy as np
import pytest

from jobrec.graph import (
    EdgeRegistry,
    GraphError,
    GraphFormatError,
    HeteroTemporalGraph,
    NodeKind as K,
    default_registry,
    structurally_equal,
)

from conftest import micro_graph, random_graph


# -- registry -----------------------------------------------------------------


def test_default_registry_has_44_kinds_half_reverse():
    r = default_registry()
    assert len(r) == 44
    assert len(r.forward_kinds()) == 22
    for kind in r.kinds:
        rev = r.reverse(kind)
        assert r.reverse(rev) is kind
        assert rev.src == kind.dst and rev.dst == kind.src


def test_reverse_naming():
    r = default_registry()
    k = r.lookup(K.CANDIDATE, "has_skill", K.SKILL)
    assert r.reverse(k).name == "rev_has_skill"
    assert r.lookup(K.SKILL, "rev_has_skill", K.CANDIDATE) is r.reverse(k)


def test_candidate_job_edge_kind_unregistrable():
    r = EdgeRegistry()
    with pytest.raises(GraphError):
        r.register(K.CANDIDATE, "applied_to", K.JOB)
    with pytest.raises(GraphError):
        r.register(K.JOB, "wants", K.CANDIDATE)


def test_duplicate_registration_rejected():
    r = EdgeRegistry()
    r.register(K.SKILL, "has_concept", K.CONCEPT)
    with pytest.raises(GraphError):
        r.register(K.SKILL, "has_concept", K.CONCEPT)


# -- nodes ---------------------------------------------------------------------


def test_add_node_first_id_zero():
    g = HeteroTemporalGraph()
    assert g.add_node(K.SKILL) == 0


def test_add_candidate_without_timestamp_rejected():
    g = HeteroTemporalGraph()
    with pytest.raises(GraphError):
        g.add_node(K.CANDIDATE, 0)


def test_atemporal_kind_with_timestamp_rejected():
    g = HeteroTemporalGraph()
    with pytest.raises(GraphError):
        g.add_node(K.SKILL, 5)


def test_temporal_node_with_scalar_feature():
    g = HeteroTemporalGraph()
    v = g.add_node(K.TEMPORAL, 1000, feature=[7.0])
    assert g.feature_of(v).tolist() == [7.0]
    assert g.feature_dims[K.TEMPORAL] == 1


def test_feature_dim_constant_within_kind():
    g = HeteroTemporalGraph()
    g.add_node(K.CANDIDATE, 10, feature=[1.0, 2.0])
    with pytest.raises(GraphError):
        g.add_node(K.CANDIDATE, 11, feature=[1.0, 2.0, 3.0])
    with pytest.raises(GraphError):
        g.add_node(K.CANDIDATE, 12)


# -- edges --------------------------------------------------------------------


def test_add_edge_and_reverse_query():
    g, ids = micro_graph()
    r = g.registry
    rev = r.lookup(K.JOB, "rev_has_application", K.SHORTLIST)
    assert ids["shortlist"] in g.neighbors(ids["job"], rev)


def test_add_edge_idempotent():
    g, ids = micro_graph()
    kind = g.registry.lookup(K.SHORTLIST, "has_candidate", K.CANDIDATE)
    before = g.degree(ids["shortlist"], kind)
    g.add_edge(ids["shortlist"], kind, ids["candidate"])
    assert g.degree(ids["shortlist"], kind) == before


def test_add_edge_kind_mismatch():
    g, ids = micro_graph()
    kind = g.registry.lookup(K.SHORTLIST, "has_candidate", K.CANDIDATE)
    with pytest.raises(GraphError):
        g.add_edge(ids["shortlist"], kind, ids["job"])


def test_add_edge_dangling_endpoint():
    g, ids = micro_graph()
    kind = g.registry.lookup(K.SHORTLIST, "has_candidate", K.CANDIDATE)
    with pytest.raises(GraphError):
        g.add_edge(ids["shortlist"], kind, 999)


def test_neighbors_isolated_and_sorted():
    g = HeteroTemporalGraph()
    u = g.add_node(K.CANDIDATE, 5)
    kind = g.registry.lookup(K.CANDIDATE, "has_skill", K.SKILL)
    assert g.neighbors(u, kind).size == 0
    s_hi = g.add_node(K.SKILL)
    s_lo = g.add_node(K.SKILL)
    g.add_edge(u, kind, s_lo)
    g.add_edge(u, kind, s_hi)
    assert g.neighbors(u, kind).tolist() == sorted([s_lo, s_hi])


def test_neighbors_round_trip_reverse():
    rng = np.random.default_rng(0)
    g, *_ = random_graph(rng)
    for kind in g.registry.kinds:
        for v in range(g.num_nodes):
            if g.kind_of(v) != kind.src:
                continue
            for u in g.neighbors(v, kind):
                assert v in g.neighbors(int(u), g.registry.reverse(kind))


def test_frozen_neighbors_match_unfrozen():
    rng = np.random.default_rng(1)
    g, *_ = random_graph(rng)
    snapshot = {
        (kind.kind_id, v): g.neighbors(v, kind).tolist()
        for kind in g.registry.kinds
        for v in range(g.num_nodes)
    }
    g.freeze()
    for (kid, v), expected in snapshot.items():
        assert g.neighbors(v, g.registry.kinds[kid]).tolist() == expected


def test_frozen_graph_rejects_mutation():
    g, ids = micro_graph()
    g.freeze()
    with pytest.raises(GraphError):
        g.add_node(K.SKILL)


# -- fuzz invariants -------------------------------------------------------------


def test_fuzz_reverse_closure_and_kind_discipline():
    rng = np.random.default_rng(2)
    for _ in range(5):
        g, *_ = random_graph(rng, n_candidates=5, n_jobs=3, n_interactions=8)
        kinds = np.asarray([int(g.kind_of(v)) for v in range(g.num_nodes)])
        for kind in g.registry.kinds:
            for u, v in g.iter_edges(kind):
                assert kinds[u] == int(kind.src) and kinds[v] == int(kind.dst)
                assert u in g.neighbors(v, g.registry.reverse(kind))
        for v in range(g.num_nodes):
            timed = g.kind_of(v) in {K.CANDIDATE, K.JOB, K.SHORTLIST, K.TEMPORAL}
            assert timed == (g.timestamp_of(v) > 0)


# -- serialization ------------------------------------------------------------------


def test_save_load_empty_graph_needs_no_nodes(tmp_path):
    g = HeteroTemporalGraph()
    path = str(tmp_path / "g.bin")
    g.save(path)
    g2 = HeteroTemporalGraph.load(path)
    assert g2.num_nodes == 0
    assert structurally_equal(g, g2)


def test_save_load_random_graph_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    g, *_ = random_graph(rng, n_candidates=40, n_jobs=20, n_interactions=60)
    path = str(tmp_path / "g.bin")
    g.save(path)
    g2 = HeteroTemporalGraph.load(path)
    assert structurally_equal(g, g2)
    # snapshot bytes are reproducible
    path2 = str(tmp_path / "g2.bin")
    g2.save(path2)
    assert open(path, "rb").read() == open(path2, "rb").read()


def test_load_corrupted_header(tmp_path):
    path = tmp_path / "g.bin"
    path.write_bytes(b"XXXX" + b"\x00" * 32)
    with pytest.raises(GraphFormatError):
        HeteroTemporalGraph.load(str(path))


def test_load_truncated(tmp_path):
    rng = np.random.default_rng(4)
    g, *_ = random_graph(rng)
    path = str(tmp_path / "g.bin")
    g.save(path)
    blob = open(path, "rb").read()
    with open(path, "wb") as f:
        f.write(blob[: len(blob) - 20])
    with pytest.raises(GraphFormatError):
        HeteroTemporalGraph.load(path)


# -- dump / copies ---------------------------------------------------------------


def test_dump_jsonl():
    import json

    g, ids = micro_graph()
    nodes, edges = io.StringIO(), io.StringIO()
    g.dump_jsonl(nodes, edges)
    node_lines = [json.loads(line) for line in nodes.getvalue().splitlines()]
    assert len(node_lines) == g.num_nodes
    assert node_lines[ids["shortlist"]]["kind"] == "SHORTLIST"
    edge_lines = [json.loads(line) for line in edges.getvalue().splitlines()]
    assert {"src": ids["shortlist"], "relation": "has_candidate", "dst": ids["candidate"],
            "kind_id": 0} in edge_lines


def test_filtered_copy_drops_kind_edges():
    g, ids = micro_graph()
    g2 = g.filtered_copy(drop_edge_kinds_touching={K.TEMPORAL})
    at_time = g.registry.lookup(K.SHORTLIST, "at_time", K.TEMPORAL)
    assert g2.num_nodes == g.num_nodes
    assert g2.neighbors(ids["shortlist"], at_time).size == 0
    has_cand = g.registry.lookup(K.SHORTLIST, "has_candidate", K.CANDIDATE)
    assert g2.neighbors(ids["shortlist"], has_cand).tolist() == [ids["candidate"]]


def test_filtered_copy_zeroes_features():
    g, ids = micro_graph()
    g2 = g.filtered_copy(zero_feature_kinds={K.CANDIDATE, K.JOB})
    assert np.array_equal(g2.feature_of(ids["candidate"]), np.zeros(4))
    assert np.array_equal(g2.feature_of(ids["temporal"]), g.feature_of(ids["temporal"]))

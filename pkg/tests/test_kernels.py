"""Parity between the compiled kernels and the numpy fallback.

Integer outputs (sampling) must match exactly; float reductions to within
rounding-order noise.
"""

import numpy as np
import pytest

from jobrec import _kernels
from jobrec._kernels import fallback
from jobrec.graph import NodeKind
from jobrec.sampler import SamplingQuery, allowed_kind_ids, sample

from conftest import random_graph

compiled = pytest.importorskip("jobrec._kernels._core")


def test_segment_sum_parity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = int(rng.integers(0, 40))
        d = int(rng.integers(1, 8))
        n = int(rng.integers(1, 10))
        vals = rng.normal(size=(m, d))
        seg = rng.integers(0, n, size=m)
        a = compiled.segment_sum(vals, seg, n)
        b = fallback.segment_sum(vals, seg, n)
        assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


def test_index_add_parity_with_repeats():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n, m, d = 6, 15, 3
        idx = rng.integers(0, n, size=m)
        rows = rng.normal(size=(m, d))
        a = np.zeros((n, d))
        b = np.zeros((n, d))
        compiled.index_add_rows(a, idx, rows)
        fallback.index_add_rows(b, idx, rows)
        assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


def test_sample_subgraph_parity():
    rng = np.random.default_rng(2)
    for trial in range(30):
        g, cands, jobs, shortlists = random_graph(
            rng,
            n_candidates=int(rng.integers(2, 8)),
            n_jobs=int(rng.integers(2, 6)),
            n_interactions=int(rng.integers(3, 14)),
        )
        g.freeze()
        fz = g.frozen
        allowed = allowed_kind_ids(g.registry)
        kind_src = np.asarray([int(k.src) for k in g.registry.kinds], dtype=np.uint8)
        app = g.registry.lookup(NodeKind.SHORTLIST, "has_application", NodeKind.JOB)
        s = shortlists[int(rng.integers(0, len(shortlists)))]
        j = jobs[int(rng.integers(0, len(jobs)))]
        args = (
            fz.indptr,
            fz.indices,
            fz.kind_base,
            fz.node_kind,
            fz.node_ts,
            allowed,
            kind_src,
            11,  # shortlist kind code
            s,
            j,
            g.timestamp_of(s),
            int(rng.integers(1, 5)),
            app.kind_id,
            app.reverse_id,
        )
        got_c = compiled.sample_subgraph(*args)
        got_f = fallback.sample_subgraph(*args)
        for a, b in zip(got_c, got_f):
            assert np.array_equal(a, b)


def test_env_var_forces_fallback(monkeypatch):
    import importlib
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "import jobrec; print(jobrec.KERNEL_BACKEND)"],
        env={"JOBREC_PURE_PYTHON": "1", "PATH": "/usr/bin:/bin"},
        capture_output=True,
        text=True,
    )
    assert out.stdout.strip() == "python"
    _ = importlib, monkeypatch


def test_sample_through_public_api_backend_agnostic():
    """sample() output equals the fallback run on the same frozen graph."""
    rng = np.random.default_rng(3)
    g, cands, jobs, shortlists = random_graph(rng)
    g.freeze()
    q = SamplingQuery(shortlist=shortlists[0], job=jobs[0],
                      cutoff=g.timestamp_of(shortlists[0]), depth=4)
    via_api = sample(g, q)
    assert _kernels.BACKEND in ("cython", "python")
    fz = g.frozen
    allowed = allowed_kind_ids(g.registry)
    kind_src = np.asarray([int(k.src) for k in g.registry.kinds], dtype=np.uint8)
    app = g.registry.lookup(NodeKind.SHORTLIST, "has_application", NodeKind.JOB)
    nodes, ekind, esrc, edst = fallback.sample_subgraph(
        fz.indptr, fz.indices, fz.kind_base, fz.node_kind, fz.node_ts,
        allowed, kind_src, int(NodeKind.SHORTLIST), q.shortlist, q.job,
        q.cutoff, q.depth, app.kind_id, app.reverse_id,
    )
    assert np.array_equal(via_api.node_ids, nodes)
    total_edges = sum(s.size for s, _ in via_api.edges.values())
    assert total_edges == ekind.size

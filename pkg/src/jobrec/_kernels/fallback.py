"""Pure-numpy implementations of the hot kernels.

Semantics reference for the compiled twin in ``_core.pyx``: integer outputs
(sampling) are required to match the compiled kernel exactly, float outputs
(segment sums) to near machine precision.
"""

from __future__ import annotations

import numpy as np


def segment_sum(values: np.ndarray, seg: np.ndarray, num_segments: int) -> np.ndarray:
    """Sum rows of `values` into `num_segments` buckets given by `seg`.

    Buckets that receive no rows stay zero.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    seg = np.ascontiguousarray(seg, dtype=np.int64)
    out = np.zeros((num_segments, values.shape[1]), dtype=np.float64)
    if seg.size == 0:
        return out
    order = np.argsort(seg, kind="stable")
    sseg = seg[order]
    starts = np.flatnonzero(np.r_[True, sseg[1:] != sseg[:-1]])
    sums = np.add.reduceat(values[order], starts, axis=0)
    out[sseg[starts]] = sums
    return out


def index_add_rows(out: np.ndarray, idx: np.ndarray, rows: np.ndarray) -> None:
    """In-place `out[idx] += rows`, correct under repeated indices."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if idx.size == 0:
        return
    if idx.size == np.unique(idx).size:
        out[idx] += rows
    else:
        out += segment_sum(rows, idx, out.shape[0])


def _passes(kind: int, ts: int, cutoff: int, shortlist_code: int) -> bool:
    if ts == 0:
        return True
    if kind == shortlist_code:
        return ts < cutoff
    return ts <= cutoff


def sample_subgraph(
    indptr: np.ndarray,
    indices: np.ndarray,
    kind_base: np.ndarray,
    node_kind: np.ndarray,
    node_ts: np.ndarray,
    allowed_kinds: np.ndarray,
    kind_src_kind: np.ndarray,
    shortlist_code: int,
    anchor_s: int,
    anchor_j: int,
    cutoff: int,
    depth: int,
    conceal_kind: int,
    conceal_rev: int,
):
    """Temporally filtered breadth-first subgraph extraction.

    Expands `depth` levels from the two anchors over `allowed_kinds` only,
    admitting targets that pass the time filter (anchors are always in).
    Edges of kind `conceal_kind` leaving `anchor_s` (and their
    `conceal_rev` mirrors) are never traversed or emitted.

    Returns (nodes, edge_kind, edge_src, edge_dst): `nodes` are ascending
    global ids; edge arrays use local indices into `nodes`, grouped by
    ascending kind and sorted by (src, dst) within a kind.
    """
    n = node_kind.shape[0]
    included = np.zeros(n, dtype=bool)
    included[anchor_s] = True
    included[anchor_j] = True
    frontier = [int(anchor_s), int(anchor_j)]
    if anchor_s == anchor_j:
        frontier = [int(anchor_s)]

    for _ in range(depth):
        nxt: list[int] = []
        for v in frontier:
            vk = node_kind[v]
            for k in allowed_kinds:
                if kind_src_kind[k] != vk:
                    continue
                if v == anchor_s and k == conceal_kind:
                    continue
                base = kind_base[k]
                for u in indices[base + indptr[k, v] : base + indptr[k, v + 1]]:
                    u = int(u)
                    if included[u]:
                        continue
                    if _passes(node_kind[u], node_ts[u], cutoff, shortlist_code):
                        included[u] = True
                        nxt.append(u)
        if not nxt:
            break
        frontier = nxt

    nodes = np.flatnonzero(included).astype(np.int64)
    local = np.full(n, -1, dtype=np.int64)
    local[nodes] = np.arange(nodes.size, dtype=np.int64)

    ek: list[int] = []
    es: list[int] = []
    ed: list[int] = []
    for k in allowed_kinds:
        sk = kind_src_kind[k]
        base = kind_base[k]
        for i, g in enumerate(nodes):
            if node_kind[g] != sk:
                continue
            if g == anchor_s and k == conceal_kind:
                continue
            for u in indices[base + indptr[k, g] : base + indptr[k, g + 1]]:
                lu = local[u]
                if lu < 0:
                    continue
                if k == conceal_rev and u == anchor_s:
                    continue
                ek.append(int(k))
                es.append(i)
                ed.append(int(lu))

    return (
        nodes,
        np.asarray(ek, dtype=np.int64),
        np.asarray(es, dtype=np.int64),
        np.asarray(ed, dtype=np.int64),
    )

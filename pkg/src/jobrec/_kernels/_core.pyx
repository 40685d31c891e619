# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: subgraph extraction and segment scatter/sum.

Mirrors ``fallback.py``; integer outputs are bit-for-bit identical, float
sums follow the same per-bucket accumulation order.
"""

import numpy as np

cimport numpy as cnp
from libcpp.vector cimport vector

cnp.import_array()


def segment_sum(values, seg, Py_ssize_t num_segments):
    cdef double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef long long[::1] s = np.ascontiguousarray(seg, dtype=np.int64)
    out_arr = np.zeros((num_segments, v.shape[1]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t m = s.shape[0]
    cdef Py_ssize_t d = v.shape[1]
    cdef Py_ssize_t e, c
    cdef long long t
    with nogil:
        for e in range(m):
            t = s[e]
            for c in range(d):
                out[t, c] += v[e, c]
    return out_arr


def index_add_rows(out, idx, rows):
    cdef double[:, ::1] o = out
    cdef long long[::1] i = np.ascontiguousarray(idx, dtype=np.int64)
    cdef double[:, ::1] r = np.ascontiguousarray(rows, dtype=np.float64)
    cdef Py_ssize_t m = i.shape[0]
    cdef Py_ssize_t d = o.shape[1]
    cdef Py_ssize_t e, c
    cdef long long t
    with nogil:
        for e in range(m):
            t = i[e]
            for c in range(d):
                o[t, c] += r[e, c]


cdef inline bint _passes(unsigned char kind, long long ts, long long cutoff,
                         int shortlist_code) noexcept nogil:
    if ts == 0:
        return True
    if kind == <unsigned char> shortlist_code:
        return ts < cutoff
    return ts <= cutoff


def sample_subgraph(
    long long[:, ::1] indptr,
    long long[::1] indices,
    long long[::1] kind_base,
    unsigned char[::1] node_kind,
    long long[::1] node_ts,
    long long[::1] allowed_kinds,
    unsigned char[::1] kind_src_kind,
    int shortlist_code,
    long long anchor_s,
    long long anchor_j,
    long long cutoff,
    int depth,
    long long conceal_kind,
    long long conceal_rev,
):
    cdef Py_ssize_t n = node_kind.shape[0]
    cdef Py_ssize_t a = allowed_kinds.shape[0]

    inc_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] included = inc_arr
    cdef vector[long long] frontier, nxt
    cdef vector[long long] ek, es, ed
    cdef long long v, u, k, base, p, lu, g
    cdef Py_ssize_t ai, level, fi, ni
    cdef unsigned char vk, sk

    included[anchor_s] = 1
    included[anchor_j] = 1
    frontier.push_back(anchor_s)
    if anchor_j != anchor_s:
        frontier.push_back(anchor_j)

    with nogil:
        for level in range(depth):
            nxt.clear()
            for fi in range(<Py_ssize_t> frontier.size()):
                v = frontier[fi]
                vk = node_kind[v]
                for ai in range(a):
                    k = allowed_kinds[ai]
                    if kind_src_kind[k] != vk:
                        continue
                    if v == anchor_s and k == conceal_kind:
                        continue
                    base = kind_base[k]
                    for p in range(indptr[k, v], indptr[k, v + 1]):
                        u = indices[base + p]
                        if included[u]:
                            continue
                        if _passes(node_kind[u], node_ts[u], cutoff, shortlist_code):
                            included[u] = 1
                            nxt.push_back(u)
            if nxt.empty():
                break
            frontier.swap(nxt)

    nodes = np.flatnonzero(inc_arr).astype(np.int64)
    local_arr = np.full(n, -1, dtype=np.int64)
    local_arr[nodes] = np.arange(nodes.size, dtype=np.int64)
    cdef long long[::1] local = local_arr
    cdef long long[::1] node_view = nodes
    cdef Py_ssize_t n_inc = nodes.size

    with nogil:
        for ai in range(a):
            k = allowed_kinds[ai]
            sk = kind_src_kind[k]
            base = kind_base[k]
            for ni in range(n_inc):
                g = node_view[ni]
                if node_kind[g] != sk:
                    continue
                if g == anchor_s and k == conceal_kind:
                    continue
                for p in range(indptr[k, g], indptr[k, g + 1]):
                    u = indices[base + p]
                    lu = local[u]
                    if lu < 0:
                        continue
                    if k == conceal_rev and u == anchor_s:
                        continue
                    ek.push_back(k)
                    es.push_back(ni)
                    ed.push_back(lu)

    m = ek.size()
    ek_arr = np.empty(m, dtype=np.int64)
    es_arr = np.empty(m, dtype=np.int64)
    ed_arr = np.empty(m, dtype=np.int64)
    cdef long long[::1] ekv = ek_arr
    cdef long long[::1] esv = es_arr
    cdef long long[::1] edv = ed_arr
    cdef Py_ssize_t e
    with nogil:
        for e in range(<Py_ssize_t> m):
            ekv[e] = ek[e]
            esv[e] = es[e]
            edv[e] = ed[e]
    return nodes, ek_arr, es_arr, ed_arr

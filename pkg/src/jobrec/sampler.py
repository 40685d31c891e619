"""Deterministic temporal selective subgraph sampling.

Expansion starts from an anchor (shortlist, job) pair and walks `depth`
levels (four by default), following only edge kinds whose source is a
candidate, shortlist, or job node — attribute and month nodes are dead
ends, which is what keeps the frontier from exploding through high-fanout
hubs while still reaching co-application structure four hops out.

Everything reachable and anterior to the anchor's timestamp is taken: no
subsampling, so two calls with the same query return the same subgraph.
The anchor shortlist's application edges never appear in the output; the
scored job is present purely as an anchor node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graph import EdgeRegistry, GraphError, HeteroTemporalGraph, NodeKind

SOURCE_KINDS = frozenset({NodeKind.CANDIDATE, NodeKind.SHORTLIST, NodeKind.JOB})


class SamplerError(ValueError):
    """Invalid query (wrong anchor kinds, bad depth, unknown ids)."""


@dataclass(frozen=True)
class SamplingQuery:
    """Anchor pair plus the cutoff; cutoff defaults to the shortlist's timestamp."""

    shortlist: int
    job: int
    cutoff: int
    depth: int = 4


@dataclass
class SampledSubgraph:
    """Locally re-indexed subgraph; local ids follow ascending global id.

    `edges` maps edge-kind id to (src_local, dst_local) arrays sorted by
    (src, dst); the constructor canonicalizes whatever order it is given,
    so scores downstream cannot depend on edge insertion order.
    """

    node_ids: np.ndarray
    kinds: np.ndarray
    timestamps: np.ndarray
    edges: dict[int, tuple[np.ndarray, np.ndarray]]
    anchor_shortlist: int  # local id
    anchor_job: int  # local id
    graph: HeteroTemporalGraph
    _row_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        canon = {}
        for k, (src, dst) in self.edges.items():
            src = np.asarray(src, dtype=np.int64)
            dst = np.asarray(dst, dtype=np.int64)
            order = np.lexsort((dst, src))
            canon[k] = (src[order], dst[order])
        self.edges = canon

    @property
    def num_nodes(self) -> int:
        return int(self.node_ids.size)

    def rows_of_kind(self, kind: NodeKind) -> np.ndarray:
        key = ("rows", int(kind))
        if key not in self._row_cache:
            self._row_cache[key] = np.flatnonzero(self.kinds == int(kind)).astype(np.int64)
        return self._row_cache[key]

    def features_of_kind(self, kind: NodeKind) -> np.ndarray:
        """Stacked feature rows for local nodes of `kind` (same order as rows_of_kind)."""
        key = ("feat", int(kind))
        if key not in self._row_cache:
            rows = self.rows_of_kind(kind)
            feats = [self.graph.feature_of(int(self.node_ids[i])) for i in rows]
            dim = self.graph.feature_dims.get(kind, 0)
            if any(f is None for f in feats):
                raise SamplerError(f"{kind.name} node without a feature in subgraph")
            mat = np.stack(feats) if feats else np.empty((0, dim))
            self._row_cache[key] = mat
        return self._row_cache[key]

    def canonical_form(self):
        """Hashable full description, for equality checks against the oracle."""
        return (
            tuple(int(g) for g in self.node_ids),
            tuple(
                (k, tuple(map(int, s)), tuple(map(int, d)))
                for k, (s, d) in sorted(self.edges.items())
                if s.size
            ),
            self.anchor_shortlist,
            self.anchor_job,
        )


def allowed_kind_ids(registry: EdgeRegistry) -> np.ndarray:
    """Edge kinds (forward or reverse) whose source is candidate/shortlist/job."""
    return np.asarray(
        [k.kind_id for k in registry.kinds if k.src in SOURCE_KINDS], dtype=np.int64
    )


def all_kind_ids(registry: EdgeRegistry) -> np.ndarray:
    return np.arange(len(registry.kinds), dtype=np.int64)


@dataclass(frozen=True)
class SamplingConfig:
    """How subgraphs are extracted; `selective=False` is the depth-2 all-kind mode."""

    depth: int = 4
    selective: bool = True

    def kind_ids(self, registry: EdgeRegistry) -> np.ndarray:
        return allowed_kind_ids(registry) if self.selective else all_kind_ids(registry)


def passes_time(kind: NodeKind, timestamp: int, cutoff: int) -> bool:
    """Atemporal nodes always pass; shortlists must be strictly anterior.

    The strict rule for shortlists blocks leakage from interactions batched
    at the same instant; candidates, jobs, and month nodes may share the
    anchor's timestamp.
    """
    if timestamp == 0:
        return True
    if kind == NodeKind.SHORTLIST:
        return timestamp < cutoff
    return timestamp <= cutoff


def _prep(graph: HeteroTemporalGraph, allowed: np.ndarray):
    """Per-graph cached arrays handed to the sampling kernel."""
    key = ("samp", tuple(int(k) for k in allowed))
    cached = graph._caches.get(key)
    if cached is not None:
        return cached
    registry = graph.registry
    kind_src = np.asarray([int(k.src) for k in registry.kinds], dtype=np.uint8)
    try:
        app = registry.lookup(NodeKind.SHORTLIST, "has_application", NodeKind.JOB)
        conceal, conceal_rev = app.kind_id, app.reverse_id
    except GraphError:
        conceal, conceal_rev = -1, -1
    cached = (kind_src, conceal, conceal_rev)
    graph._caches[key] = cached
    return cached


def sample(
    graph: HeteroTemporalGraph,
    query: SamplingQuery,
    allowed: np.ndarray | None = None,
) -> SampledSubgraph:
    """Extract the temporally filtered subgraph around the query's anchors."""
    if graph.frozen is None:
        raise SamplerError("sample requires a frozen graph")
    if query.depth < 1:
        raise SamplerError("sampling depth must be >= 1")
    fz = graph.frozen
    n = fz.node_kind.shape[0]
    if not (0 <= query.shortlist < n and 0 <= query.job < n):
        raise SamplerError("unknown anchor id")
    if fz.node_kind[query.shortlist] != int(NodeKind.SHORTLIST):
        raise SamplerError("anchor shortlist is not a shortlist node")
    if fz.node_kind[query.job] != int(NodeKind.JOB):
        raise SamplerError("anchor job is not a job node")
    if allowed is None:
        allowed = allowed_kind_ids(graph.registry)
    kind_src, conceal, conceal_rev = _prep(graph, allowed)
    nodes, ekind, esrc, edst = _kernels.sample_subgraph(
        fz.indptr,
        fz.indices,
        fz.kind_base,
        fz.node_kind,
        fz.node_ts,
        np.ascontiguousarray(allowed, dtype=np.int64),
        kind_src,
        int(NodeKind.SHORTLIST),
        query.shortlist,
        query.job,
        query.cutoff,
        query.depth,
        conceal,
        conceal_rev,
    )
    edges: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    if ekind.size:
        bounds = np.searchsorted(ekind, np.arange(len(graph.registry.kinds) + 1))
        for k in np.unique(ekind):
            lo, hi = bounds[k], bounds[k + 1]
            edges[int(k)] = (esrc[lo:hi], edst[lo:hi])
    return SampledSubgraph(
        node_ids=nodes,
        kinds=fz.node_kind[nodes].astype(np.int64),
        timestamps=fz.node_ts[nodes],
        edges=edges,
        anchor_shortlist=int(np.searchsorted(nodes, query.shortlist)),
        anchor_job=int(np.searchsorted(nodes, query.job)),
        graph=graph,
    )


def oracle_sample(
    graph: HeteroTemporalGraph,
    query: SamplingQuery,
    allowed: np.ndarray | None = None,
) -> SampledSubgraph:
    """Naive set-based reference implementation of `sample` (small graphs only)."""
    if query.depth < 1:
        raise SamplerError("sampling depth must be >= 1")
    registry = graph.registry
    if graph.kind_of(query.shortlist) != NodeKind.SHORTLIST:
        raise SamplerError("anchor shortlist is not a shortlist node")
    if graph.kind_of(query.job) != NodeKind.JOB:
        raise SamplerError("anchor job is not a job node")
    if allowed is None:
        allowed_set = {k.kind_id for k in registry.kinds if k.src in SOURCE_KINDS}
    else:
        allowed_set = {int(k) for k in allowed}
    try:
        app = registry.lookup(NodeKind.SHORTLIST, "has_application", NodeKind.JOB)
        conceal, conceal_rev = app.kind_id, app.reverse_id
    except GraphError:
        conceal, conceal_rev = -1, -1

    def ok(v: int) -> bool:
        return passes_time(graph.kind_of(v), graph.timestamp_of(v), query.cutoff)

    included = {query.shortlist, query.job}
    frontier = set(included)
    for _ in range(query.depth):
        nxt: set[int] = set()
        for v in frontier:
            for kind in registry.kinds:
                if kind.kind_id not in allowed_set or kind.src != graph.kind_of(v):
                    continue
                if v == query.shortlist and kind.kind_id == conceal:
                    continue
                for u in graph.neighbors(v, kind):
                    u = int(u)
                    if u not in included and ok(u):
                        nxt.add(u)
        included |= nxt
        frontier = nxt
        if not frontier:
            break

    nodes = sorted(included)
    local = {g: i for i, g in enumerate(nodes)}
    edges: dict[int, tuple[list[int], list[int]]] = {}
    for kind in registry.kinds:
        if kind.kind_id not in allowed_set:
            continue
        src_list: list[int] = []
        dst_list: list[int] = []
        for g in nodes:
            if graph.kind_of(g) != kind.src:
                continue
            if g == query.shortlist and kind.kind_id == conceal:
                continue
            for u in graph.neighbors(g, kind):
                u = int(u)
                if u not in local:
                    continue
                if kind.kind_id == conceal_rev and u == query.shortlist:
                    continue
                src_list.append(local[g])
                dst_list.append(local[u])
        if src_list:
            edges[kind.kind_id] = (
                np.asarray(src_list, dtype=np.int64),
                np.asarray(dst_list, dtype=np.int64),
            )
    return SampledSubgraph(
        node_ids=np.asarray(nodes, dtype=np.int64),
        kinds=np.asarray([int(graph.kind_of(g)) for g in nodes], dtype=np.int64),
        timestamps=np.asarray([graph.timestamp_of(g) for g in nodes], dtype=np.int64),
        edges=edges,
        anchor_shortlist=local[query.shortlist],
        anchor_job=local[query.job],
        graph=graph,
    )


def leakage_violations(sub: SampledSubgraph, cutoff: int) -> int:
    """Count non-anchor nodes that break the temporal filter (must be zero)."""
    kinds = sub.kinds
    ts = sub.timestamps
    strict = (kinds == int(NodeKind.SHORTLIST)) & (ts >= cutoff)
    loose = (kinds != int(NodeKind.SHORTLIST)) & (ts != 0) & (ts > cutoff)
    bad = strict | loose
    bad[sub.anchor_shortlist] = False
    bad[sub.anchor_job] = False
    return int(np.count_nonzero(bad))


def concealment_violations(sub: SampledSubgraph, graph: HeteroTemporalGraph) -> int:
    """Count anchor-shortlist application edges present in the output (must be zero)."""
    registry = graph.registry
    try:
        app = registry.lookup(NodeKind.SHORTLIST, "has_application", NodeKind.JOB)
    except GraphError:
        return 0
    count = 0
    s = sub.anchor_shortlist
    fwd = sub.edges.get(app.kind_id)
    if fwd is not None:
        count += int(np.count_nonzero(fwd[0] == s))
    rev = sub.edges.get(app.reverse_id)
    if rev is not None:
        count += int(np.count_nonzero(rev[1] == s))
    return count

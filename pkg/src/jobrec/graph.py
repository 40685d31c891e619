"""Heterogeneous temporal graph store.

Nodes are typed, carry a creation timestamp (0 for atemporal kinds) and an
optional fixed-width feature vector. Edges are typed triples; adding a
forward edge always adds its reverse, and candidates are never wired
directly to jobs — interactions go through shortlist nodes.

The store has two phases: a mutable build phase, and a frozen phase that
exposes per-edge-kind CSR arrays for the sampling kernels.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class GraphError(ValueError):
    """Constraint violation while building or querying a graph."""


class GraphFormatError(ValueError):
    """Bad magic, version, or truncation in a graph snapshot."""


class NodeKind(IntEnum):
    CANDIDATE = 0
    JOB = 1
    COMPANY = 2
    SALARY = 3
    EXPERIENCE = 4
    SKILL = 5
    CONCEPT = 6
    CONTRACT = 7
    LOCATION = 8
    CATEGORY = 9
    ORIGIN = 10
    SHORTLIST = 11
    TEMPORAL = 12


TIMED_KINDS = frozenset(
    {NodeKind.CANDIDATE, NodeKind.JOB, NodeKind.SHORTLIST, NodeKind.TEMPORAL}
)


@dataclass(frozen=True)
class EdgeKind:
    """A typed relation; `kind_id` indexes the registry, `reverse_id` its mirror."""

    kind_id: int
    src: NodeKind
    name: str
    dst: NodeKind
    reverse_id: int

    @property
    def triple(self) -> tuple[str, str, str]:
        return (self.src.name, self.name, self.dst.name)


class EdgeRegistry:
    """The set of legal edge kinds; every registration creates a reverse twin."""

    def __init__(self):
        self.kinds: list[EdgeKind] = []
        self._by_triple: dict[tuple[NodeKind, str, NodeKind], int] = {}

    def register(self, src: NodeKind, name: str, dst: NodeKind) -> EdgeKind:
        """Register (src, name, dst) and its `rev_`-prefixed reverse; returns the forward kind."""
        if {src, dst} == {NodeKind.CANDIDATE, NodeKind.JOB}:
            raise GraphError("candidate-job edges are not registrable; use a shortlist node")
        key = (src, name, dst)
        if key in self._by_triple:
            raise GraphError(f"edge kind already registered: {key}")
        fid = len(self.kinds)
        rid = fid + 1
        fwd = EdgeKind(fid, src, name, dst, rid)
        rev = EdgeKind(rid, dst, "rev_" + name, src, fid)
        rkey = (dst, rev.name, src)
        if rkey in self._by_triple:
            raise GraphError(f"reverse edge kind collides: {rkey}")
        self.kinds.append(fwd)
        self.kinds.append(rev)
        self._by_triple[key] = fid
        self._by_triple[rkey] = rid
        return fwd

    def lookup(self, src: NodeKind, name: str, dst: NodeKind) -> EdgeKind:
        kid = self._by_triple.get((src, name, dst))
        if kid is None:
            raise GraphError(f"unknown edge kind ({src.name}, {name}, {dst.name})")
        return self.kinds[kid]

    def reverse(self, kind: EdgeKind) -> EdgeKind:
        return self.kinds[kind.reverse_id]

    def forward_kinds(self) -> list[EdgeKind]:
        """Kinds registered directly (even ids); reverses sit at odd ids."""
        return [k for k in self.kinds if k.kind_id % 2 == 0]

    def __len__(self) -> int:
        return len(self.kinds)


def default_registry() -> EdgeRegistry:
    """22 forward relations (44 kinds with reverses) covering the recruiting domain."""
    r = EdgeRegistry()
    K = NodeKind
    r.register(K.SHORTLIST, "has_candidate", K.CANDIDATE)
    r.register(K.SHORTLIST, "has_application", K.JOB)
    r.register(K.SHORTLIST, "at_time", K.TEMPORAL)
    r.register(K.CANDIDATE, "at_time", K.TEMPORAL)
    r.register(K.CANDIDATE, "has_skill", K.SKILL)
    r.register(K.CANDIDATE, "wants_salary", K.SALARY)
    r.register(K.CANDIDATE, "has_experience", K.EXPERIENCE)
    r.register(K.CANDIDATE, "wants_contract", K.CONTRACT)
    r.register(K.CANDIDATE, "at_location", K.LOCATION)
    r.register(K.CANDIDATE, "has_category", K.CATEGORY)
    r.register(K.CANDIDATE, "has_origin", K.ORIGIN)
    r.register(K.CANDIDATE, "prev_company", K.COMPANY)
    r.register(K.JOB, "at_time", K.TEMPORAL)
    r.register(K.JOB, "requires_skill", K.SKILL)
    r.register(K.JOB, "offers_salary", K.SALARY)
    r.register(K.JOB, "has_experience", K.EXPERIENCE)
    r.register(K.JOB, "has_contract", K.CONTRACT)
    r.register(K.JOB, "at_location", K.LOCATION)
    r.register(K.JOB, "has_category", K.CATEGORY)
    r.register(K.JOB, "at_company", K.COMPANY)
    r.register(K.SKILL, "has_concept", K.CONCEPT)
    r.register(K.CONCEPT, "subconcept_of", K.CONCEPT)
    return r


@dataclass
class FrozenIndex:
    """CSR adjacency per edge kind, laid out for the sampling kernels."""

    indptr: np.ndarray  # (K, n+1) int64
    indices: np.ndarray  # concatenated int64
    kind_base: np.ndarray  # (K,) int64 offset of each kind inside `indices`
    node_kind: np.ndarray  # (n,) uint8
    node_ts: np.ndarray  # (n,) int64


class HeteroTemporalGraph:
    """Typed-node / typed-edge adjacency store with per-node timestamps."""

    def __init__(self, registry: EdgeRegistry | None = None):
        self.registry = registry if registry is not None else default_registry()
        self._kinds: list[int] = []
        self._ts: list[int] = []
        self._feat_row: list[int] = []
        self._features: dict[int, list[np.ndarray]] = {}
        self.feature_dims: dict[NodeKind, int] = {}
        self._adj: list[dict[int, set[int]]] = [dict() for _ in self.registry.kinds]
        self.frozen: FrozenIndex | None = None
        self._caches: dict = {}

    # -- nodes ------------------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return len(self._kinds)

    def add_node(self, kind: NodeKind, timestamp: int = 0, feature=None) -> int:
        if self.frozen is not None:
            raise GraphError("graph is frozen")
        timestamp = int(timestamp)
        if kind in TIMED_KINDS:
            if timestamp <= 0:
                raise GraphError(f"{kind.name} nodes require a positive timestamp")
        elif timestamp != 0:
            raise GraphError(f"{kind.name} nodes are atemporal (timestamp must be 0)")
        row = -1
        if feature is not None:
            vec = np.asarray(feature, dtype=np.float64).reshape(-1)
            dim = self.feature_dims.setdefault(kind, vec.shape[0])
            if vec.shape[0] != dim:
                raise GraphError(
                    f"{kind.name} feature dim {vec.shape[0]} != registered {dim}"
                )
            rows = self._features.setdefault(int(kind), [])
            row = len(rows)
            rows.append(vec)
        elif kind in self.feature_dims:
            raise GraphError(f"{kind.name} nodes carry features of dim {self.feature_dims[kind]}")
        self._kinds.append(int(kind))
        self._ts.append(timestamp)
        self._feat_row.append(row)
        return len(self._kinds) - 1

    def kind_of(self, v: int) -> NodeKind:
        return NodeKind(self._kinds[v])

    def timestamp_of(self, v: int) -> int:
        return self._ts[v]

    def feature_of(self, v: int) -> np.ndarray | None:
        row = self._feat_row[v]
        if row < 0:
            return None
        return self._features[self._kinds[v]][row]

    def nodes_of_kind(self, kind: NodeKind) -> np.ndarray:
        return np.flatnonzero(np.asarray(self._kinds) == int(kind)).astype(np.int64)

    # -- edges ------------------------------------------------------------

    def _check_node(self, v: int) -> None:
        if not (0 <= v < len(self._kinds)):
            raise GraphError(f"unknown node id {v}")

    def add_edge(self, u: int, kind: EdgeKind, v: int) -> None:
        """Insert (u, kind, v) and its reverse; duplicate insertions are no-ops."""
        if self.frozen is not None:
            raise GraphError("graph is frozen")
        self._check_node(u)
        self._check_node(v)
        if self._kinds[u] != int(kind.src) or self._kinds[v] != int(kind.dst):
            raise GraphError(
                f"edge kind {kind.triple} does not match node kinds "
                f"({self.kind_of(u).name}, {self.kind_of(v).name})"
            )
        self._adj[kind.kind_id].setdefault(u, set()).add(v)
        self._adj[kind.reverse_id].setdefault(v, set()).add(u)

    def neighbors(self, v: int, kind: EdgeKind) -> np.ndarray:
        """Destinations of kind-edges from v, ascending node id."""
        self._check_node(v)
        if self.frozen is not None:
            k = kind.kind_id
            base = self.frozen.kind_base[k]
            lo = self.frozen.indptr[k, v]
            hi = self.frozen.indptr[k, v + 1]
            return self.frozen.indices[base + lo : base + hi]
        return np.asarray(sorted(self._adj[kind.kind_id].get(v, ())), dtype=np.int64)

    def degree(self, v: int, kind: EdgeKind) -> int:
        return int(self.neighbors(v, kind).size)

    def iter_edges(self, kind: EdgeKind):
        """Yield (u, v) pairs of one kind in ascending (u, v) order."""
        adj = self._adj[kind.kind_id]
        for u in sorted(adj):
            for v in sorted(adj[u]):
                yield u, v

    def num_edges(self) -> int:
        """Directed edge count over all kinds (each pair counted twice)."""
        return sum(len(s) for adj in self._adj for s in adj.values())

    # -- freezing ----------------------------------------------------------

    def freeze(self) -> "HeteroTemporalGraph":
        """Build CSR indexes; the graph becomes immutable and cheap to sample."""
        if self.frozen is not None:
            return self
        n = self.num_nodes
        K = len(self.registry.kinds)
        indptr = np.zeros((K, n + 1), dtype=np.int64)
        chunks: list[np.ndarray] = []
        kind_base = np.zeros(K, dtype=np.int64)
        total = 0
        for k in range(K):
            kind_base[k] = total
            adj = self._adj[k]
            counts = np.zeros(n + 1, dtype=np.int64)
            flat: list[np.ndarray] = []
            for u in sorted(adj):
                dsts = np.asarray(sorted(adj[u]), dtype=np.int64)
                counts[u + 1] = dsts.size
                flat.append(dsts)
            np.cumsum(counts, out=counts)
            indptr[k] = counts
            if flat:
                arr = np.concatenate(flat)
            else:
                arr = np.empty(0, dtype=np.int64)
            chunks.append(arr)
            total += arr.size
        indices = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
        self.frozen = FrozenIndex(
            indptr=indptr,
            indices=indices,
            kind_base=kind_base,
            node_kind=np.asarray(self._kinds, dtype=np.uint8),
            node_ts=np.asarray(self._ts, dtype=np.int64),
        )
        return self

    # -- ablation copies ----------------------------------------------------

    def filtered_copy(
        self,
        drop_edge_kinds_touching: set[NodeKind] = frozenset(),
        zero_feature_kinds: set[NodeKind] = frozenset(),
    ) -> "HeteroTemporalGraph":
        """Same nodes, minus edges touching the given kinds; optionally zeroed features."""
        g = HeteroTemporalGraph(self.registry)
        for v in range(self.num_nodes):
            feat = self.feature_of(v)
            if feat is not None:
                kind = self.kind_of(v)
                if kind in zero_feature_kinds:
                    feat = np.zeros_like(feat)
            g.add_node(self.kind_of(v), self._ts[v], feat)
        for kind in self.registry.forward_kinds():
            if kind.src in drop_edge_kinds_touching or kind.dst in drop_edge_kinds_touching:
                continue
            for u, v in self.iter_edges(kind):
                g.add_edge(u, kind, v)
        return g

    # -- serialization -------------------------------------------------------

    SNAPSHOT_MAGIC = b"JRGS"
    SNAPSHOT_VERSION = 1

    def save(self, path: str) -> None:
        meta = {
            "registry": [
                [k.src.name, k.name, k.dst.name] for k in self.registry.forward_kinds()
            ],
            "feature_dims": {k.name: d for k, d in self.feature_dims.items()},
            "num_nodes": self.num_nodes,
        }
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as f:
            f.write(self.SNAPSHOT_MAGIC)
            f.write(struct.pack("<II", self.SNAPSHOT_VERSION, len(blob)))
            f.write(blob)
            f.write(np.asarray(self._kinds, dtype=np.uint8).tobytes())
            f.write(np.asarray(self._ts, dtype="<i8").tobytes())
            featured = sorted(self._features)
            f.write(struct.pack("<I", len(featured)))
            for kcode in featured:
                rows = self._features[kcode]
                ids = [
                    v
                    for v in range(self.num_nodes)
                    if self._kinds[v] == kcode and self._feat_row[v] >= 0
                ]
                dim = self.feature_dims[NodeKind(kcode)]
                f.write(struct.pack("<BIQ", kcode, dim, len(ids)))
                f.write(np.asarray(ids, dtype="<i8").tobytes())
                mat = np.stack([rows[self._feat_row[v]] for v in ids]) if ids else np.empty((0, dim))
                f.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())
            fwd = self.registry.forward_kinds()
            f.write(struct.pack("<I", len(fwd)))
            for kind in fwd:
                pairs = list(self.iter_edges(kind))
                f.write(struct.pack("<IQ", kind.kind_id, len(pairs)))
                if pairs:
                    arr = np.asarray(pairs, dtype="<i8")
                    f.write(arr[:, 0].tobytes())
                    f.write(arr[:, 1].tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "HeteroTemporalGraph":
        with open(path, "rb") as f:
            blob = f.read()
        if blob[:4] != cls.SNAPSHOT_MAGIC:
            raise GraphFormatError("not a graph snapshot (bad magic)")
        try:
            version, mlen = struct.unpack_from("<II", blob, 4)
            if version != cls.SNAPSHOT_VERSION:
                raise GraphFormatError(f"unsupported snapshot version {version}")
            pos = 12
            meta = json.loads(blob[pos : pos + mlen].decode("utf-8"))
            pos += mlen
            registry = EdgeRegistry()
            for src, name, dst in meta["registry"]:
                registry.register(NodeKind[src], name, NodeKind[dst])
            g = cls(registry)
            n = int(meta["num_nodes"])
            kinds = np.frombuffer(blob, dtype=np.uint8, count=n, offset=pos)
            pos += n
            ts = np.frombuffer(blob, dtype="<i8", count=n, offset=pos)
            pos += 8 * n
            (nfeat,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            feats: dict[int, np.ndarray] = {}
            for _ in range(nfeat):
                kcode, dim, rows = struct.unpack_from("<BIQ", blob, pos)
                pos += 13
                ids = np.frombuffer(blob, dtype="<i8", count=rows, offset=pos)
                pos += 8 * rows
                mat = np.frombuffer(blob, dtype="<f8", count=rows * dim, offset=pos)
                pos += 8 * rows * dim
                mat = mat.reshape(rows, dim)
                for i, v in enumerate(ids):
                    feats[int(v)] = mat[i].copy()
            for v in range(n):
                g.add_node(NodeKind(int(kinds[v])), int(ts[v]), feats.get(v))
            (nkinds,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            for _ in range(nkinds):
                kid, m = struct.unpack_from("<IQ", blob, pos)
                pos += 12
                kind = registry.kinds[kid]
                us = np.frombuffer(blob, dtype="<i8", count=m, offset=pos)
                pos += 8 * m
                vs = np.frombuffer(blob, dtype="<i8", count=m, offset=pos)
                pos += 8 * m
                for u, v in zip(us, vs):
                    g.add_edge(int(u), kind, int(v))
            if pos != len(blob):
                raise GraphFormatError("trailing bytes after snapshot")
            return g
        except (struct.error, ValueError, KeyError, UnicodeDecodeError) as exc:
            if isinstance(exc, GraphFormatError):
                raise
            raise GraphFormatError("truncated or corrupt graph snapshot") from exc

    # -- debugging -------------------------------------------------------------

    def dump_jsonl(self, node_stream, edge_stream) -> None:
        """Line-delimited JSON dump: one object per node / per forward edge."""
        for v in range(self.num_nodes):
            feat = self.feature_of(v)
            rec = {
                "id": v,
                "kind": self.kind_of(v).name,
                "timestamp": self._ts[v],
            }
            if feat is not None:
                rec["feature"] = [float(x) for x in feat]
            node_stream.write(json.dumps(rec, sort_keys=True) + "\n")
        for kind in self.registry.forward_kinds():
            for u, v in self.iter_edges(kind):
                edge_stream.write(
                    json.dumps(
                        {"src": u, "relation": kind.name, "dst": v, "kind_id": kind.kind_id},
                        sort_keys=True,
                    )
                    + "\n"
                )


def structurally_equal(a: HeteroTemporalGraph, b: HeteroTemporalGraph) -> bool:
    """Same ids, kinds, timestamps, features, and edges."""
    if a.num_nodes != b.num_nodes:
        return False
    if [k.triple for k in a.registry.kinds] != [k.triple for k in b.registry.kinds]:
        return False
    for v in range(a.num_nodes):
        if a._kinds[v] != b._kinds[v] or a._ts[v] != b._ts[v]:
            return False
        fa, fb = a.feature_of(v), b.feature_of(v)
        if (fa is None) != (fb is None):
            return False
        if fa is not None and not np.array_equal(fa, fb):
            return False
    for ka, kb in zip(a.registry.kinds, b.registry.kinds):
        if list(a.iter_edges(ka)) != list(b.iter_edges(kb)):
            return False
    return True

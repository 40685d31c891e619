"""Heterogeneous SAGE-style graph convolutional scorer.

Input embedding: every graph node owns a learned row; featured kinds
(candidate, job, month) add a linear projection of their feature vector.
Each convolution layer combines a per-kind self transform with, per edge
kind present in the subgraph, the mean of a node's neighbors along that
kind under a per-kind weight; rows are then layer-normalized per node kind
and passed through GELU on all layers but the last.

The two anchor rows are compared with cosine similarity; the affine map
(1+s)/2 turns the score into the probability fed to the BCE loss.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from . import tensor as T
from .graph import HeteroTemporalGraph, NodeKind
from .sampler import SampledSubgraph, SamplingConfig, SamplingQuery, sample


class ModelError(ValueError):
    """Configuration or checkpoint mismatch."""


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    layers: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.layers < 1:
            raise ModelError("hidden and layers must be >= 1")


class ParameterSet:
    """Named parameter tensors plus fast lookup tables for the forward pass."""

    def __init__(self, config: ModelConfig, registry, feature_dims, tensors):
        self.config = config
        self.registry = registry
        self.feature_dims = dict(feature_dims)
        self.tensors: dict[str, T.Tensor] = dict(tensors)
        L, ncodes = config.layers, len(NodeKind)
        self.embedding = self.tensors["node_embedding"]
        self._feat = {int(k): self.tensors[f"feat/{k.name}"] for k in sorted(self.feature_dims)}
        self._self = [
            [self.tensors[f"conv{l}/self/{NodeKind(c).name}"] for c in range(ncodes)]
            for l in range(L)
        ]
        self._nbr = [
            [self.tensors[f"conv{l}/nbr/{':'.join(k.triple)}"] for k in registry.kinds]
            for l in range(L)
        ]
        self._ln_g = [
            [self.tensors[f"conv{l}/ln_gain/{NodeKind(c).name}"] for c in range(ncodes)]
            for l in range(L)
        ]
        self._ln_b = [
            [self.tensors[f"conv{l}/ln_bias/{NodeKind(c).name}"] for c in range(ncodes)]
            for l in range(L)
        ]

    def items(self):
        return self.tensors.items()

    def name_by_id(self) -> dict[int, str]:
        """id(tensor) -> name, for walking a tape's gradients without scanning all params."""
        if not hasattr(self, "_by_id"):
            self._by_id = {id(t): name for name, t in self.tensors.items()}
        return self._by_id

    def num_scalars(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            self.config,
            self.registry,
            self.feature_dims,
            {name: t.copy() for name, t in self.tensors.items()},
        )


def init_params(
    config: ModelConfig, graph: HeteroTemporalGraph, seed: int | None = None
) -> ParameterSet:
    """All weights ~ N(0, 1/hidden); layer-norm gain 1, bias 0; deterministic in the seed."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    h = config.hidden
    std = 1.0 / np.sqrt(h)
    tensors: dict[str, T.Tensor] = {}

    def draw(name, shape):
        tensors[name] = T.Tensor(rng.normal(0.0, std, shape))

    draw("node_embedding", (graph.num_nodes, h))
    for kind in sorted(graph.feature_dims):
        draw(f"feat/{kind.name}", (graph.feature_dims[kind], h))
    for l in range(config.layers):
        for code in range(len(NodeKind)):
            draw(f"conv{l}/self/{NodeKind(code).name}", (h, h))
        for kind in graph.registry.kinds:
            draw(f"conv{l}/nbr/{':'.join(kind.triple)}", (h, h))
        for code in range(len(NodeKind)):
            tensors[f"conv{l}/ln_gain/{NodeKind(code).name}"] = T.Tensor(np.ones(h))
        for code in range(len(NodeKind)):
            tensors[f"conv{l}/ln_bias/{NodeKind(code).name}"] = T.Tensor(np.zeros(h))
    return ParameterSet(config, graph.registry, graph.feature_dims, tensors)


def _present_kinds(sub: SampledSubgraph) -> list[int]:
    key = "present"
    if key not in sub._row_cache:
        sub._row_cache[key] = [int(c) for c in np.unique(sub.kinds)]
    return sub._row_cache[key]


def _kind_slots(sub: SampledSubgraph) -> np.ndarray:
    """Position of each local node's kind within the present-kind list."""
    key = "kind_slot"
    if key not in sub._row_cache:
        present = np.asarray(_present_kinds(sub), dtype=np.int64)
        sub._row_cache[key] = np.searchsorted(present, sub.kinds).astype(np.int64)
    return sub._row_cache[key]


def _edge_groups(sub: SampledSubgraph, kind_id: int):
    """Group a kind's edges by source node.

    Returns (group source rows, segment id per edge, dst rows, 1/group size).
    """
    key = ("grp", kind_id)
    if key not in sub._row_cache:
        src, dst = sub.edges[kind_id]
        usrc, seg = np.unique(src, return_inverse=True)
        seg = seg.astype(np.int64)
        inv_counts = 1.0 / np.bincount(seg, minlength=usrc.size)
        sub._row_cache[key] = (usrc, seg, dst, inv_counts)
    return sub._row_cache[key]


def input_embed(sub: SampledSubgraph, params: ParameterSet, tape: T.Tape | None = None) -> T.Tensor:
    """x_v = embedding row + feature projection for featured kinds.

    One fused tape op: the embedding gradient stays sparse on the table.
    """
    gids = sub.node_ids
    emb = params.embedding
    data = emb.data[gids]
    terms: list[tuple[np.ndarray, np.ndarray, T.Tensor]] = []
    for code, w in params._feat.items():
        kind = NodeKind(code)
        rows = sub.rows_of_kind(kind)
        if rows.size == 0:
            continue
        feats = sub.features_of_kind(kind)
        data[rows] += feats @ w.data
        terms.append((rows, feats, w))
    out = T.Tensor(data)
    if tape is not None:
        def bwd(g, gids=gids, terms=terms):
            grads: list = [(gids, g)]
            for rows, feats, _w in terms:
                grads.append(feats.T @ g[rows])
            return grads
        tape.record(out, (emb, *[w for _, _, w in terms]), bwd)
    return out


def conv_layer(
    l: int,
    x: T.Tensor,
    sub: SampledSubgraph,
    params: ParameterSet,
    tape: T.Tape | None = None,
) -> T.Tensor:
    """One heterogeneous convolution: self transform + per-kind neighbor means.

    A node's neighbors along kind r are the targets of its r-edges in the
    subgraph; a node with no outgoing subgraph edges keeps only its self
    term. Layer norm is per node kind; GELU everywhere except the last
    layer so the cosine inputs stay unsquashed.

    Fused into two tape ops (combine, then normalize+activate) so the tape
    stays short; the backward closures mirror the loops below exactly.
    """
    n = sub.num_nodes
    h = params.config.hidden
    last = l == params.config.layers - 1
    present = _present_kinds(sub)
    kind_rows = [(code, sub.rows_of_kind(NodeKind(code))) for code in present]

    z_data = np.zeros((n, h))
    self_ws = [params._self[l][code] for code, _ in kind_rows]
    for (code, rows), w in zip(kind_rows, self_ws):
        z_data[rows] += x.data[rows] @ w.data
    nbr_terms = []  # (usrc, seg, dst, inv_counts, msg, W)
    for kind_id in sorted(sub.edges):
        usrc, seg, dst, inv_counts = _edge_groups(sub, kind_id)
        if usrc.size == 0:
            continue
        msg = _kernels.segment_sum(x.data[dst], seg, usrc.size)
        msg *= inv_counts[:, None]
        w = params._nbr[l][kind_id]
        z_data[usrc] += msg @ w.data
        nbr_terms.append((usrc, seg, dst, inv_counts, msg, w))
    z = T.Tensor(z_data)
    if tape is not None:
        def bwd_combine(g, x=x, kind_rows=kind_rows, self_ws=self_ws, nbr_terms=nbr_terms):
            dx = np.zeros_like(x.data)
            grads: list = [dx]
            for (code, rows), w in zip(kind_rows, self_ws):
                gz = g[rows]
                grads.append(x.data[rows].T @ gz)
                dx[rows] += gz @ w.data.T
            for usrc, seg, dst, inv_counts, msg, w in nbr_terms:
                gz = g[usrc]
                grads.append(msg.T @ gz)
                dmsg = gz @ w.data.T
                dmsg *= inv_counts[:, None]
                _kernels.index_add_rows(dx, dst, dmsg[seg])
            return grads
        tape.record(
            z, (x, *self_ws, *[t[5] for t in nbr_terms]), bwd_combine
        )

    gains = [params._ln_g[l][code] for code, _ in kind_rows]
    biases = [params._ln_b[l][code] for code, _ in kind_rows]
    kind_slot = _kind_slots(sub)
    gain_rows = np.stack([t.data for t in gains])[kind_slot]
    bias_rows = np.stack([t.data for t in biases])[kind_slot]
    y, xhat, inv = T.ln_forward(z_data, gain_rows, bias_rows)
    if last:
        out_data, pre, tanhv = y, None, None
    else:
        pre = y
        out_data, tanhv = T.gelu_forward(pre)
    out = T.Tensor(out_data)
    if tape is not None:
        def bwd_norm(g, xhat=xhat, inv=inv, gain_rows=gain_rows, pre=pre, tanhv=tanhv,
                     kind_slot=kind_slot, nk=len(kind_rows)):
            if tanhv is not None:
                g = T.gelu_backward(g, pre, tanhv)
            dz = T.ln_backward_x(g, xhat, inv, gain_rows)
            dgain = _kernels.segment_sum(g * xhat, kind_slot, nk)
            dbias = _kernels.segment_sum(g, kind_slot, nk)
            return [dz, *dgain, *dbias]
        tape.record(out, (z, *gains, *biases), bwd_norm)
    return out


def encode(sub: SampledSubgraph, params: ParameterSet, tape: T.Tape | None = None) -> T.Tensor:
    x = input_embed(sub, params, tape)
    for l in range(params.config.layers):
        x = conv_layer(l, x, sub, params, tape)
    return x


def encode_and_score(
    sub: SampledSubgraph, params: ParameterSet, tape: T.Tape | None = None
) -> tuple[T.Tensor, T.Tensor]:
    """Returns (cosine score in [-1, 1], probability in (0, 1))."""
    hidden = encode(sub, params, tape)
    hs = T.take_row(hidden, sub.anchor_shortlist, tape)
    hj = T.take_row(hidden, sub.anchor_job, tape)
    s = T.cosine(hs, hj, tape)
    p = T.score_to_prob(s, tape)
    return s, p


def score_pair(
    graph: HeteroTemporalGraph,
    params: ParameterSet,
    shortlist: int,
    job: int,
    cutoff: int | None = None,
    sampling: SamplingConfig = SamplingConfig(),
    tape: T.Tape | None = None,
) -> tuple[T.Tensor, T.Tensor, SampledSubgraph]:
    """The one sampling+scoring path shared by training and evaluation."""
    if cutoff is None:
        cutoff = graph.timestamp_of(shortlist)
    query = SamplingQuery(shortlist=shortlist, job=job, cutoff=cutoff, depth=sampling.depth)
    sub = sample(graph, query, allowed=sampling.kind_ids(graph.registry))
    s, p = encode_and_score(sub, params, tape)
    return s, p, sub


# ---------------------------------------------------------------------------
# checkpointing


def save_checkpoint(prefix: str, params: ParameterSet) -> None:
    """Config JSON plus tensor archive, both written atomically."""
    meta = {
        "config": asdict(params.config),
        "feature_dims": {k.name: d for k, d in params.feature_dims.items()},
        "registry": [list(k.triple) for k in params.registry.forward_kinds()],
        "num_nodes": int(params.embedding.data.shape[0]),
    }
    tmp = prefix + ".json.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(meta, f, sort_keys=True, indent=1)
    os.replace(tmp, prefix + ".json")
    T.save_tensors(prefix + ".tensors", params.tensors)


def load_checkpoint(prefix: str, graph: HeteroTemporalGraph) -> ParameterSet:
    with open(prefix + ".json", "r", encoding="utf-8") as f:
        meta = json.load(f)
    config = ModelConfig(**meta["config"])
    expected = [list(k.triple) for k in graph.registry.forward_kinds()]
    if meta["registry"] != expected:
        raise ModelError("checkpoint registry does not match the graph's registry")
    if meta["num_nodes"] != graph.num_nodes:
        raise ModelError(
            f"checkpoint built for {meta['num_nodes']} nodes, graph has {graph.num_nodes}"
        )
    arrays = T.load_tensors(prefix + ".tensors")
    tensors = {name: T.Tensor(arr) for name, arr in arrays.items()}
    feature_dims = {NodeKind[k]: d for k, d in meta["feature_dims"].items()}
    return ParameterSet(config, graph.registry, feature_dims, tensors)

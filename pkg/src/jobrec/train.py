"""Temporal splitting, negative sampling, and the training loop."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .graph import HeteroTemporalGraph, NodeKind
from .ingest import GraphBuildInfo
from .model import ModelConfig, ParameterSet, init_params, save_checkpoint, score_pair
from .sampler import SamplingConfig


class TrainError(RuntimeError):
    """Unusable split or a numeric blow-up during training."""


@dataclass
class SplitSpec:
    """Chronological 80/10/10 split; entries are interaction indices."""

    train: list[int]
    val: list[int]
    test: list[int]


def chronological_split(timestamps: list[int]) -> SplitSpec:
    """Sort by (timestamp, stable index), then cut contiguous 80/10/10 slices."""
    n = len(timestamps)
    if n < 10:
        raise TrainError(f"need at least 10 interactions to split, got {n}")
    order = sorted(range(n), key=lambda i: (timestamps[i], i))
    a = int(n * 0.8)
    b = int(n * 0.9)
    return SplitSpec(train=order[:a], val=order[a:b], test=order[b:])


class NegativeSampler:
    """Uniform draws over jobs anterior to a shortlist, excluding its true job."""

    def __init__(self, graph: HeteroTemporalGraph):
        jobs = graph.nodes_of_kind(NodeKind.JOB)
        ts = np.asarray([graph.timestamp_of(int(j)) for j in jobs], dtype=np.int64)
        order = np.lexsort((jobs, ts))
        self.jobs = jobs[order]
        self.ts = ts[order]
        self._pos = {int(j): i for i, j in enumerate(self.jobs)}
        self.skipped = 0

    def eligible_count(self, cutoff: int) -> int:
        return int(np.searchsorted(self.ts, cutoff, side="right"))

    def draw(self, true_job: int, cutoff: int, rng: np.random.Generator) -> int | None:
        """A uniform job with timestamp <= cutoff, never the true job; None if impossible."""
        m = self.eligible_count(cutoff)
        tpos = self._pos[int(true_job)]
        slots = m - 1 if tpos < m else m
        if slots < 1:
            self.skipped += 1
            return None
        r = int(rng.integers(slots))
        if tpos < m and r >= tpos:
            r += 1
        return int(self.jobs[r])


@dataclass
class TrainConfig:
    lr: float = 1e-5
    weight_decay: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    negatives_per_positive: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.lr, self.batch_size, self.max_epochs) <= 0 or self.patience < 0:
            raise TrainError("training hyperparameters must be positive (patience >= 0)")
        if self.weight_decay < 0 or self.negatives_per_positive < 1:
            raise TrainError("training hyperparameters must be positive (patience >= 0)")


def train_step(
    batch: list[tuple[int, int, int]],
    graph: HeteroTemporalGraph,
    params: ParameterSet,
    adam: T.AdamState,
    sampling: SamplingConfig = SamplingConfig(),
) -> float:
    """One optimizer step on a batch of (shortlist, job, label) triples.

    Each element is sampled and encoded independently; the loss is the mean
    BCE over the batch and gradients are reduced in batch order before a
    single Adam update.
    """
    inv = 1.0 / len(batch)
    losses = []
    acc: dict[str, object] = {}
    by_id = params.name_by_id()
    for shortlist, job, label in batch:
        tape = T.Tape()
        _, p, _ = score_pair(graph, params, shortlist, job, sampling=sampling, tape=tape)
        loss = T.bce(p, float(label), tape)
        if not np.isfinite(loss.data):
            raise TrainError(
                f"non-finite loss on (shortlist={shortlist}, job={job}, label={label})"
            )
        losses.append(loss.item())
        tape.backward(loss)
        for tid, entry in tape._grads.items():
            name = by_id.get(tid)
            if name is None:
                continue
            cur = acc.get(name)
            if cur is None:
                acc[name] = list(entry) if isinstance(entry, list) else entry.copy()
            elif isinstance(cur, list) and isinstance(entry, list):
                cur.extend(entry)
            elif isinstance(cur, np.ndarray) and isinstance(entry, np.ndarray):
                cur += entry
            else:  # mixed sparse/dense (does not happen for a fixed forward graph)
                shape = params.tensors[name].data.shape
                acc[name] = T._dense_of(cur, shape) + T._dense_of(entry, shape)
    grads: dict[str, np.ndarray] = {}
    for name, tns in params.items():
        entry = acc.get(name)
        if entry is None:
            continue
        dense = T._dense_of(entry, tns.data.shape)
        dense *= inv
        grads[name] = dense
    T.adam_step(dict(params.items()), grads, adam)
    return float(np.mean(losses))


@dataclass
class FitResult:
    params: ParameterSet
    best_params: ParameterSet
    history: list[dict]
    best_epoch: int
    best_val_auc: float
    trained_interactions: set[int] = field(default_factory=set)
    skipped_negatives: int = 0


def _val_auc(
    graph: HeteroTemporalGraph,
    params: ParameterSet,
    shortlists: list[int],
    true_jobs: list[int],
    negatives: list[int | None],
    sampling: SamplingConfig,
) -> float:
    from .evaluate import classification_metrics

    pos, neg = [], []
    for s_gid, tj, nj in zip(shortlists, true_jobs, negatives):
        if nj is None:
            continue
        _, p_pos, _ = score_pair(graph, params, s_gid, tj, sampling=sampling)
        _, p_neg, _ = score_pair(graph, params, s_gid, nj, sampling=sampling)
        pos.append(p_pos.item())
        neg.append(p_neg.item())
    auc, _ = classification_metrics(np.asarray(pos), np.asarray(neg))
    return auc


def fit(
    graph: HeteroTemporalGraph,
    info: GraphBuildInfo,
    splits: SplitSpec,
    model_config: ModelConfig,
    train_config: TrainConfig,
    out_dir: str | None = None,
    sampling: SamplingConfig = SamplingConfig(),
    log=None,
) -> FitResult:
    """Epochs over shuffled train interactions with fresh negatives, early stop on val AUC."""
    graph.freeze()
    neg_sampler = NegativeSampler(graph)
    params = init_params(model_config, graph)
    adam = T.AdamState(lr=train_config.lr, weight_decay=train_config.weight_decay)

    app_kind = graph.registry.lookup(NodeKind.SHORTLIST, "has_application", NodeKind.JOB)

    def true_job_of(s_gid: int) -> int:
        return int(graph.neighbors(s_gid, app_kind)[0])

    train_s = [info.shortlist_gids[i] for i in splits.train]
    train_j = [true_job_of(s) for s in train_s]
    val_s = [info.shortlist_gids[i] for i in splits.val]
    val_j = [true_job_of(s) for s in val_s]
    # fixed validation negatives so the early-stopping signal is comparable across epochs
    val_rng = np.random.default_rng([train_config.seed, 104729])
    val_neg = [
        neg_sampler.draw(tj, graph.timestamp_of(s), val_rng) for s, tj in zip(val_s, val_j)
    ]

    history: list[dict] = []
    best_params = params.copy()
    best_auc = -1.0
    best_epoch = 0
    since_improve = 0
    trained: set[int] = set()

    for epoch in range(1, train_config.max_epochs + 1):
        rng = np.random.default_rng([train_config.seed, epoch])
        order = rng.permutation(len(train_s))
        triples: list[tuple[int, int, int]] = []
        for idx in order:
            s_gid = train_s[idx]
            cutoff = graph.timestamp_of(s_gid)
            triples.append((s_gid, train_j[idx], 1))
            trained.add(splits.train[idx])
            for _ in range(train_config.negatives_per_positive):
                neg = neg_sampler.draw(train_j[idx], cutoff, rng)
                if neg is not None:
                    triples.append((s_gid, neg, 0))
        epoch_losses = []
        for start in range(0, len(triples), train_config.batch_size):
            batch = triples[start : start + train_config.batch_size]
            epoch_losses.append(train_step(batch, graph, params, adam, sampling))
        auc = _val_auc(graph, params, val_s, val_j, val_neg, sampling)
        row = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses)), "val_auc": auc}
        history.append(row)
        if log is not None:
            log(f"epoch {epoch}: loss={row['train_loss']:.4f} val_auc={auc:.4f}")
        if auc > best_auc:
            best_auc = auc
            best_epoch = epoch
            best_params = params.copy()
            since_improve = 0
        else:
            since_improve += 1
        if since_improve >= train_config.patience:
            break

    result = FitResult(
        params=params,
        best_params=best_params,
        history=history,
        best_epoch=best_epoch,
        best_val_auc=best_auc,
        trained_interactions=trained,
        skipped_negatives=neg_sampler.skipped,
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
            json.dump(
                {"model": asdict(model_config), "train": asdict(train_config)},
                f,
                sort_keys=True,
                indent=1,
            )
        with open(os.path.join(out_dir, "history.csv"), "w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(f, fieldnames=["epoch", "train_loss", "val_auc"])
            w.writeheader()
            w.writerows(history)
        save_checkpoint(os.path.join(out_dir, "checkpoint_best"), best_params)
        save_checkpoint(os.path.join(out_dir, "checkpoint_final"), params)
    return result

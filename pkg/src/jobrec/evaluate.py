"""Dual evaluation: paired-negative classification metrics and full-catalog ranking.

Classification (AUC, precision) only measures separating true pairs from
random negatives; the ranking pass scores every job in the catalog for each
test shortlist and reports MRR and Recall@K, which is where weak
recommenders actually fall down. Both passes go through the same
sampling+scoring path as training.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .graph import HeteroTemporalGraph, NodeKind
from .ingest import GraphBuildInfo
from .model import ParameterSet, score_pair
from .sampler import SamplingConfig, concealment_violations, leakage_violations
from .train import NegativeSampler, SplitSpec


class EvalError(ValueError):
    """Empty inputs or malformed rank vectors."""


def _tie_ranks(scores: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mean rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def classification_metrics(pos: np.ndarray, neg: np.ndarray) -> tuple[float, float]:
    """(AUC, precision) over paired scores.

    AUC is the Mann-Whitney statistic with ties counted 0.5; precision is
    the fraction of correct threshold-0.5 decisions over all 2n samples.
    """
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise EvalError("classification metrics need non-empty score lists")
    ranks = _tie_ranks(np.concatenate([pos, neg]))
    r_pos = float(ranks[: pos.size].sum())
    auc = (r_pos - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size)
    correct = int(np.count_nonzero(pos >= 0.5)) + int(np.count_nonzero(neg < 0.5))
    precision = correct / (pos.size + neg.size)
    return float(auc), float(precision)


@dataclass(frozen=True)
class RankResult:
    shortlist: int
    true_job: int
    rank: int
    catalog_size: int


def rank_from_scores(scores: np.ndarray, true_index: int) -> int:
    """Pessimistic rank: 1 + strictly-better + tied others."""
    s = scores[true_index]
    better = int(np.count_nonzero(scores > s))
    tied = int(np.count_nonzero(scores == s)) - 1
    return 1 + better + tied


def mrr(results: list[RankResult]) -> float:
    if not results:
        raise EvalError("mrr needs at least one rank")
    return float(np.mean([1.0 / r.rank for r in results]))


def recall_at_k(results: list[RankResult], k: int) -> float:
    if k < 1:
        raise EvalError("recall needs k >= 1")
    if not results:
        raise EvalError("recall needs at least one rank")
    return float(np.mean([1.0 if r.rank <= k else 0.0 for r in results]))


@dataclass
class EvalReport:
    auc: float
    precision: float
    mrr: float
    recall: dict[int, float]
    ranks: list[RankResult]
    counters: dict[str, int]
    config: dict

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "precision": self.precision,
            "precision_definition": "accuracy at threshold 0.5 over paired samples",
            "mrr": self.mrr,
            "recall": {str(k): v for k, v in sorted(self.recall.items())},
            "counters": dict(sorted(self.counters.items())),
            "config": self.config,
            "ranks": [
                {
                    "shortlist": r.shortlist,
                    "true_job": r.true_job,
                    "rank": r.rank,
                    "catalog_size": r.catalog_size,
                }
                for r in self.ranks
            ],
        }

    def write(self, out_dir: str) -> None:
        """report.json (deterministic), ranks.csv, and a human-readable metrics.md."""
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=1)
        with open(os.path.join(out_dir, "ranks.csv"), "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["shortlist", "true_job", "rank", "catalog_size"])
            for r in self.ranks:
                w.writerow([r.shortlist, r.true_job, r.rank, r.catalog_size])
        lines = [
            "# Evaluation report",
            "",
            "Precision is accuracy at threshold 0.5 over paired positive/negative samples.",
            "",
            f"- AUC: {self.auc:.4f}",
            f"- precision: {self.precision:.4f}",
            f"- MRR: {self.mrr:.4f}",
        ]
        for k, v in sorted(self.recall.items()):
            lines.append(f"- Recall@{k}: {v:.4f}")
        lines.append("")
        lines.append(f"- interactions: {len(self.ranks)}")
        for k, v in sorted(self.counters.items()):
            lines.append(f"- {k}: {v}")
        with open(os.path.join(out_dir, "metrics.md"), "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")


class ModelScorer:
    """Default scorer: sample + encode through the shared `score_pair` path.

    Counts temporal-leakage and concealment violations on every subgraph it
    draws; a correct sampler keeps both counters at zero.
    """

    def __init__(
        self,
        graph: HeteroTemporalGraph,
        params: ParameterSet,
        sampling: SamplingConfig = SamplingConfig(),
    ):
        self.graph = graph
        self.params = params
        self.sampling = sampling
        self.leakage = 0
        self.concealment = 0
        self.pairs = 0

    def __call__(self, shortlist: int, job: int, cutoff: int) -> float:
        _, p, sub = score_pair(
            self.graph, self.params, shortlist, job, cutoff=cutoff, sampling=self.sampling
        )
        self.pairs += 1
        self.leakage += leakage_violations(sub, cutoff)
        self.concealment += concealment_violations(sub, self.graph)
        return p.item()


def rank_items(
    graph: HeteroTemporalGraph,
    shortlist: int,
    scorer,
    catalog: np.ndarray,
    true_job: int,
    cutoff: int | None = None,
) -> RankResult:
    """Score the whole catalog for one shortlist; pessimistic tie handling."""
    if cutoff is None:
        cutoff = graph.timestamp_of(shortlist)
    scores = np.asarray([scorer(shortlist, int(j), cutoff) for j in catalog])
    true_index = int(np.searchsorted(catalog, true_job))
    return RankResult(
        shortlist=shortlist,
        true_job=true_job,
        rank=rank_from_scores(scores, true_index),
        catalog_size=int(catalog.size),
    )


def evaluate(
    graph: HeteroTemporalGraph,
    info: GraphBuildInfo,
    splits: SplitSpec,
    params: ParameterSet | None,
    seed: int = 0,
    ks: tuple[int, ...] = (10,),
    sampling: SamplingConfig = SamplingConfig(),
    scorer=None,
    config_echo: dict | None = None,
) -> EvalReport:
    """Classification on paired negatives plus full-catalog ranking per test interaction.

    Temporal access is enforced purely by the sampler's cutoff; the model is
    never retrained, so later test interactions see earlier ones through the
    graph. An injected `scorer(shortlist, job, cutoff)` replaces the model
    in both passes (used for baselines and test doubles).
    """
    graph.freeze()
    if scorer is None:
        if params is None:
            raise EvalError("evaluate needs params or an injected scorer")
        scorer = ModelScorer(graph, params, sampling)
    app_kind = graph.registry.lookup(NodeKind.SHORTLIST, "has_application", NodeKind.JOB)
    catalog = graph.nodes_of_kind(NodeKind.JOB)
    neg_sampler = NegativeSampler(graph)

    pos_scores: list[float] = []
    neg_scores: list[float] = []
    ranks: list[RankResult] = []
    skipped = 0
    for seq, idx in enumerate(splits.test):
        s_gid = info.shortlist_gids[idx]
        cutoff = graph.timestamp_of(s_gid)
        true_job = int(graph.neighbors(s_gid, app_kind)[0])
        rng = np.random.default_rng([seed, seq])
        neg = neg_sampler.draw(true_job, cutoff, rng)
        if neg is None:
            skipped += 1
        else:
            pos_scores.append(scorer(s_gid, true_job, cutoff))
            neg_scores.append(scorer(s_gid, neg, cutoff))
        ranks.append(rank_items(graph, s_gid, scorer, catalog, true_job, cutoff))

    auc, precision = classification_metrics(np.asarray(pos_scores), np.asarray(neg_scores))
    counters = {
        "skipped_negatives": skipped,
        "test_interactions": len(splits.test),
        "catalog_size": int(catalog.size),
    }
    if isinstance(scorer, ModelScorer):
        counters["leakage_violations"] = scorer.leakage
        counters["concealment_violations"] = scorer.concealment
        counters["pairs_scored"] = scorer.pairs
    return EvalReport(
        auc=auc,
        precision=precision,
        mrr=mrr(ranks),
        recall={k: recall_at_k(ranks, k) for k in ks},
        ranks=ranks,
        counters=counters,
        config=dict(config_echo or {}),
    )


def popularity_scorer(graph: HeteroTemporalGraph):
    """Score a job by its shortlist in-degree (normalized); ignores the query side.

    A deliberately query-blind baseline: it can look fine on paired-negative
    classification while ranking the catalog no better than chance.
    """
    app_kind = graph.registry.lookup(NodeKind.SHORTLIST, "has_application", NodeKind.JOB)
    rev = graph.registry.reverse(app_kind)
    jobs = graph.nodes_of_kind(NodeKind.JOB)
    degree = {int(j): graph.degree(int(j), rev) for j in jobs}
    top = max(degree.values()) if degree else 1

    def score(shortlist: int, job: int, cutoff: int) -> float:
        return degree[int(job)] / max(top, 1)

    return score

"""Ablation switches: train+evaluate with parts of the graph turned off.

A switch either drops every edge touching one node kind (attribute or
month nodes), zeroes candidate/job text features, or swaps the selective
depth-4 sampler for the depth-2 all-kind one. `all` composes the edge-drop
switches. Node sets never change, so ids and checkpoint shapes stay valid.
"""

from __future__ import annotations

from dataclasses import dataclass

from .evaluate import EvalReport, evaluate
from .graph import HeteroTemporalGraph, NodeKind
from .ingest import GraphBuildInfo
from .model import ModelConfig
from .sampler import SamplingConfig
from .train import SplitSpec, TrainConfig, fit


class AblationError(ValueError):
    """Unknown switch name."""


_ATTR_SWITCHES = {
    "company": NodeKind.COMPANY,
    "salary": NodeKind.SALARY,
    "experience": NodeKind.EXPERIENCE,
    "skill": NodeKind.SKILL,
    "concept": NodeKind.CONCEPT,
    "contract": NodeKind.CONTRACT,
    "origin": NodeKind.ORIGIN,
    "zip": NodeKind.LOCATION,
    "location": NodeKind.LOCATION,
    "category": NodeKind.CATEGORY,
    "categories": NodeKind.CATEGORY,
    "temporal": NodeKind.TEMPORAL,
}

_ALL_DROPS = {
    NodeKind.COMPANY,
    NodeKind.SALARY,
    NodeKind.EXPERIENCE,
    NodeKind.SKILL,
    NodeKind.CONCEPT,
    NodeKind.CONTRACT,
    NodeKind.ORIGIN,
    NodeKind.LOCATION,
    NodeKind.CATEGORY,
    NodeKind.TEMPORAL,
}

KNOWN_SWITCHES = sorted(set(_ATTR_SWITCHES) | {"features", "collab", "all"})


@dataclass(frozen=True)
class AblationSetup:
    name: str
    drop_kinds: frozenset[NodeKind]
    zero_features: bool
    sampling: SamplingConfig


def setup_for(switches: list[str], base_sampling: SamplingConfig = SamplingConfig()) -> AblationSetup:
    """Compose a setup from switch names; the empty list is the untouched baseline."""
    drops: set[NodeKind] = set()
    zero = False
    sampling = base_sampling
    for switch in switches:
        s = switch.strip().lower()
        if not s:
            continue
        if s in _ATTR_SWITCHES:
            drops.add(_ATTR_SWITCHES[s])
        elif s == "all":
            drops |= _ALL_DROPS
        elif s == "features":
            zero = True
        elif s == "collab":
            sampling = SamplingConfig(depth=2, selective=False)
        else:
            raise AblationError(f"unknown ablation switch {switch!r} (known: {KNOWN_SWITCHES})")
    name = "full" if not switches else "-" + " -".join(switches)
    return AblationSetup(
        name=name,
        drop_kinds=frozenset(drops),
        zero_features=zero,
        sampling=sampling,
    )


def apply_setup(graph: HeteroTemporalGraph, setup: AblationSetup) -> HeteroTemporalGraph:
    if not setup.drop_kinds and not setup.zero_features:
        return graph
    zero_kinds = {NodeKind.CANDIDATE, NodeKind.JOB} if setup.zero_features else set()
    out = graph.filtered_copy(
        drop_edge_kinds_touching=set(setup.drop_kinds), zero_feature_kinds=zero_kinds
    )
    out.freeze()
    return out


def run_setup(
    setup: AblationSetup,
    graph: HeteroTemporalGraph,
    info: GraphBuildInfo,
    splits: SplitSpec,
    model_config: ModelConfig,
    train_config: TrainConfig,
    seed: int,
    ks: tuple[int, ...] = (10,),
    log=None,
) -> EvalReport:
    """Retrain from scratch under the toggled setup and evaluate the best checkpoint."""
    g = apply_setup(graph, setup)
    mc = ModelConfig(hidden=model_config.hidden, layers=model_config.layers, seed=seed)
    tc = TrainConfig(
        lr=train_config.lr,
        weight_decay=train_config.weight_decay,
        batch_size=train_config.batch_size,
        max_epochs=train_config.max_epochs,
        patience=train_config.patience,
        negatives_per_positive=train_config.negatives_per_positive,
        seed=seed,
    )
    result = fit(g, info, splits, mc, tc, sampling=setup.sampling, log=log)
    return evaluate(
        g,
        info,
        splits,
        result.best_params,
        seed=seed,
        ks=ks,
        sampling=setup.sampling,
        config_echo={"setup": setup.name, "seed": seed},
    )

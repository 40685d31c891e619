"""Command line surface: synth, build, train, eval, ablate, rank, inspect-sample.

Every command echoes its fully resolved configuration and writes a
manifest.json next to its artifacts; two runs with identical echoes produce
identical primary artifacts.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict

import click
import numpy as np

from . import __version__
from .ablate import AblationError, setup_for, run_setup
from .evaluate import EvalError, evaluate
from .graph import (
    GraphError,
    GraphFormatError,
    HeteroTemporalGraph,
    NodeKind,
)
from .ingest import (
    GraphBuildInfo,
    IngestError,
    SkillLexicon,
    build_graph,
    month_index,
    month_start,
    read_candidates,
    read_interactions,
    read_jobs,
)
from .model import (
    ModelConfig,
    ModelError,
    ParameterSet,
    load_checkpoint,
)
from .sampler import SamplerError, SamplingConfig, SamplingQuery, sample
from .synth import SynthConfig, SynthError, describe, generate, write_corpus
from .tensor import ArchiveFormatError, Tensor
from .train import TrainConfig, TrainError, chronological_split, fit

# message class -> exit code
_EXIT_CODES = {
    "missing-input": 2,
    "missing-checkpoint": 3,
    "schema": 4,
    "infeasible-config": 5,
    "unknown-switch": 6,
    "bad-query": 7,
    "internal": 1,
}


class CliError(click.ClickException):
    def __init__(self, kind: str, message: str):
        super().__init__(f"[{kind}] {message}")
        self.exit_code = _EXIT_CODES.get(kind, 1)


def _classify(exc: Exception) -> CliError:
    if isinstance(exc, FileNotFoundError):
        return CliError("missing-input", f"missing file: {exc.filename or exc}")
    if isinstance(exc, (IngestError, GraphFormatError, ArchiveFormatError, json.JSONDecodeError)):
        return CliError("schema", str(exc))
    if isinstance(exc, (SynthError, TrainError)):
        return CliError("infeasible-config", str(exc))
    if isinstance(exc, AblationError):
        return CliError("unknown-switch", str(exc))
    if isinstance(exc, (SamplerError, ModelError, GraphError, EvalError)):
        return CliError("bad-query", str(exc))
    return CliError("internal", f"{type(exc).__name__}: {exc}")


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except click.ClickException:
        raise
    except Exception as exc:  # noqa: BLE001 - single funnel to exit codes
        raise _classify(exc) from exc


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _section(cfg: dict, name: str, cls, seed: int | None):
    kwargs = dict(cfg.get(name, {}))
    if seed is not None:
        kwargs["seed"] = seed
    return cls(**kwargs)


def _write_manifest(out_dir: str, command: str, config: dict, outputs: list[str]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(
            {
                "command": command,
                "config": config,
                "outputs": sorted(outputs),
                "version": __version__,
            },
            f,
            sort_keys=True,
            indent=1,
        )


def _echo_config(command: str, config: dict) -> None:
    click.echo(f"{command} config: {json.dumps(config, sort_keys=True)}")


def _load_data_dir(data: str) -> tuple[HeteroTemporalGraph, GraphBuildInfo]:
    graph_path = os.path.join(data, "graph.bin")
    info_path = os.path.join(data, "build_info.json")
    for p in (graph_path, info_path):
        if not os.path.exists(p):
            raise CliError("missing-input", f"missing file: {p}")
    graph = HeteroTemporalGraph.load(graph_path)
    graph.freeze()
    return graph, GraphBuildInfo.load(info_path)


def _load_checkpoint_prefix(prefix: str, graph: HeteroTemporalGraph) -> ParameterSet:
    if not os.path.exists(prefix + ".json") or not os.path.exists(prefix + ".tensors"):
        raise CliError("missing-checkpoint", f"no checkpoint at prefix {prefix!r}")
    return load_checkpoint(prefix, graph)


@click.group()
@click.version_option(__version__)
def main():
    """Temporal heterogeneous-graph job recommendation pipeline."""


@main.command()
@click.option("--out", required=True, type=click.Path(), help="output directory")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--scale", type=float, default=1.0, help="multiply entity counts")
def synth(out, config_path, seed, scale):
    """Generate a synthetic corpus (candidates, jobs, interactions, lexicon)."""

    def run():
        cfg = _section(_load_config_file(config_path), "synth", SynthConfig, seed)
        if scale != 1.0:
            cfg = cfg.scaled(scale)
        _echo_config("synth", asdict(cfg))
        corpus = generate(cfg)
        write_corpus(corpus, out)
        stats = describe(corpus)
        with open(os.path.join(out, "stats.json"), "w", encoding="utf-8") as f:
            json.dump(stats.as_dict(), f, sort_keys=True, indent=1)
        _write_manifest(
            out,
            "synth",
            asdict(cfg),
            ["candidates.jsonl", "jobs.jsonl", "interactions.jsonl", "lexicon.json", "stats.json"],
        )
        click.echo(
            f"wrote corpus: {stats.num_candidates} candidates, {stats.num_jobs} jobs, "
            f"{stats.num_interactions} interactions "
            f"({stats.candidates_with_interaction:.0%} of candidates active)"
        )

    _guard(run)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True), help="corpus directory")
@click.option("--out", required=True, type=click.Path())
def build(data, out):
    """Build the heterogeneous temporal graph from a corpus directory."""

    def run():
        candidates = read_candidates(os.path.join(data, "candidates.jsonl"))
        jobs = read_jobs(os.path.join(data, "jobs.jsonl"))
        interactions = read_interactions(os.path.join(data, "interactions.jsonl"))
        lexicon = SkillLexicon.from_json(os.path.join(data, "lexicon.json"))
        config = {"data": os.path.abspath(data)}
        _echo_config("build", config)
        graph, info = build_graph(candidates, jobs, interactions, lexicon)
        os.makedirs(out, exist_ok=True)
        graph.save(os.path.join(out, "graph.bin"))
        info.save(os.path.join(out, "build_info.json"))
        _write_manifest(out, "build", config, ["graph.bin", "build_info.json"])
        click.echo(
            f"graph: {graph.num_nodes} nodes, {graph.num_edges()} directed edges, "
            f"{len(info.shortlist_gids)} shortlists"
        )

    _guard(run)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True), help="built graph directory")
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
def train(data, out, config_path, seed):
    """Train the scorer with early stopping on validation AUC."""

    def run():
        graph, info = _load_data_dir(data)
        cfg = _load_config_file(config_path)
        mcfg = _section(cfg, "model", ModelConfig, seed)
        tcfg = _section(cfg, "train", TrainConfig, seed)
        config = {"model": asdict(mcfg), "train": asdict(tcfg), "data": os.path.abspath(data)}
        _echo_config("train", config)
        splits = chronological_split(info.interaction_ts)
        result = fit(graph, info, splits, mcfg, tcfg, out_dir=out, log=click.echo)
        _write_manifest(
            out,
            "train",
            config,
            [
                "config.json",
                "history.csv",
                "checkpoint_best.json",
                "checkpoint_best.tensors",
                "checkpoint_final.json",
                "checkpoint_final.tensors",
            ],
        )
        click.echo(
            f"best epoch {result.best_epoch} (val AUC {result.best_val_auc:.4f}); "
            f"checkpoints in {out}"
        )

    _guard(run)


@main.command(name="eval")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=str, help="checkpoint path prefix")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=0)
@click.option("--ks", type=str, default="10", help="comma-separated recall cutoffs")
def eval_cmd(data, checkpoint, out, seed, ks):
    """Evaluate a checkpoint: classification metrics plus full-catalog ranking."""

    def run():
        graph, info = _load_data_dir(data)
        params = _load_checkpoint_prefix(checkpoint, graph)
        k_list = tuple(int(k) for k in ks.split(",") if k.strip())
        config = {
            "checkpoint": os.path.abspath(checkpoint),
            "data": os.path.abspath(data),
            "ks": list(k_list),
            "seed": seed,
        }
        _echo_config("eval", config)
        splits = chronological_split(info.interaction_ts)
        report = evaluate(graph, info, splits, params, seed=seed, ks=k_list, config_echo=config)
        report.write(out)
        _write_manifest(out, "eval", config, ["report.json", "ranks.csv", "metrics.md"])
        click.echo(
            f"AUC {report.auc:.4f}  precision {report.precision:.4f}  "
            f"MRR {report.mrr:.4f}  "
            + "  ".join(f"Recall@{k} {v:.4f}" for k, v in sorted(report.recall.items()))
        )

    _guard(run)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--switches", type=str, default="temporal,collab,features,all")
@click.option("--seeds", type=int, default=1, help="training seeds per setup")
@click.option("--seed", type=int, default=0, help="first training seed")
def ablate(data, out, config_path, switches, seeds, seed):
    """Ablation table: baseline plus one row per switch, retrained per setup."""

    def run():
        graph, info = _load_data_dir(data)
        cfg = _load_config_file(config_path)
        mcfg = _section(cfg, "model", ModelConfig, None)
        tcfg = _section(cfg, "train", TrainConfig, None)
        switch_list = [s.strip() for s in switches.split(",") if s.strip()]
        config = {
            "model": asdict(mcfg),
            "train": asdict(tcfg),
            "switches": switch_list,
            "seeds": seeds,
            "seed": seed,
            "data": os.path.abspath(data),
        }
        _echo_config("ablate", config)
        splits = chronological_split(info.interaction_ts)
        setups = [setup_for([])] + [setup_for([s]) for s in switch_list]
        rows = []
        for setup in setups:
            for s in range(seed, seed + seeds):
                click.echo(f"running setup {setup.name!r} seed {s} ...")
                report = run_setup(setup, graph, info, splits, mcfg, tcfg, s)
                rows.append(
                    {
                        "setup": setup.name,
                        "seed": s,
                        "auc": report.auc,
                        "precision": report.precision,
                        "mrr": report.mrr,
                        "recall@10": report.recall.get(10, float("nan")),
                    }
                )
        os.makedirs(out, exist_ok=True)
        import csv as _csv

        with open(os.path.join(out, "ablation.csv"), "w", newline="", encoding="utf-8") as f:
            w = _csv.DictWriter(f, fieldnames=["setup", "seed", "auc", "precision", "mrr", "recall@10"])
            w.writeheader()
            w.writerows(rows)
        lines = [
            "| setup | AUC | precision | MRR | Recall@10 |",
            "|---|---|---|---|---|",
        ]
        for setup in setups:
            sel = [r for r in rows if r["setup"] == setup.name]
            def agg(key):
                vals = [r[key] for r in sel]
                m = float(np.mean(vals))
                if len(vals) > 1:
                    return f"{m:.4f} (sd {float(np.std(vals, ddof=1)):.4f})"
                return f"{m:.4f}"
            lines.append(
                f"| {setup.name} | {agg('auc')} | {agg('precision')} | {agg('mrr')} | {agg('recall@10')} |"
            )
        table = "\n".join(lines)
        with open(os.path.join(out, "ablation.md"), "w", encoding="utf-8") as f:
            f.write(table + "\n")
        _write_manifest(out, "ablate", config, ["ablation.csv", "ablation.md"])
        click.echo(table)

    _guard(run)


def _extend_embedding(params: ParameterSet, extra: int) -> ParameterSet:
    """Append zero embedding rows for nodes added after training (transient shortlists)."""
    if extra == 0:
        return params
    tensors = {name: t.copy() for name, t in params.tensors.items()}
    emb = tensors["node_embedding"]
    tensors["node_embedding"] = Tensor(
        np.vstack([emb.data, np.zeros((extra, emb.data.shape[1]))])
    )
    return ParameterSet(params.config, params.registry, params.feature_dims, tensors)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=str)
@click.option("--shortlist", "shortlist_gid", type=int, default=None, help="existing shortlist node id")
@click.option("--candidate", "candidate_ext", type=str, default=None, help="candidate external id")
@click.option("--time", "at_time", type=int, default=None, help="epoch seconds for the transient query")
@click.option("--k", type=int, default=10)
@click.option("--out", type=click.Path(), default=None)
def rank(data, checkpoint, shortlist_gid, candidate_ext, at_time, k, out):
    """Top-K jobs for an existing shortlist or a transient (candidate, time) query."""

    def run():
        graph, info = _load_data_dir(data)
        params = _load_checkpoint_prefix(checkpoint, graph)
        if shortlist_gid is None and (candidate_ext is None or at_time is None):
            raise CliError("bad-query", "pass --shortlist or both --candidate and --time")
        if shortlist_gid is not None:
            target = shortlist_gid
            if not (0 <= target < graph.num_nodes) or graph.kind_of(target) != NodeKind.SHORTLIST:
                raise CliError("bad-query", f"node {target} is not a shortlist")
            g = graph
        else:
            gid = info.candidate_gid.get(candidate_ext)
            if gid is None:
                raise CliError("bad-query", f"unknown candidate {candidate_ext!r}")
            g, target, params = transient_shortlist(graph, info, params, gid, at_time)
        config = {
            "checkpoint": os.path.abspath(checkpoint),
            "data": os.path.abspath(data),
            "k": k,
            "shortlist": target,
            "candidate": candidate_ext,
            "time": at_time,
        }
        _echo_config("rank", config)
        listing = rank_listing(g, params, target, k)
        job_ext = {v: kk for kk, v in info.job_gid.items()}
        click.echo("| rank | job | score |")
        click.echo("|---|---|---|")
        for i, (job, score) in enumerate(listing, start=1):
            click.echo(f"| {i} | {job_ext.get(job, job)} | {score:.6f} |")
        if out:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, "ranking.json"), "w", encoding="utf-8") as f:
                json.dump(
                    {
                        "config": config,
                        "ranking": [
                            {"rank": i + 1, "job": job_ext.get(job, str(job)), "job_gid": job, "score": score}
                            for i, (job, score) in enumerate(listing)
                        ],
                    },
                    f,
                    sort_keys=True,
                    indent=1,
                )
            _write_manifest(out, "rank", config, ["ranking.json"])

    _guard(run)


def transient_shortlist(
    graph: HeteroTemporalGraph,
    info: GraphBuildInfo,
    params: ParameterSet,
    candidate_gid: int,
    at_time: int,
) -> tuple[HeteroTemporalGraph, int, ParameterSet]:
    """In-memory graph copy with a fresh shortlist for (candidate, time).

    The new shortlist gets a zero embedding row; it carries no application
    edge, exactly like a materialized shortlist looks to the sampler after
    concealment.
    """
    g = graph.filtered_copy()
    K = NodeKind
    reg = g.registry
    s = g.add_node(K.SHORTLIST, at_time)
    g.add_edge(s, reg.lookup(K.SHORTLIST, "has_candidate", K.CANDIDATE), candidate_gid)
    start = month_start(at_time)
    month = info.month_gid.get(start)
    if month is None:
        month = g.add_node(K.TEMPORAL, start, feature=[float(month_index(at_time, info.t_first))])
    g.add_edge(s, reg.lookup(K.SHORTLIST, "at_time", K.TEMPORAL), month)
    g.freeze()
    extended = _extend_embedding(params, g.num_nodes - graph.num_nodes)
    return g, s, extended


def rank_listing(graph: HeteroTemporalGraph, params: ParameterSet, shortlist: int, k: int):
    """Scored catalog for one shortlist, best first, capped at k."""
    from .evaluate import ModelScorer

    graph.freeze()
    scorer = ModelScorer(graph, params)
    catalog = graph.nodes_of_kind(NodeKind.JOB)
    cutoff = graph.timestamp_of(shortlist)
    scores = [(int(j), scorer(shortlist, int(j), cutoff)) for j in catalog]
    scores.sort(key=lambda x: (-x[1], x[0]))
    return scores[: max(k, 0)] if k < len(scores) else scores


@main.command(name="inspect-sample")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--shortlist", required=True, type=int)
@click.option("--job", required=True, type=int)
@click.option("--depth", type=int, default=4)
@click.option("--all-kinds", is_flag=True, default=False, help="disable selective sampling")
def inspect_sample(data, shortlist, job, depth, all_kinds):
    """Dump one sampled subgraph as line-delimited JSON (nodes, then edges)."""

    def run():
        graph, _ = _load_data_dir(data)
        sampling = SamplingConfig(depth=depth, selective=not all_kinds)
        query = SamplingQuery(
            shortlist=shortlist, job=job, cutoff=graph.timestamp_of(shortlist), depth=depth
        )
        sub = sample(graph, query, allowed=sampling.kind_ids(graph.registry))
        for i in range(sub.num_nodes):
            click.echo(
                json.dumps(
                    {
                        "local": i,
                        "node": int(sub.node_ids[i]),
                        "kind": NodeKind(int(sub.kinds[i])).name,
                        "timestamp": int(sub.timestamps[i]),
                        "anchor": (
                            "shortlist"
                            if i == sub.anchor_shortlist
                            else "job" if i == sub.anchor_job else None
                        ),
                    },
                    sort_keys=True,
                )
            )
        for kind_id, (src, dst) in sorted(sub.edges.items()):
            kind = graph.registry.kinds[kind_id]
            for a, b in zip(src, dst):
                click.echo(
                    json.dumps(
                        {"kind": ":".join(kind.triple), "src": int(a), "dst": int(b)},
                        sort_keys=True,
                    )
                )

    _guard(run)


if __name__ == "__main__":
    main()

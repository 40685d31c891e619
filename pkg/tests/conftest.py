import numpy as np
import pytest

from jobrec.graph import HeteroTemporalGraph, NodeKind as K


def micro_graph(d_text: int = 4):
    """One interaction's worth of graph: candidate, job, shortlist, skill, month."""
    g = HeteroTemporalGraph()
    r = g.registry
    rng = np.random.default_rng(11)
    u = g.add_node(K.CANDIDATE, 100, feature=rng.normal(size=d_text))
    j = g.add_node(K.JOB, 120, feature=rng.normal(size=d_text))
    s = g.add_node(K.SHORTLIST, 150)
    sk = g.add_node(K.SKILL)
    t = g.add_node(K.TEMPORAL, 90, feature=[2.0])
    g.add_edge(s, r.lookup(K.SHORTLIST, "has_candidate", K.CANDIDATE), u)
    g.add_edge(s, r.lookup(K.SHORTLIST, "has_application", K.JOB), j)
    g.add_edge(s, r.lookup(K.SHORTLIST, "at_time", K.TEMPORAL), t)
    g.add_edge(u, r.lookup(K.CANDIDATE, "has_skill", K.SKILL), sk)
    g.add_edge(u, r.lookup(K.CANDIDATE, "at_time", K.TEMPORAL), t)
    g.add_edge(j, r.lookup(K.JOB, "at_time", K.TEMPORAL), t)
    return g, {"candidate": u, "job": j, "shortlist": s, "skill": sk, "temporal": t}


def random_graph(rng: np.random.Generator, n_candidates=6, n_jobs=4, n_interactions=10,
                 n_skills=5, n_categories=3, d_text=3, horizon=1000):
    """Random but legal graph: entities + attributes + reified interactions."""
    g = HeteroTemporalGraph()
    r = g.registry
    skills = [g.add_node(K.SKILL) for _ in range(n_skills)]
    cats = [g.add_node(K.CATEGORY) for _ in range(n_categories)]
    concepts = [g.add_node(K.CONCEPT) for _ in range(2)]
    g.add_edge(concepts[1], r.lookup(K.CONCEPT, "subconcept_of", K.CONCEPT), concepts[0])
    for sk in skills:
        if rng.random() < 0.7:
            g.add_edge(sk, r.lookup(K.SKILL, "has_concept", K.CONCEPT),
                       concepts[int(rng.integers(0, 2))])
    cands, jobs = [], []
    months = {}

    def month_of(ts):
        key = ts // 300
        if key not in months:
            months[key] = g.add_node(K.TEMPORAL, key * 300 + 1, feature=[float(key)])
        return months[key]

    for _ in range(n_candidates):
        ts = int(rng.integers(1, horizon))
        u = g.add_node(K.CANDIDATE, ts, feature=rng.normal(size=d_text))
        cands.append(u)
        g.add_edge(u, r.lookup(K.CANDIDATE, "at_time", K.TEMPORAL), month_of(ts))
        for sk in rng.choice(skills, size=int(rng.integers(1, 3)), replace=False):
            g.add_edge(u, r.lookup(K.CANDIDATE, "has_skill", K.SKILL), int(sk))
        g.add_edge(u, r.lookup(K.CANDIDATE, "has_category", K.CATEGORY),
                   cats[int(rng.integers(0, n_categories))])
    for _ in range(n_jobs):
        ts = int(rng.integers(1, horizon))
        j = g.add_node(K.JOB, ts, feature=rng.normal(size=d_text))
        jobs.append(j)
        g.add_edge(j, r.lookup(K.JOB, "at_time", K.TEMPORAL), month_of(ts))
        for sk in rng.choice(skills, size=int(rng.integers(1, 3)), replace=False):
            g.add_edge(j, r.lookup(K.JOB, "requires_skill", K.SKILL), int(sk))
        g.add_edge(j, r.lookup(K.JOB, "has_category", K.CATEGORY),
                   cats[int(rng.integers(0, n_categories))])
    shortlists = []
    for _ in range(n_interactions):
        u = cands[int(rng.integers(0, len(cands)))]
        j = jobs[int(rng.integers(0, len(jobs)))]
        ts = int(max(g.timestamp_of(u), g.timestamp_of(j)) + rng.integers(0, horizon // 2))
        s = g.add_node(K.SHORTLIST, ts)
        shortlists.append(s)
        g.add_edge(s, r.lookup(K.SHORTLIST, "has_candidate", K.CANDIDATE), u)
        g.add_edge(s, r.lookup(K.SHORTLIST, "has_application", K.JOB), j)
        g.add_edge(s, r.lookup(K.SHORTLIST, "at_time", K.TEMPORAL), month_of(ts))
    return g, cands, jobs, shortlists


@pytest.fixture(scope="session")
def small_corpus():
    from jobrec.synth import SynthConfig, generate

    return generate(SynthConfig(candidates=80, jobs=25, interactions=240,
                                skills=20, concepts=6, categories=4, locations=5,
                                companies=6, horizon_days=240, seed=42))


@pytest.fixture(scope="session")
def small_built(small_corpus):
    from jobrec.ingest import build_graph

    graph, info = build_graph(
        small_corpus.candidates,
        small_corpus.jobs,
        small_corpus.interactions,
        small_corpus.lexicon,
    )
    graph.freeze()
    return graph, info

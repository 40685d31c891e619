"""Seeded synthetic corpus generator with planted structure.

Interactions pick a candidate (activity is Zipf-skewed: many candidates
never interact) and then a job softmax-weighted by skill overlap, category
match, location match, and temporal closeness, restricted to jobs alive at
the interaction time. Resume/description texts are templated keyword lists
so skill extraction round-trips the planted skills.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingest import CandidateRecord, InteractionRecord, JobRecord, SkillLexicon

EPOCH_START = 1_577_836_800  # 2020-01-01 UTC
DAY = 86_400

CONTRACTS = ["permanent", "temporary", "freelance"]
ORIGINS = ["linkedin", "jobboard", "referral", "cooptation"]


class SynthError(ValueError):
    """Infeasible configuration (e.g. no job alive for any candidate)."""


@dataclass
class SynthConfig:
    candidates: int = 300
    jobs: int = 60
    interactions: int = 900
    skills: int = 40
    concepts: int = 12
    categories: int = 8
    locations: int = 10
    companies: int = 12
    horizon_days: int = 540
    job_lifespan_days: int = 45
    # affinity weights in the job-choice softmax
    w_skill: float = 1.0
    w_category: float = 1.5
    w_location: float = 1.0
    w_recency: float = 0.5
    missingness: dict[str, float] = field(
        default_factory=lambda: {"salary": 0.9, "experience": 0.96}
    )
    min_skills: int = 2
    max_skills: int = 5
    skill_zipf: float = 1.1
    activity_zipf: float = 1.15
    seed: int = 0

    def __post_init__(self):
        counts = (
            self.candidates,
            self.jobs,
            self.interactions,
            self.skills,
            self.concepts,
            self.categories,
            self.locations,
            self.companies,
        )
        if min(counts) < 1 or self.horizon_days < 1 or self.job_lifespan_days < 1:
            raise SynthError("all counts and spans must be >= 1")
        if any(not (0 <= m < 1) for m in self.missingness.values()):
            raise SynthError("missingness rates must be in [0, 1)")
        if min(self.w_skill, self.w_category, self.w_location, self.w_recency) < 0:
            raise SynthError("affinity weights must be >= 0")

    def scaled(self, factor: float) -> "SynthConfig":
        """Scale entity counts by `factor` (>= 1/candidates), keep the rest."""
        return SynthConfig(
            candidates=max(1, int(self.candidates * factor)),
            jobs=max(1, int(self.jobs * factor)),
            interactions=max(1, int(self.interactions * factor)),
            skills=self.skills,
            concepts=self.concepts,
            categories=self.categories,
            locations=self.locations,
            companies=self.companies,
            horizon_days=self.horizon_days,
            job_lifespan_days=self.job_lifespan_days,
            w_skill=self.w_skill,
            w_category=self.w_category,
            w_location=self.w_location,
            w_recency=self.w_recency,
            missingness=dict(self.missingness),
            min_skills=self.min_skills,
            max_skills=self.max_skills,
            skill_zipf=self.skill_zipf,
            activity_zipf=self.activity_zipf,
            seed=self.seed,
        )


@dataclass
class Corpus:
    candidates: list[CandidateRecord]
    jobs: list[JobRecord]
    interactions: list[InteractionRecord]
    lexicon: SkillLexicon
    config: SynthConfig


def _skill_keyword(i: int) -> str:
    # every fifth keyword is two tokens to exercise multiword matching
    return f"sk{i} craft" if i % 5 == 4 else f"sk{i}"


def _zipf_probs(n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** exponent
    return w / w.sum()


def generate(config: SynthConfig) -> Corpus:
    rng = np.random.default_rng(config.seed)
    horizon = config.horizon_days * DAY
    lifespan = config.job_lifespan_days * DAY

    # concept tree, then skills attached to concepts
    concepts = [f"c{i}" for i in range(config.concepts)]
    parents = {
        concepts[i]: concepts[int(rng.integers(0, i))] for i in range(1, config.concepts)
    }
    skill_ids = [f"s{i}" for i in range(config.skills)]
    skill_concept = {
        sid: concepts[int(rng.integers(0, config.concepts))] for sid in skill_ids
    }
    keywords = {_skill_keyword(i): skill_ids[i] for i in range(config.skills)}
    lexicon = SkillLexicon(
        keywords=keywords, skills=skill_concept, concepts=concepts, parents=parents
    )

    categories = [f"cat{i}" for i in range(config.categories)]
    locations = [str(75000 + i) for i in range(config.locations)]
    companies = [f"comp{i}" for i in range(config.companies)]
    skill_probs = _zipf_probs(config.skills, config.skill_zipf)

    def draw_skills() -> list[str]:
        k = int(rng.integers(config.min_skills, config.max_skills + 1))
        k = min(k, config.skills)
        picks = rng.choice(config.skills, size=k, replace=False, p=skill_probs)
        return [skill_ids[i] for i in sorted(picks)]

    def maybe(name: str, value):
        rate = config.missingness.get(name, 0.0)
        return None if rng.random() < rate else value

    candidates: list[CandidateRecord] = []
    cand_cat: list[int] = []
    cand_loc: list[int] = []
    for i in range(config.candidates):
        created = EPOCH_START + int(rng.integers(0, horizon))
        skills = draw_skills()
        cat = int(rng.integers(0, config.categories))
        loc = int(rng.integers(0, config.locations))
        cand_cat.append(cat)
        cand_loc.append(loc)
        text_skills = " ".join(_skill_keyword(skill_ids.index(s)) for s in skills)
        candidates.append(
            CandidateRecord(
                external_id=f"c{i}",
                created=created,
                resume=f"profile {categories[cat]} near {locations[loc]} skills {text_skills}",
                salary=maybe("salary", int(rng.integers(3, 10)) * 10_000),
                experience=maybe("experience", int(rng.integers(0, 16))),
                contract=maybe("contract", CONTRACTS[int(rng.integers(0, len(CONTRACTS)))]),
                zip=maybe("zip", locations[loc]),
                category=maybe("category", categories[cat]),
                origin=maybe("origin", ORIGINS[int(rng.integers(0, len(ORIGINS)))]),
                skills=skills,
            )
        )

    jobs: list[JobRecord] = []
    job_cat_list: list[int] = []
    job_loc_list: list[int] = []
    for i in range(config.jobs):
        created = EPOCH_START + int(rng.integers(0, horizon))
        skills = draw_skills()
        cat = int(rng.integers(0, config.categories))
        loc = int(rng.integers(0, config.locations))
        job_cat_list.append(cat)
        job_loc_list.append(loc)
        text_skills = " ".join(_skill_keyword(skill_ids.index(s)) for s in skills)
        jobs.append(
            JobRecord(
                external_id=f"j{i}",
                created=created,
                description=f"position {categories[cat]} at {locations[loc]} requires {text_skills}",
                company=maybe("company", companies[int(rng.integers(0, config.companies))]),
                salary=maybe("salary", int(rng.integers(3, 10)) * 10_000),
                experience=maybe("experience", int(rng.integers(0, 16))),
                contract=maybe("contract", CONTRACTS[int(rng.integers(0, len(CONTRACTS)))]),
                zip=maybe("zip", locations[loc]),
                category=maybe("category", categories[cat]),
                skills=skills,
            )
        )

    # planted affinity, vectorized over jobs
    skill_index = {sid: i for i, sid in enumerate(skill_ids)}
    job_skills = np.zeros((config.jobs, config.skills))
    for i, job in enumerate(jobs):
        for sid in job.skills:
            job_skills[i, skill_index[sid]] = 1.0
    job_sizes = job_skills.sum(axis=1)
    job_created = np.asarray([j.created for j in jobs], dtype=np.int64)
    job_cat = np.asarray(job_cat_list)
    job_loc = np.asarray(job_loc_list)

    activity = _zipf_probs(config.candidates, config.activity_zipf)
    activity = activity[rng.permutation(config.candidates)]

    raw: list[tuple[int, int, int]] = []  # (t, candidate index, job index)
    for _ in range(config.interactions):
        for _attempt in range(1000):
            u = int(rng.choice(config.candidates, p=activity))
            cand = candidates[u]
            alive = cand.created < job_created + lifespan
            if alive.any():
                break
        else:
            raise SynthError("no job alive for any sampled candidate; config infeasible")
        cvec = np.zeros(config.skills)
        for sid in cand.skills:
            cvec[skill_index[sid]] = 1.0
        inter = job_skills @ cvec
        union = np.maximum(job_sizes + len(cand.skills) - inter, 1.0)
        logits = (
            config.w_skill * (inter / union)
            + config.w_category * (job_cat == cand_cat[u])
            + config.w_location * (job_loc == cand_loc[u])
            + config.w_recency
            * np.exp(-np.abs(job_created - cand.created) / lifespan)
        )
        logits = np.where(alive, logits, -np.inf)
        probs = np.exp(logits - logits[alive].max())
        probs /= probs.sum()
        j = int(rng.choice(config.jobs, p=probs))
        lo = max(cand.created, int(job_created[j]))
        hi = int(job_created[j]) + lifespan
        t = int(rng.integers(lo, hi))
        raw.append((t, u, j))

    raw.sort(key=lambda r: (r[0], r[1], r[2]))
    interactions = [
        InteractionRecord(candidate=f"c{u}", job=f"j{j}", t=t) for t, u, j in raw
    ]
    return Corpus(
        candidates=candidates,
        jobs=jobs,
        interactions=interactions,
        lexicon=lexicon,
        config=config,
    )


@dataclass
class CorpusStats:
    num_candidates: int
    num_jobs: int
    num_interactions: int
    interactions_per_candidate: dict[int, int]
    candidates_with_interaction: float

    def as_dict(self) -> dict:
        return {
            "num_candidates": self.num_candidates,
            "num_jobs": self.num_jobs,
            "num_interactions": self.num_interactions,
            "interactions_per_candidate": {
                str(k): v for k, v in sorted(self.interactions_per_candidate.items())
            },
            "candidates_with_interaction": self.candidates_with_interaction,
        }


def describe(corpus: Corpus) -> CorpusStats:
    per_candidate: dict[str, int] = {}
    for rec in corpus.interactions:
        per_candidate[rec.candidate] = per_candidate.get(rec.candidate, 0) + 1
    hist: dict[int, int] = {}
    active = 0
    for cand in corpus.candidates:
        k = per_candidate.get(cand.external_id, 0)
        hist[k] = hist.get(k, 0) + 1
        if k > 0:
            active += 1
    return CorpusStats(
        num_candidates=len(corpus.candidates),
        num_jobs=len(corpus.jobs),
        num_interactions=len(corpus.interactions),
        interactions_per_candidate=hist,
        candidates_with_interaction=active / len(corpus.candidates),
    )


def write_corpus(corpus: Corpus, out_dir: str) -> None:
    """Emit the ingest jsonl files plus lexicon.json."""
    import json
    import os

    os.makedirs(out_dir, exist_ok=True)

    def dump(path, records, fields):
        with open(os.path.join(out_dir, path), "w", encoding="utf-8") as f:
            for rec in records:
                row = {}
                for k_out, k_in in fields.items():
                    v = getattr(rec, k_in)
                    if v is None or v == []:
                        continue
                    row[k_out] = v
                f.write(json.dumps(row, sort_keys=True) + "\n")

    dump(
        "candidates.jsonl",
        corpus.candidates,
        {
            "id": "external_id",
            "created": "created",
            "resume": "resume",
            "salary": "salary",
            "experience": "experience",
            "contract": "contract",
            "zip": "zip",
            "category": "category",
            "origin": "origin",
            "skills": "skills",
        },
    )
    dump(
        "jobs.jsonl",
        corpus.jobs,
        {
            "id": "external_id",
            "created": "created",
            "description": "description",
            "company": "company",
            "salary": "salary",
            "experience": "experience",
            "contract": "contract",
            "zip": "zip",
            "category": "category",
            "skills": "skills",
        },
    )
    with open(os.path.join(out_dir, "interactions.jsonl"), "w", encoding="utf-8") as f:
        for rec in corpus.interactions:
            f.write(
                json.dumps(
                    {"candidate": rec.candidate, "job": rec.job, "t": rec.t}, sort_keys=True
                )
                + "\n"
            )
    corpus.lexicon.to_json(os.path.join(out_dir, "lexicon.json"))

"""Corpus ingestion: records -> heterogeneous temporal graph.

Candidates and jobs become featured nodes (text embedding), their declared
and extracted attributes become shared categorical nodes, every interaction
is reified as a shortlist node, and each entity is wired to the month node
of its creation month.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .graph import GraphError, HeteroTemporalGraph, NodeKind

_TOKEN_RE = re.compile(r"[a-z0-9]+")

SALARY_BAND = 10_000


class IngestError(ValueError):
    """Bad records: dangling references, duplicate ids, schema violations."""


@dataclass
class CandidateRecord:
    external_id: str
    created: int
    resume: str = ""
    salary: int | None = None
    experience: int | None = None
    contract: str | None = None
    zip: str | None = None
    category: str | None = None
    origin: str | None = None
    skills: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.created <= 0:
            raise IngestError(f"candidate {self.external_id}: creation timestamp must be > 0")


@dataclass
class JobRecord:
    external_id: str
    created: int
    description: str = ""
    company: str | None = None
    salary: int | None = None
    experience: int | None = None
    contract: str | None = None
    zip: str | None = None
    category: str | None = None
    skills: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.created <= 0:
            raise IngestError(f"job {self.external_id}: creation timestamp must be > 0")


@dataclass(frozen=True)
class InteractionRecord:
    candidate: str
    job: str
    t: int


class SkillLexicon:
    """keyword -> skill, skill -> concept, concept -> parent concept."""

    def __init__(
        self,
        keywords: dict[str, str],
        skills: dict[str, str],
        concepts: list[str],
        parents: dict[str, str],
    ):
        self.keywords = {k.strip().lower(): v for k, v in keywords.items()}
        self.skills = dict(skills)
        self.concepts = list(concepts)
        self.parents = dict(parents)
        self._check_acyclic()
        # multiword keywords matched as consecutive token runs
        self._by_first: dict[str, list[tuple[tuple[str, ...], str]]] = {}
        for kw, sid in sorted(self.keywords.items()):
            toks = tuple(_TOKEN_RE.findall(kw))
            if not toks:
                continue
            self._by_first.setdefault(toks[0], []).append((toks, sid))

    def _check_acyclic(self):
        for start in self.parents:
            seen = {start}
            cur = start
            while cur in self.parents:
                cur = self.parents[cur]
                if cur in seen:
                    raise IngestError(f"concept parent cycle through {cur!r}")
                seen.add(cur)

    def concept_of(self, skill_id: str) -> str | None:
        return self.skills.get(skill_id)

    @classmethod
    def from_json(cls, path: str) -> "SkillLexicon":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return cls(
            keywords=data.get("keywords", {}),
            skills=data.get("skills", {}),
            concepts=data.get("concepts", []),
            parents=data.get("parents", {}),
        )

    def to_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(
                {
                    "keywords": self.keywords,
                    "skills": self.skills,
                    "concepts": self.concepts,
                    "parents": self.parents,
                },
                f,
                sort_keys=True,
                indent=1,
            )


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def extract_skills(text: str, lexicon: SkillLexicon) -> set[str]:
    """Case-insensitive whole-token matching; multiword keywords need consecutive tokens."""
    toks = tokenize(text)
    found: set[str] = set()
    for i, tok in enumerate(toks):
        for pattern, sid in lexicon._by_first.get(tok, ()):
            if tuple(toks[i : i + len(pattern)]) == pattern:
                found.add(sid)
    return found


class EmbeddingError(RuntimeError):
    """The embedding provider failed or broke its contract."""


class HashedBagOfWords:
    """Deterministic dependency-free text embedding: hashed token counts, L2-normed.

    Stands in for a sentence encoder behind the same interface; any provider
    with `dimension` and `embed(text) -> vector` plugs in instead.
    """

    def __init__(self, dimension: int = 128, seed: int = 13):
        self.dimension = dimension
        self._key = seed.to_bytes(8, "little")

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for tok in tokenize(text):
            vec[self._bucket(tok)] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


def embed_text(text: str, provider) -> np.ndarray:
    """Unit-norm (or zero, for empty text) vector from the provider."""
    if not text or not text.strip():
        return np.zeros(provider.dimension)
    try:
        vec = np.asarray(provider.embed(text), dtype=np.float64)
    except Exception as exc:
        raise EmbeddingError(f"embedding provider failed: {exc}") from exc
    if vec.shape != (provider.dimension,):
        raise EmbeddingError(f"provider returned shape {vec.shape}, wanted ({provider.dimension},)")
    norm = float(np.linalg.norm(vec))
    if norm != 0.0 and abs(norm - 1.0) > 1e-9:
        raise EmbeddingError(f"provider output norm {norm} outside {{0}} u [1 +- 1e-9]")
    return vec


def month_index(t: int, t_first: int) -> int:
    """Calendar-month boundaries (UTC) between month(t_first) and month(t); clamped at 0."""
    a = datetime.fromtimestamp(t_first, tz=timezone.utc)
    b = datetime.fromtimestamp(t, tz=timezone.utc)
    idx = (b.year - a.year) * 12 + (b.month - a.month)
    return max(idx, 0)


def month_start(t: int) -> int:
    d = datetime.fromtimestamp(t, tz=timezone.utc)
    return int(datetime(d.year, d.month, 1, tzinfo=timezone.utc).timestamp())


@dataclass
class GraphBuildInfo:
    """External-id maps and the interaction alignment a run needs downstream."""

    t_first: int
    candidate_gid: dict[str, int]
    job_gid: dict[str, int]
    shortlist_gids: list[int]
    interaction_ts: list[int]
    month_gid: dict[int, int]  # month start timestamp -> node id

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(
                {
                    "t_first": self.t_first,
                    "candidate_gid": self.candidate_gid,
                    "job_gid": self.job_gid,
                    "shortlist_gids": self.shortlist_gids,
                    "interaction_ts": self.interaction_ts,
                    "month_gid": {str(k): v for k, v in self.month_gid.items()},
                },
                f,
                sort_keys=True,
            )

    @classmethod
    def load(cls, path: str) -> "GraphBuildInfo":
        with open(path, "r", encoding="utf-8") as f:
            d = json.load(f)
        return cls(
            t_first=d["t_first"],
            candidate_gid=d["candidate_gid"],
            job_gid=d["job_gid"],
            shortlist_gids=d["shortlist_gids"],
            interaction_ts=d["interaction_ts"],
            month_gid={int(k): v for k, v in d["month_gid"].items()},
        )


class _GraphAssembler:
    def __init__(self, graph: HeteroTemporalGraph, lexicon: SkillLexicon):
        self.g = graph
        self.lexicon = lexicon
        self.attr_nodes: dict[tuple, int] = {}

    def attr(self, kind: NodeKind, key) -> int:
        node = self.attr_nodes.get((kind, key))
        if node is None:
            node = self.g.add_node(kind)
            self.attr_nodes[(kind, key)] = node
        return node

    def skill_node(self, skill_id: str) -> int:
        key = (NodeKind.SKILL, skill_id)
        node = self.attr_nodes.get(key)
        if node is not None:
            return node
        node = self.g.add_node(NodeKind.SKILL)
        self.attr_nodes[key] = node
        concept = self.lexicon.concept_of(skill_id)
        if concept is not None:
            cnode = self.concept_node(concept)
            kind = self.g.registry.lookup(NodeKind.SKILL, "has_concept", NodeKind.CONCEPT)
            self.g.add_edge(node, kind, cnode)
        return node

    def concept_node(self, concept_id: str) -> int:
        key = (NodeKind.CONCEPT, concept_id)
        node = self.attr_nodes.get(key)
        if node is not None:
            return node
        node = self.g.add_node(NodeKind.CONCEPT)
        self.attr_nodes[key] = node
        parent = self.lexicon.parents.get(concept_id)
        if parent is not None:
            pnode = self.concept_node(parent)
            kind = self.g.registry.lookup(NodeKind.CONCEPT, "subconcept_of", NodeKind.CONCEPT)
            self.g.add_edge(node, kind, pnode)
        return node


def build_graph(
    candidates: list[CandidateRecord],
    jobs: list[JobRecord],
    interactions: list[InteractionRecord],
    lexicon: SkillLexicon,
    provider=None,
) -> tuple[HeteroTemporalGraph, GraphBuildInfo]:
    """Assemble the full graph; see the module docstring for the wiring rules."""
    if not interactions:
        raise IngestError("at least one interaction is required")
    provider = provider if provider is not None else HashedBagOfWords()
    g = HeteroTemporalGraph()
    reg = g.registry
    K = NodeKind
    asm = _GraphAssembler(g, lexicon)
    t_first = min(i.t for i in interactions)

    candidate_gid: dict[str, int] = {}
    job_gid: dict[str, int] = {}
    month_gid: dict[int, int] = {}
    pending_month: list[tuple[int, NodeKind, int]] = []  # (node, kind, timestamp)

    def month_node(ts: int) -> int:
        start = month_start(ts)
        node = month_gid.get(start)
        if node is None:
            node = g.add_node(K.TEMPORAL, start, feature=[float(month_index(ts, t_first))])
            month_gid[start] = node
        return node

    def link(src: int, src_kind: NodeKind, name: str, dst: int, dst_kind: NodeKind) -> None:
        g.add_edge(src, reg.lookup(src_kind, name, dst_kind), dst)

    for rec in candidates:
        if rec.external_id in candidate_gid:
            raise IngestError(f"duplicate candidate id {rec.external_id!r}")
        gid = g.add_node(K.CANDIDATE, rec.created, feature=embed_text(rec.resume, provider))
        candidate_gid[rec.external_id] = gid
        pending_month.append((gid, K.CANDIDATE, rec.created))
        if rec.salary is not None:
            band = (int(rec.salary) // SALARY_BAND) * SALARY_BAND
            link(gid, K.CANDIDATE, "wants_salary", asm.attr(K.SALARY, band), K.SALARY)
        if rec.experience is not None:
            link(gid, K.CANDIDATE, "has_experience", asm.attr(K.EXPERIENCE, int(rec.experience)), K.EXPERIENCE)
        if rec.contract is not None:
            link(gid, K.CANDIDATE, "wants_contract", asm.attr(K.CONTRACT, rec.contract), K.CONTRACT)
        if rec.zip is not None:
            link(gid, K.CANDIDATE, "at_location", asm.attr(K.LOCATION, rec.zip), K.LOCATION)
        if rec.category is not None:
            link(gid, K.CANDIDATE, "has_category", asm.attr(K.CATEGORY, rec.category), K.CATEGORY)
        if rec.origin is not None:
            link(gid, K.CANDIDATE, "has_origin", asm.attr(K.ORIGIN, rec.origin), K.ORIGIN)
        for sid in sorted(set(rec.skills) | extract_skills(rec.resume, lexicon)):
            link(gid, K.CANDIDATE, "has_skill", asm.skill_node(sid), K.SKILL)

    for rec in jobs:
        if rec.external_id in job_gid:
            raise IngestError(f"duplicate job id {rec.external_id!r}")
        gid = g.add_node(K.JOB, rec.created, feature=embed_text(rec.description, provider))
        job_gid[rec.external_id] = gid
        pending_month.append((gid, K.JOB, rec.created))
        if rec.company is not None:
            link(gid, K.JOB, "at_company", asm.attr(K.COMPANY, rec.company), K.COMPANY)
        if rec.salary is not None:
            band = (int(rec.salary) // SALARY_BAND) * SALARY_BAND
            link(gid, K.JOB, "offers_salary", asm.attr(K.SALARY, band), K.SALARY)
        if rec.experience is not None:
            link(gid, K.JOB, "has_experience", asm.attr(K.EXPERIENCE, int(rec.experience)), K.EXPERIENCE)
        if rec.contract is not None:
            link(gid, K.JOB, "has_contract", asm.attr(K.CONTRACT, rec.contract), K.CONTRACT)
        if rec.zip is not None:
            link(gid, K.JOB, "at_location", asm.attr(K.LOCATION, rec.zip), K.LOCATION)
        if rec.category is not None:
            link(gid, K.JOB, "has_category", asm.attr(K.CATEGORY, rec.category), K.CATEGORY)
        for sid in sorted(set(rec.skills) | extract_skills(rec.description, lexicon)):
            link(gid, K.JOB, "requires_skill", asm.skill_node(sid), K.SKILL)

    shortlist_gids: list[int] = []
    for rec in interactions:
        u = candidate_gid.get(rec.candidate)
        j = job_gid.get(rec.job)
        if u is None:
            raise IngestError(f"interaction references unknown candidate {rec.candidate!r}")
        if j is None:
            raise IngestError(f"interaction references unknown job {rec.job!r}")
        if rec.t < max(g.timestamp_of(u), g.timestamp_of(j)):
            raise IngestError(
                f"interaction ({rec.candidate}, {rec.job}) predates its entities"
            )
        s = g.add_node(K.SHORTLIST, rec.t)
        shortlist_gids.append(s)
        link(s, K.SHORTLIST, "has_candidate", u, K.CANDIDATE)
        link(s, K.SHORTLIST, "has_application", j, K.JOB)
        pending_month.append((s, K.SHORTLIST, rec.t))

    for node, kind, ts in pending_month:
        link(node, kind, "at_time", month_node(ts), K.TEMPORAL)

    info = GraphBuildInfo(
        t_first=t_first,
        candidate_gid=candidate_gid,
        job_gid=job_gid,
        shortlist_gids=shortlist_gids,
        interaction_ts=[i.t for i in interactions],
        month_gid=month_gid,
    )
    return g, info


# ---------------------------------------------------------------------------
# jsonl reading


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise IngestError(f"{where}: missing required field {key!r}")
    return d[key]


def read_candidates(path: str) -> list[CandidateRecord]:
    out = []
    for i, line in enumerate(_lines(path)):
        d = json.loads(line)
        out.append(
            CandidateRecord(
                external_id=str(_require(d, "id", f"{path}:{i + 1}")),
                created=int(_require(d, "created", f"{path}:{i + 1}")),
                resume=d.get("resume") or "",
                salary=d.get("salary"),
                experience=d.get("experience"),
                contract=d.get("contract"),
                zip=d.get("zip"),
                category=d.get("category"),
                origin=d.get("origin"),
                skills=list(d.get("skills") or []),
            )
        )
    return out


def read_jobs(path: str) -> list[JobRecord]:
    out = []
    for i, line in enumerate(_lines(path)):
        d = json.loads(line)
        out.append(
            JobRecord(
                external_id=str(_require(d, "id", f"{path}:{i + 1}")),
                created=int(_require(d, "created", f"{path}:{i + 1}")),
                description=d.get("description") or "",
                company=d.get("company"),
                salary=d.get("salary"),
                experience=d.get("experience"),
                contract=d.get("contract"),
                zip=d.get("zip"),
                category=d.get("category"),
                skills=list(d.get("skills") or []),
            )
        )
    return out


def read_interactions(path: str) -> list[InteractionRecord]:
    out = []
    for i, line in enumerate(_lines(path)):
        d = json.loads(line)
        out.append(
            InteractionRecord(
                candidate=str(_require(d, "candidate", f"{path}:{i + 1}")),
                job=str(_require(d, "job", f"{path}:{i + 1}")),
                t=int(_require(d, "t", f"{path}:{i + 1}")),
            )
        )
    return out


def _lines(path: str):
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield line

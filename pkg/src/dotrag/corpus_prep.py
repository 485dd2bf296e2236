"""Turn a triple-store KG into a textualized, embedded index.

The stages are: write one bracket-marked article per entity (re-prompting until
every neighbour is mentioned), summarise each entity from its article, describe
each triple from its head entity's article, then embed and assemble the index.
Hybrid deduplication and batch type relabelling operate on a finished index.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence, TypeVar

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .graph_store import Chunk, Entity, GraphIndex, Relation, Schema
from .providers import LLM, Embedder, LlmRequest, ProviderError, Stage, render_prompt
from .selection import format_types

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str


def read_triples(path: str | Path) -> list[Triple]:
    """Read ``head<TAB>relation<TAB>tail`` lines; ``head|relation|tail`` is also accepted."""
    triples = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t") if "\t" in line else line.split("|")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise ValueError(f"{path}:{line_no}: expected head, relation, tail; got {line!r}")
            triples.append(Triple(*(p.strip() for p in parts)))
    return triples


def neighborhoods(triples: Sequence[Triple]) -> dict[str, list[Triple]]:
    """Entity name -> every triple it takes part in, in file order."""
    out: dict[str, list[Triple]] = defaultdict(list)
    for t in triples:
        out[t.head].append(t)
        if t.tail != t.head:
            out[t.tail].append(t)
    return dict(out)


def neighbor_names(center: str, triples: Iterable[Triple]) -> list[str]:
    names = []
    for t in triples:
        other = t.tail if t.head == center else t.head
        if other != center and other not in names:
            names.append(other)
    return names


def _norm(name: str) -> str:
    return " ".join(name.casefold().split())


_ANGLE = re.compile(r"<([^<>\n]+)>|⟨([^⟨⟩\n]+)⟩")
_SQUARE = re.compile(r"\[([^\[\]\n]+)\]")


def parse_markup(text: str) -> tuple[set[str], set[str]]:
    """Normalised names found in angle brackets (centre) and square brackets (neighbours)."""
    centers = {_norm(a or b) for a, b in _ANGLE.findall(text)}
    neighbors = {_norm(m) for m in _SQUARE.findall(text)}
    return centers, neighbors


@dataclass(frozen=True)
class MarkedChunk:
    center: str
    text: str
    required_entities: tuple[str, ...]
    attempts: int = 1

    def mentioned(self) -> set[str]:
        """Required neighbours (original spelling) that appear in square brackets."""
        _, square = parse_markup(self.text)
        return {n for n in self.required_entities if _norm(n) in square}


def missing_entities(text: str, center: str, required: Sequence[str]) -> list[str]:
    angle, square = parse_markup(text)
    missing = [] if _norm(center) in angle else [center]
    return missing + [n for n in required if _norm(n) not in square]


class CoverageError(RuntimeError):
    def __init__(self, center: str, missing: list[str], attempts: int, last_text: str):
        super().__init__(f"{center!r}: still missing {missing} after {attempts} attempts")
        self.center = center
        self.missing = missing
        self.attempts = attempts
        self.last_text = last_text

    def record(self) -> dict:
        return {"stage": "textualize", "entity": self.center, "missing": self.missing, "attempts": self.attempts}


def textualize_entity(
    center: str,
    neighborhood: Sequence[Triple],
    llm: LLM,
    max_retries: int = 3,
    template_dir=None,
) -> MarkedChunk:
    """Generate a marked article, re-prompting with the missing names at most ``max_retries`` times."""
    if not neighborhood:
        raise ValueError(f"{center!r} has an empty neighbourhood")
    required = neighbor_names(center, neighborhood)
    facts = "\n".join(f"- {t.head} | {t.relation} | {t.tail}" for t in neighborhood)
    missing: list[str] = []
    text = ""
    for attempt in range(1, max_retries + 2):
        note = ""
        if missing:
            note = "MISSING ENTITIES (your last draft left these out): " + ", ".join(f"[{m}]" for m in missing) + "\n"
        prompt = render_prompt(
            "textualize_chunk",
            template_dir,
            center=center,
            neighbors=", ".join(f"[{n}]" for n in required),
            facts=facts,
            missing=note,
        )
        text = llm.complete(LlmRequest(Stage.TEXTUALIZE_CHUNK, prompt)).data["text"]
        missing = missing_entities(text, center, required)
        if not missing:
            return MarkedChunk(center, text, tuple(required), attempt)
    raise CoverageError(center, missing, max_retries + 1, text)


def summarize_entity(name: str, chunk: MarkedChunk, schema: Schema, llm: LLM, template_dir=None) -> tuple[str, str]:
    """Infer (type label, description) from the entity's article; unknown labels become ``unsure``."""
    prompt = render_prompt(
        "entity_summary",
        template_dir,
        entity=name,
        entity_types=format_types(schema),
        chunk=chunk.text,
        unsure_label=schema.unsure_label,
    )
    data = llm.complete(LlmRequest(Stage.ENTITY_SUMMARY, prompt)).data
    label = data["type"]
    if not schema.accepts(label):
        matches = [t for t in schema.labels | {schema.unsure_label} if t.casefold() == label.casefold()]
        label = matches[0] if matches else schema.unsure_label
    return label, data["description"]


def describe_relations(name: str, chunk: MarkedChunk, triples: Sequence[Triple], llm: LLM, template_dir=None) -> list[str]:
    """One description per triple, in order. A count mismatch is re-prompted once, then raised."""
    if not triples:
        return []
    listing = "\n".join(f"{i + 1}. {t.head} | {t.relation} | {t.tail}" for i, t in enumerate(triples))
    prompt = render_prompt("relation_describe", template_dir, entity=name, chunk=chunk.text, triples=listing)
    for attempt in range(2):
        descs = llm.complete(LlmRequest(Stage.RELATION_DESCRIBE, prompt)).data["descriptions"]
        if len(descs) == len(triples) and all(d.strip() for d in descs):
            return [d.strip() for d in descs]
        prompt = prompt + f"\nNOTE: return exactly {len(triples)} descriptions, one per triple.\n"
    raise ValueError(f"{name!r}: expected {len(triples)} relation descriptions, got {len(descs)}")


def _pmap(fn: Callable[[T], R], items: Sequence[T], workers: int) -> list[R]:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class BuildReport:
    failures: list[dict] = field(default_factory=list)
    llm_stages: dict[str, int] = field(default_factory=dict)


def build_index(
    triples: Sequence[Triple],
    schema: Schema,
    llm: LLM,
    embedder: Embedder,
    max_retries: int = 3,
    workers: int = 1,
    template_dir=None,
    progress: Callable[[str, int, int], None] | None = None,
) -> tuple[GraphIndex, BuildReport]:
    """Textualize, summarise, describe and embed a triple list into a :class:`GraphIndex`.

    Entity ids are the entity names. Per-entity failures are collected in the
    report; the entity is still indexed with its best-effort text.
    """
    report = BuildReport()
    hoods = neighborhoods(triples)
    names = list(hoods)

    def stage1(name):
        try:
            return textualize_entity(name, hoods[name], llm, max_retries, template_dir)
        except CoverageError as err:
            report.failures.append(err.record())
            return MarkedChunk(name, err.last_text, tuple(neighbor_names(name, hoods[name])), err.attempts)

    chunks = dict(zip(names, _pmap(stage1, names, workers)))
    if progress:
        progress("textualize", len(chunks), len(names))

    def stage2(name):
        try:
            return summarize_entity(name, chunks[name], schema, llm, template_dir)
        except ProviderError as exc:
            report.failures.append({"stage": "summarize", "entity": name, "error": str(exc)})
            return schema.unsure_label, f"{name}."

    summaries = dict(zip(names, _pmap(stage2, names, workers)))
    if progress:
        progress("summarize", len(summaries), len(names))

    outgoing: dict[str, list[tuple[int, Triple]]] = defaultdict(list)
    for i, t in enumerate(triples):
        if t.head != t.tail:
            outgoing[t.head].append((i, t))

    def stage3(name):
        items = outgoing.get(name, [])
        try:
            descs = describe_relations(name, chunks[name], [t for _, t in items], llm, template_dir)
        except (ValueError, ProviderError) as exc:
            report.failures.append({"stage": "describe", "entity": name, "error": str(exc)})
            descs = [f"{t.head} {t.relation.replace('_', ' ')} {t.tail}." for _, t in items]
        return [(i, t, d) for (i, t), d in zip(items, descs)]

    described = sorted((x for batch in _pmap(stage3, names, workers) for x in batch), key=lambda x: x[0])
    if progress:
        progress("describe", len(described), sum(len(v) for v in outgoing.values()))

    entities, chunk_recs, ent_emb = [], [], {}
    for name in names:
        mc = chunks[name]
        cid = f"chunk:{name}"
        etype, desc = summaries[name]
        entities.append(Entity(name, name, etype, desc or f"{name}.", frozenset({cid})))
        chunk_recs.append(Chunk(cid, mc.text, frozenset(mc.mentioned() | {name}), center_id=name))
        ent_emb[name] = embedder.embed(name)
    relations, rel_emb = [], {}
    width = len(str(len(triples)))
    for i, t, desc in described:
        rid = f"rel:{i:0{width}d}"
        relations.append(Relation(rid, t.head, t.tail, desc, (t.relation,)))
        rel_emb[rid] = embedder.embed(desc)
    index = GraphIndex.build(entities, relations, chunk_recs, schema, ent_emb, rel_emb)
    return index, report


# -- hybrid entity resolution ------------------------------------------------


@dataclass(frozen=True)
class MergeCluster:
    members: tuple[str, ...]
    canonical: str
    aliases: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"canonical": self.canonical, "members": list(self.members), "aliases": list(self.aliases)}


def similarity_matrix(vectors: np.ndarray) -> np.ndarray:
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm embedding in dedup input")
    u = v / norms
    return u @ u.T


def candidate_clusters(ids: Sequence[str], vectors: np.ndarray, tau: float = 0.60) -> list[list[str]]:
    """Single-link components of the graph joining pairs with cosine >= ``tau``.

    Components are returned with members sorted, ordered by their first member.
    """
    if not 0 < tau <= 1:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    if len(ids) == 0:
        return []
    sims = similarity_matrix(vectors)
    adjacency = csr_matrix(sims >= tau - 1e-12)
    _, labels = connected_components(adjacency, directed=False)
    groups: dict[int, list[str]] = defaultdict(list)
    for eid, lab in zip(ids, labels):
        groups[lab].append(eid)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def confirm_merges(
    component: Sequence[str],
    entities: Mapping[str, Entity],
    llm: LLM,
    template_dir=None,
) -> list[list[str]]:
    """Ask the curator which members of a candidate component are true duplicates.

    Returns a partition of ``component``; on provider failure every member stays single.
    """
    listing = "\n".join(f"{eid} | {entities[eid].name} | {entities[eid].description}" for eid in component)
    prompt = render_prompt("merge_confirm", template_dir, candidates=listing)
    try:
        groups = llm.complete(LlmRequest(Stage.MERGE_CONFIRM, prompt)).data["groups"]
    except ProviderError as exc:
        logger.warning("curator failed on %s, leaving unmerged: %s", list(component), exc)
        return [[eid] for eid in component]
    allowed = set(component)
    used: set[str] = set()
    parts: list[list[str]] = []
    for group in groups:
        clean = [g for g in dict.fromkeys(group) if g in allowed and g not in used]
        if len(clean) != len(group):
            logger.warning("curator group %s had unknown or repeated ids; kept %s", group, clean)
        if clean:
            used.update(clean)
            parts.append(sorted(clean))
    parts.extend([eid] for eid in component if eid not in used)
    return sorted(parts, key=lambda g: g[0])


def dedup_entities(
    entities: Mapping[str, Entity],
    embeddings: Mapping[str, np.ndarray],
    llm: LLM,
    tau: float = 0.60,
    workers: int = 1,
    template_dir=None,
) -> list[MergeCluster]:
    """Threshold candidates, then let the curator confirm. Clusters partition the input ids."""
    ids = sorted(entities)
    if not ids:
        return []
    vectors = np.vstack([np.asarray(embeddings[i], dtype=np.float64) for i in ids])
    comps = candidate_clusters(ids, vectors, tau)
    multi = [c for c in comps if len(c) > 1]
    confirmed = dict(zip(map(tuple, multi), _pmap(lambda c: confirm_merges(c, entities, llm, template_dir), multi, workers)))
    clusters = []
    for comp in comps:
        for part in confirmed.get(tuple(comp), [comp]):
            canonical = part[0]
            aliases = tuple(entities[m].name for m in part if m != canonical)
            clusters.append(MergeCluster(tuple(part), canonical, aliases))
    return clusters


def apply_merges(index: GraphIndex, clusters: Sequence[MergeCluster]) -> GraphIndex:
    """Collapse each cluster into its canonical entity.

    Descriptions are concatenated (never dropped), relations and chunk links are
    re-pointed to the canonical id, and relations that become self-loops are removed.
    """
    target = {m: c.canonical for c in clusters for m in c.members}
    members = {c.canonical: c for c in clusters}
    entities = []
    for eid, ent in index.entities.items():
        if target.get(eid, eid) != eid:
            continue
        cluster = members.get(eid)
        if cluster is None or len(cluster.members) == 1:
            entities.append(ent)
            continue
        parts = [index.entities[m] for m in cluster.members]
        desc = "\n".join(p.description for p in parts)
        aliases = [p.name for p in parts if p.id != eid]
        if aliases:
            desc += "\nAlso known as: " + "; ".join(aliases)
        chunk_ids = frozenset().union(*(p.chunk_ids for p in parts))
        entities.append(replace(ent, description=desc, chunk_ids=chunk_ids))
    relations = []
    for rel in index.relations.values():
        src, dst = target.get(rel.src, rel.src), target.get(rel.dst, rel.dst)
        if src != dst:
            relations.append(replace(rel, src=src, dst=dst))
    chunks = [
        replace(
            c,
            entity_ids=frozenset(target.get(e, e) for e in c.entity_ids),
            center_id=None if c.center_id is None else target.get(c.center_id, c.center_id),
        )
        for c in index.chunks.values()
    ]
    kept = {e.id for e in entities}
    ent_emb = {k: v for k, v in index.entity_embeddings.items() if k in kept}
    rel_emb = {r.id: index.relation_embeddings[r.id] for r in relations if r.id in index.relation_embeddings}
    return GraphIndex.build(entities, relations, chunks, index.schema, ent_emb, rel_emb)


# -- taxonomic relabelling ---------------------------------------------------


class RelabelError(RuntimeError):
    pass


def _relabel_batch(batch: Sequence[Entity], schema: Schema, llm: LLM, max_retries: int, template_dir) -> list[tuple[str, str]]:
    ids = [e.id for e in batch]
    listing = "\n".join(f"{e.id} | {e.name} | {e.description}" for e in batch)
    feedback = ""
    problems: list[str] = []
    for _ in range(max_retries + 1):
        prompt = render_prompt(
            "type_relabel",
            template_dir,
            entity_types=format_types(schema),
            entities=listing,
            feedback=feedback,
        )
        labels = llm.complete(LlmRequest(Stage.TYPE_RELABEL, prompt)).data["labels"]
        missing = [i for i in ids if i not in labels]
        extra = sorted(set(labels) - set(ids))
        unknown = sorted(i for i in ids if i in labels and not schema.accepts(labels[i]))
        problems = []
        if missing:
            problems.append(f"missing ids: {missing}")
        if extra:
            problems.append(f"unexpected ids: {extra}")
        if unknown:
            problems.append(f"labels outside the type list for: {unknown}")
        if not problems:
            return [(i, labels[i]) for i in ids]
        feedback = "CORRECTIONS NEEDED: " + "; ".join(problems) + "\n"
    raise RelabelError(f"batch {ids[:3]}...: {'; '.join(problems)}")


def relabel_types(
    entities: Sequence[Entity],
    schema: Schema,
    llm: LLM,
    batch_size: int = 20,
    max_retries: int = 2,
    workers: int = 1,
    template_dir=None,
) -> list[tuple[str, str]]:
    """Assign every entity exactly one schema label, batch by batch, in input order."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    batches = [list(entities[i : i + batch_size]) for i in range(0, len(entities), batch_size)]
    results = _pmap(lambda b: _relabel_batch(b, schema, llm, max_retries, template_dir), batches, workers)
    return [pair for batch in results for pair in batch]


def apply_labels(index: GraphIndex, labels: Iterable[tuple[str, str]]) -> GraphIndex:
    mapping = dict(labels)
    entities = [replace(e, entity_type=mapping.get(e.id, e.entity_type)) for e in index.entities.values()]
    return GraphIndex.build(
        entities,
        index.relations.values(),
        index.chunks.values(),
        index.schema,
        index.entity_embeddings,
        index.relation_embeddings,
    )

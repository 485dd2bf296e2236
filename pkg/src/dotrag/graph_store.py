"""Immutable knowledge-graph index: entities, relations, chunks and schema.

The on-disk format is newline-delimited JSON. Every line is one record with a
``"kind"`` discriminator (``entity``, ``relation``, ``chunk`` or ``schema``)::

    {"kind": "schema", "graph_description": "...", "entity_types": [["person", "A human."]]}
    {"kind": "entity", "id": "e1", "name": "Tesla", "entity_type": "organization",
     "description": "...", "chunk_ids": ["c1"], "embedding": [0.1, ...]}
    {"kind": "relation", "id": "r1", "src": "e1", "dst": "e2", "description": "...",
     "keywords": ["ceo"], "embedding": [...]}
    {"kind": "chunk", "id": "c1", "text": "...", "entity_ids": ["e1", "e2"], "center_id": "e1"}
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

logger = logging.getLogger(__name__)

UNSURE = "unsure"
WILDCARD = "*"


class IndexLoadError(ValueError):
    """Base class for index validation failures."""


class IndexParseError(IndexLoadError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ReferentialError(IndexLoadError):
    def __init__(self, missing_id: str, message: str):
        super().__init__(message)
        self.missing_id = missing_id


class SchemaError(IndexLoadError):
    pass


@dataclass(frozen=True)
class EntityType:
    label: str
    definition: str


@dataclass(frozen=True)
class Schema:
    graph_description: str
    entity_types: tuple[EntityType, ...]
    unsure_label: str = UNSURE

    def __post_init__(self):
        if not self.graph_description.strip():
            raise SchemaError("schema graph_description must be non-empty")
        labels = [t.label for t in self.entity_types]
        if len(labels) != len(set(labels)):
            raise SchemaError(f"duplicate entity type labels in schema: {labels}")

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(t.label for t in self.entity_types)

    def accepts(self, label: str) -> bool:
        return label in self.labels or label == self.unsure_label

    def to_record(self) -> dict:
        return {
            "kind": "schema",
            "graph_description": self.graph_description,
            "entity_types": [[t.label, t.definition] for t in self.entity_types],
            "unsure_label": self.unsure_label,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Schema":
        types = []
        for item in rec.get("entity_types", []):
            if isinstance(item, Mapping):
                types.append(EntityType(str(item["label"]), str(item.get("definition", ""))))
            else:
                label, definition = item
                types.append(EntityType(str(label), str(definition)))
        return cls(
            graph_description=str(rec.get("graph_description", "")),
            entity_types=tuple(types),
            unsure_label=str(rec.get("unsure_label", UNSURE)),
        )


@dataclass(frozen=True)
class Entity:
    id: str
    name: str
    entity_type: str
    description: str
    chunk_ids: frozenset[str] = frozenset()
    embedding_id: str = ""

    def to_record(self, embedding=None) -> dict:
        rec = {
            "kind": "entity",
            "id": self.id,
            "name": self.name,
            "entity_type": self.entity_type,
            "description": self.description,
            "chunk_ids": sorted(self.chunk_ids),
            "embedding_id": self.embedding_id or self.id,
        }
        if embedding is not None:
            rec["embedding"] = [float(x) for x in embedding]
        return rec


@dataclass(frozen=True)
class Relation:
    id: str
    src: str
    dst: str
    description: str
    keywords: tuple[str, ...] = ()
    embedding_id: str = ""

    def other(self, node: str) -> str:
        return self.dst if node == self.src else self.src

    def to_record(self, embedding=None) -> dict:
        rec = {
            "kind": "relation",
            "id": self.id,
            "src": self.src,
            "dst": self.dst,
            "description": self.description,
            "keywords": list(self.keywords),
            "embedding_id": self.embedding_id or self.id,
        }
        if embedding is not None:
            rec["embedding"] = [float(x) for x in embedding]
        return rec


@dataclass(frozen=True)
class Chunk:
    id: str
    text: str
    entity_ids: frozenset[str] = frozenset()
    center_id: str | None = None

    def to_record(self) -> dict:
        rec = {"kind": "chunk", "id": self.id, "text": self.text, "entity_ids": sorted(self.entity_ids)}
        if self.center_id is not None:
            rec["center_id"] = self.center_id
        return rec


@dataclass(frozen=True)
class Subgraph:
    """Induced subgraph: a node set plus every relation with both endpoints inside it."""

    nodes: frozenset[str]
    relation_ids: frozenset[str]
    index: "GraphIndex" = field(repr=False, compare=False)

    def neighbors(self, node: str) -> set[str]:
        out = set()
        for rid in self.index.adjacency.get(node, ()):
            if rid in self.relation_ids:
                out.add(self.index.relations[rid].other(node))
        return out

    def adjacency_sets(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for rid in self.relation_ids:
            rel = self.index.relations[rid]
            adj[rel.src].add(rel.dst)
            adj[rel.dst].add(rel.src)
        return adj

    def __len__(self) -> int:
        return len(self.nodes)


class GraphIndex:
    """Read-only view over a validated knowledge graph.

    Build one with :func:`load_index` or :meth:`GraphIndex.build`; the mappings it
    exposes are read-only proxies and embeddings are non-writeable arrays.
    """

    def __init__(
        self,
        entities: Mapping[str, Entity],
        relations: Mapping[str, Relation],
        chunks: Mapping[str, Chunk],
        schema: Schema,
        entity_embeddings: Mapping[str, np.ndarray] | None = None,
        relation_embeddings: Mapping[str, np.ndarray] | None = None,
    ):
        self.schema = schema
        self.entities = MappingProxyType(dict(entities))
        self.relations = MappingProxyType(dict(relations))
        self.chunks = MappingProxyType(dict(chunks))
        adjacency: dict[str, list[str]] = {eid: [] for eid in self.entities}
        for rid, rel in self.relations.items():
            adjacency[rel.src].append(rid)
            adjacency[rel.dst].append(rid)
        self.adjacency = MappingProxyType({k: tuple(v) for k, v in adjacency.items()})
        mentions: dict[str, set[str]] = {eid: set() for eid in self.entities}
        for cid, chunk in self.chunks.items():
            for eid in chunk.entity_ids:
                mentions[eid].add(cid)
        self.chunks_by_entity = MappingProxyType({k: frozenset(v) for k, v in mentions.items()})
        self.entity_embeddings = MappingProxyType(_freeze(entity_embeddings or {}))
        self.relation_embeddings = MappingProxyType(_freeze(relation_embeddings or {}))

    @classmethod
    def build(
        cls,
        entities: Iterable[Entity],
        relations: Iterable[Relation],
        chunks: Iterable[Chunk],
        schema: Schema,
        entity_embeddings: Mapping[str, np.ndarray] | None = None,
        relation_embeddings: Mapping[str, np.ndarray] | None = None,
    ) -> "GraphIndex":
        """Validate records and construct an index. Raises :class:`IndexLoadError` subclasses."""
        ent_map: dict[str, Entity] = {}
        for e in entities:
            _check_entity(e, schema, ent_map)
            ent_map[e.id] = e
        rel_map: dict[str, Relation] = {}
        for r in relations:
            _check_relation(r, ent_map, rel_map)
            rel_map[r.id] = r
        chunk_map: dict[str, Chunk] = {}
        for c in chunks:
            _check_chunk(c, ent_map, chunk_map)
            chunk_map[c.id] = c
        for e in ent_map.values():
            for cid in e.chunk_ids:
                if cid not in chunk_map:
                    raise ReferentialError(cid, f"entity {e.id!r} references unknown chunk id {cid!r}")
        return cls(ent_map, rel_map, chunk_map, schema, entity_embeddings, relation_embeddings)

    def __repr__(self) -> str:
        return (
            f"GraphIndex(entities={len(self.entities)}, relations={len(self.relations)}, "
            f"chunks={len(self.chunks)})"
        )

    def relations_between(self, a: str, b: str) -> list[Relation]:
        """All (parallel) relations joining ``a`` and ``b`` in either direction, by id."""
        out = [self.relations[rid] for rid in self.adjacency.get(a, ()) if self.relations[rid].other(a) == b]
        return sorted(out, key=lambda r: r.id)

    def full_subgraph(self) -> Subgraph:
        return Subgraph(frozenset(self.entities), frozenset(self.relations), self)

    def induced_subgraph(self, nodes: Iterable[str]) -> Subgraph:
        keep = frozenset(nodes)
        rels = frozenset(
            rid
            for node in keep
            for rid in self.adjacency[node]
            if self.relations[rid].other(node) in keep
        )
        return Subgraph(keep, rels, self)

    def iter_records(self) -> Iterable[dict]:
        yield self.schema.to_record()
        for eid in sorted(self.entities):
            yield self.entities[eid].to_record(self.entity_embeddings.get(eid))
        for rid in sorted(self.relations):
            yield self.relations[rid].to_record(self.relation_embeddings.get(rid))
        for cid in sorted(self.chunks):
            yield self.chunks[cid].to_record()


def _freeze(embeddings: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = {}
    for key, vec in embeddings.items():
        arr = np.array(vec, dtype=np.float64)
        arr.setflags(write=False)
        out[key] = arr
    return out


def _check_entity(e: Entity, schema: Schema, seen: Mapping[str, Entity]) -> None:
    if e.id in seen:
        raise IndexLoadError(f"duplicate entity id {e.id!r}")
    if not schema.accepts(e.entity_type):
        raise SchemaError(f"entity {e.id!r} has unknown type {e.entity_type!r}")
    if not e.description.strip():
        raise IndexLoadError(f"entity {e.id!r} has an empty description")


def _check_relation(r: Relation, ents: Mapping[str, Entity], seen: Mapping[str, Relation]) -> None:
    if r.id in seen:
        raise IndexLoadError(f"duplicate relation id {r.id!r}")
    for end in (r.src, r.dst):
        if end not in ents:
            raise ReferentialError(end, f"relation {r.id!r} references unknown entity id {end!r}")
    if r.src == r.dst:
        raise IndexLoadError(f"relation {r.id!r} is a self-loop on {r.src!r}")


def _check_chunk(c: Chunk, ents: Mapping[str, Entity], seen: Mapping[str, Chunk]) -> None:
    if c.id in seen:
        raise IndexLoadError(f"duplicate chunk id {c.id!r}")
    for eid in c.entity_ids:
        if eid not in ents:
            raise ReferentialError(eid, f"chunk {c.id!r} references unknown entity id {eid!r}")
    if c.center_id is not None and c.center_id not in ents:
        raise ReferentialError(c.center_id, f"chunk {c.id!r} has unknown center entity {c.center_id!r}")


def _require(rec: Mapping, key: str, line_no: int):
    if key not in rec:
        raise IndexParseError(line_no, f"{rec.get('kind')} record missing field {key!r}")
    return rec[key]


def _embedding(rec: Mapping, line_no: int):
    if "embedding" not in rec:
        return None
    vec = rec["embedding"]
    if not isinstance(vec, list) or not all(isinstance(x, (int, float)) for x in vec):
        raise IndexParseError(line_no, "embedding must be an array of numbers")
    return np.asarray(vec, dtype=np.float64)


def load_index(path: str | Path) -> GraphIndex:
    """Parse and validate a newline-delimited JSON index file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"index file not found: {path}")

    schema: Schema | None = None
    entities: list[Entity] = []
    relations: list[Relation] = []
    chunks: list[Chunk] = []
    ent_emb: dict[str, np.ndarray] = {}
    rel_emb: dict[str, np.ndarray] = {}

    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IndexParseError(line_no, f"malformed JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise IndexParseError(line_no, "record must be a JSON object")
            kind = rec.get("kind")
            if kind == "schema":
                if schema is not None:
                    raise IndexParseError(line_no, "more than one schema record")
                try:
                    schema = Schema.from_record(rec)
                except (TypeError, ValueError, KeyError) as exc:
                    raise IndexParseError(line_no, f"bad schema record: {exc}") from exc
            elif kind == "entity":
                eid = str(_require(rec, "id", line_no))
                entities.append(
                    Entity(
                        id=eid,
                        name=str(_require(rec, "name", line_no)),
                        entity_type=str(_require(rec, "entity_type", line_no)),
                        description=str(_require(rec, "description", line_no)),
                        chunk_ids=frozenset(map(str, rec.get("chunk_ids", []))),
                        embedding_id=str(rec.get("embedding_id") or eid),
                    )
                )
                vec = _embedding(rec, line_no)
                if vec is not None:
                    ent_emb[eid] = vec
            elif kind == "relation":
                rid = str(_require(rec, "id", line_no))
                relations.append(
                    Relation(
                        id=rid,
                        src=str(_require(rec, "src", line_no)),
                        dst=str(_require(rec, "dst", line_no)),
                        description=str(_require(rec, "description", line_no)),
                        keywords=tuple(map(str, rec.get("keywords", []))),
                        embedding_id=str(rec.get("embedding_id") or rid),
                    )
                )
                vec = _embedding(rec, line_no)
                if vec is not None:
                    rel_emb[rid] = vec
            elif kind == "chunk":
                center = rec.get("center_id")
                chunks.append(
                    Chunk(
                        id=str(_require(rec, "id", line_no)),
                        text=str(_require(rec, "text", line_no)),
                        entity_ids=frozenset(map(str, rec.get("entity_ids", []))),
                        center_id=None if center is None else str(center),
                    )
                )
            else:
                raise IndexParseError(line_no, f"unknown record kind {kind!r}")

    if schema is None:
        raise SchemaError(f"{path}: no schema record")
    index = GraphIndex.build(entities, relations, chunks, schema, ent_emb, rel_emb)
    logger.info("loaded %r from %s", index, path)
    return index


def write_index(index: GraphIndex, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in index.iter_records():
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def expand_hops(
    index: GraphIndex,
    seeds: Iterable[str],
    h_max: int,
    allowed_types: Iterable[str] = (),
) -> Subgraph:
    """Undirected, type-filtered BFS ball of radius ``h_max`` around ``seeds``.

    Non-seed nodes whose type is outside ``allowed_types`` are never entered, so
    they also block every path through them. Seeds are kept regardless of type.
    An empty ``allowed_types`` (or one containing ``"*"``) disables filtering.
    """
    seeds = set(seeds)
    if not seeds:
        raise ValueError("expand_hops needs at least one seed")
    unknown = sorted(s for s in seeds if s not in index.entities)
    if unknown:
        raise KeyError(f"unknown seed id(s): {unknown}")
    if h_max < 1:
        raise ValueError(f"h_max must be >= 1, got {h_max}")
    allowed = set(allowed_types)
    if WILDCARD in allowed:
        allowed = set()
    bad = sorted(t for t in allowed if not index.schema.accepts(t))
    if bad:
        raise ValueError(f"allowed_types not in schema: {bad}")

    def admissible(eid: str) -> bool:
        return not allowed or index.entities[eid].entity_type in allowed

    depth = {s: 0 for s in seeds}
    queue = deque(sorted(seeds))
    while queue:
        node = queue.popleft()
        if depth[node] == h_max:
            continue
        for rid in index.adjacency[node]:
            nxt = index.relations[rid].other(node)
            if nxt in depth or not admissible(nxt):
                continue
            depth[nxt] = depth[node] + 1
            queue.append(nxt)
    return index.induced_subgraph(depth)

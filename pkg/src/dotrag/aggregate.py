"""Merge accepted paths across workspaces, rank grounded chunks, and generate the answer."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph_store import GraphIndex
from .pathfind import RelPath
from .providers import LLM, Embedder, LlmRequest, Stage, render_prompt

NO_EVIDENCE = "NO EVIDENCE RETRIEVED"


@dataclass(frozen=True)
class RankedChunk:
    chunk_id: str
    score: float


@dataclass
class AnswerBundle:
    query: str
    answer: str
    paths: list[RelPath]
    chunks: list[RankedChunk]
    concepts: list[dict] = field(default_factory=list)
    skipped_concepts: list[dict] = field(default_factory=list)
    llm_calls: int = 0
    truncated: bool = False

    def path_entities(self) -> set[str]:
        return {n for p in self.paths for n in p.nodes}

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "answer": self.answer,
            "paths": [p.to_dict() for p in self.paths],
            "chunks": [{"id": c.chunk_id, "score": round(c.score, 12)} for c in self.chunks],
            "path_entities": sorted(self.path_entities()),
            "concepts": self.concepts,
            "skipped_concepts": self.skipped_concepts,
            "llm_calls": self.llm_calls,
            "truncated": self.truncated,
        }


def aggregate_paths(per_dot: Sequence[Sequence[RelPath]]) -> list[RelPath]:
    """Union of accepted paths, deduplicated by node sequence, first occurrence wins."""
    seen: set[tuple[str, ...]] = set()
    out = []
    for paths in per_dot:
        for p in paths:
            if p.nodes not in seen:
                seen.add(p.nodes)
                out.append(p)
    return out


class ChunkEmbeddingCache:
    """Lazily embeds chunk text once per chunk id."""

    def __init__(self, embedder: Embedder):
        self.embedder = embedder
        self._vectors: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def get(self, index: GraphIndex, chunk_id: str) -> np.ndarray:
        with self._lock:
            vec = self._vectors.get(chunk_id)
        if vec is None:
            vec = np.asarray(self.embedder.embed(index.chunks[chunk_id].text), dtype=np.float64)
            vec = vec / np.linalg.norm(vec)
            with self._lock:
                self._vectors.setdefault(chunk_id, vec)
        return vec

    def __len__(self) -> int:
        return len(self._vectors)


def linked_chunks(paths: Sequence[RelPath], index: GraphIndex) -> set[str]:
    nodes = {n for p in paths for n in p.nodes}
    out: set[str] = set()
    for n in nodes:
        out.update(index.chunks_by_entity[n])
    return out


def rank_chunks(
    paths: Sequence[RelPath],
    index: GraphIndex,
    query: str,
    embedder: Embedder,
    n_chunks: int = 8,
    cache: ChunkEmbeddingCache | None = None,
) -> list[RankedChunk]:
    if n_chunks < 1:
        raise ValueError("n_chunks must be >= 1")
    ids = sorted(linked_chunks(paths, index))
    if not ids:
        return []
    if cache is None:
        cache = ChunkEmbeddingCache(embedder)
    q = np.asarray(embedder.embed(query), dtype=np.float64)
    q = q / np.linalg.norm(q)
    scored = [RankedChunk(cid, float(np.clip(cache.get(index, cid) @ q, -1.0, 1.0))) for cid in ids]
    scored.sort(key=lambda c: (-c.score, c.chunk_id))
    return scored[:n_chunks]


def generate_answer(
    query: str,
    paths: Sequence[RelPath],
    chunks: Sequence[RankedChunk],
    llm: LLM,
    index: GraphIndex | None = None,
    chunk_char_budget: int = 1200,
    template_dir=None,
) -> str:
    path_text = "\n".join(f"- {p.text or ' -> '.join(p.nodes)}" for p in paths)
    chunk_text = "\n\n".join(
        f"[{c.chunk_id}] {index.chunks[c.chunk_id].text[:chunk_char_budget]}" if index else f"[{c.chunk_id}]"
        for c in chunks
    )
    prompt = render_prompt(
        "final_answer",
        template_dir,
        query=query,
        paths=path_text or NO_EVIDENCE,
        chunks=chunk_text or NO_EVIDENCE,
    )
    return llm.complete(LlmRequest(Stage.FINAL_ANSWER, prompt)).data["answer"]

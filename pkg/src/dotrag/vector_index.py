"""Exact cosine-similarity search over small in-memory vector stores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .graph_store import GraphIndex, Subgraph


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ScoredHit:
    item_id: str
    score: float


class VectorStore:
    """Immutable store of unit-normalised vectors keyed by item id.

    Search is an exhaustive scan; stores built per workspace are small, and a
    scan keeps results exact and reproducible.
    """

    def __init__(self, items: Mapping[str, Iterable[float]] | Iterable[tuple[str, Iterable[float]]], dim: int | None = None):
        pairs = list(items.items()) if isinstance(items, Mapping) else list(items)
        ids = [str(k) for k, _ in pairs]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate ids in vector store")
        order = np.argsort(np.asarray(ids, dtype=object), kind="stable") if ids else np.array([], dtype=int)
        ids = [ids[i] for i in order]
        if pairs:
            rows = [np.asarray(pairs[i][1], dtype=np.float64).ravel() for i in order]
            if len({r.shape[0] for r in rows}) != 1:
                raise DimensionMismatch("all embeddings in a store must share one dimension")
            mat = np.vstack(rows)
            if mat.ndim != 2:
                raise DimensionMismatch("all embeddings in a store must share one dimension")
            if dim is not None and mat.shape[1] != dim:
                raise DimensionMismatch(f"expected dim {dim}, got {mat.shape[1]}")
            dim = mat.shape[1]
            norms = np.linalg.norm(mat, axis=1)
            if np.any(norms == 0) or not np.all(np.isfinite(norms)):
                bad = [ids[i] for i in np.flatnonzero((norms == 0) | ~np.isfinite(norms))]
                raise ValueError(f"zero-norm or non-finite embeddings rejected: {bad}")
            mat = mat / norms[:, None]
        else:
            mat = np.zeros((0, dim or 0))
        mat.setflags(write=False)
        self.ids: tuple[str, ...] = tuple(ids)
        self.dim: int | None = dim
        self._matrix = mat
        self._pos = {k: i for i, k in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._pos

    def vector(self, item_id: str) -> np.ndarray:
        return self._matrix[self._pos[item_id]]

    def subset(self, ids: Iterable[str]) -> "VectorStore":
        keep = [i for i in ids if i in self._pos]
        return VectorStore(((i, self._matrix[self._pos[i]]) for i in keep), dim=self.dim)

    def scores(self, query) -> np.ndarray:
        """Cosine similarity of ``query`` to every stored item, in ``self.ids`` order."""
        q = np.asarray(query, dtype=np.float64).ravel()
        if self.dim is not None and q.shape[0] != self.dim:
            raise DimensionMismatch(f"query dim {q.shape[0]} != store dim {self.dim}")
        norm = np.linalg.norm(q)
        if norm == 0:
            raise ValueError("query embedding has zero norm")
        if not self.ids:
            return np.zeros(0)
        return np.clip(self._matrix @ (q / norm), -1.0, 1.0)

    def _ranked(self, scores: np.ndarray, exclude: frozenset[str]) -> list[ScoredHit]:
        # ids are sorted, so a stable sort on -score breaks ties by ascending id
        order = np.argsort(-scores, kind="stable")
        return [ScoredHit(self.ids[i], float(scores[i])) for i in order if self.ids[i] not in exclude]

    def top_k(self, query, k: int, exclude: Iterable[str] = ()) -> list[ScoredHit]:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        return self._ranked(self.scores(query), frozenset(exclude))[:k]

    def above_threshold(self, query, tau: float, exclude: Iterable[str] = ()) -> list[ScoredHit]:
        if not -1.0 <= tau <= 1.0:
            raise ValueError(f"tau must lie in [-1, 1], got {tau}")
        hits = self._ranked(self.scores(query), frozenset(exclude))
        # tolerate float rounding for exact-direction matches at tau == 1
        return [h for h in hits if h.score >= tau - 1e-12]


def top_k(store: VectorStore, query, k: int) -> list[ScoredHit]:
    return store.top_k(query, k)


def above_threshold(store: VectorStore, query, tau: float) -> list[ScoredHit]:
    return store.above_threshold(query, tau)


def entity_store(index: GraphIndex) -> VectorStore:
    return VectorStore(index.entity_embeddings)


def relation_store(index: GraphIndex) -> VectorStore:
    return VectorStore(index.relation_embeddings)


@dataclass(frozen=True)
class ScopedStores:
    entities: VectorStore
    relations: VectorStore


def scoped_store(index: GraphIndex, subgraph: Subgraph) -> ScopedStores:
    """Local stores holding only the subgraph's entity and relation embeddings.

    Cost is linear in the subgraph size; the global index is not touched.
    """
    ent = VectorStore((eid, index.entity_embeddings[eid]) for eid in subgraph.nodes if eid in index.entity_embeddings)
    rel = VectorStore(
        (rid, index.relation_embeddings[rid]) for rid in subgraph.relation_ids if rid in index.relation_embeddings
    )
    return ScopedStores(ent, rel)

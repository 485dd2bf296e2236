"""Loopless k-shortest paths (Yen) over unit-weight undirected subgraphs."""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .graph_store import Subgraph

UNJUDGED = "unjudged"
IRRELEVANT = "irrelevant"
PARTIAL = "partial"
COMPLETE = "complete"
ACCEPTED = (PARTIAL, COMPLETE)


@dataclass(frozen=True)
class RelPath:
    nodes: tuple[str, ...]
    status: str = UNJUDGED
    text: str = ""

    @property
    def length(self) -> int:
        return len(self.nodes) - 1

    @property
    def source(self) -> str:
        return self.nodes[0]

    @property
    def destination(self) -> str:
        return self.nodes[-1]

    def to_dict(self) -> dict:
        return {"nodes": list(self.nodes), "length": self.length, "status": self.status, "text": self.text}


def _nodes(p) -> tuple[str, ...]:
    return tuple(p.nodes) if isinstance(p, RelPath) else tuple(p)


def is_prefix(shorter, longer) -> bool:
    """True iff ``shorter`` is a proper leading subsequence of ``longer``."""
    a, b = _nodes(shorter), _nodes(longer)
    return len(a) < len(b) and b[: len(a)] == a


def prefix_filter(paths: Sequence[RelPath]) -> list[RelPath]:
    """Drop every path that is a proper prefix of another path in the list (order kept)."""
    seqs = [_nodes(p) for p in paths]
    # all proper prefixes of every path, so each check is a set lookup
    prefixes = {s[:i] for s in seqs for i in range(1, len(s))}
    return [p for p, s in zip(paths, seqs) if s not in prefixes]


def _adjacency(graph) -> Mapping[str, Iterable[str]]:
    if isinstance(graph, Subgraph):
        return graph.adjacency_sets()
    return graph


def _edge(u: str, v: str) -> tuple[str, str]:
    return (u, v) if u <= v else (v, u)


def _lex_shortest(adj, src, dst, banned_nodes, banned_edges) -> list[str] | None:
    """Shortest src→dst path, lexicographically smallest among the shortest."""
    dist = {dst: 0}
    queue = deque([dst])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w in dist or w in banned_nodes or _edge(u, w) in banned_edges:
                continue
            dist[w] = dist[u] + 1
            queue.append(w)
    if src not in dist:
        return None
    path = [src]
    u = src
    while u != dst:
        u = min(
            w
            for w in adj[u]
            if dist.get(w) == dist[u] - 1 and w not in banned_nodes and _edge(u, w) not in banned_edges
        )
        path.append(u)
    return path


def yen_paths(graph, source: str, target: str, p: int, max_len: int | None = None) -> list[RelPath]:
    """Up to ``p`` loopless source→target paths ordered by (hop count, node-id sequence).

    ``graph`` is a :class:`Subgraph` or a mapping node → neighbours (undirected,
    parallel edges collapsed). Paths longer than ``max_len`` edges are never returned.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    adj = _adjacency(graph)
    for node in (source, target):
        if node not in adj:
            raise KeyError(f"{node!r} not in graph")
    limit = float("inf") if max_len is None else max_len
    if source == target:
        return [RelPath((source,))]

    first = _lex_shortest(adj, source, target, set(), set())
    if first is None or len(first) - 1 > limit:
        return []
    found: list[tuple[str, ...]] = [tuple(first)]
    seen = {found[0]}
    candidates: list[tuple[int, tuple[str, ...]]] = []

    while len(found) < p:
        last = found[-1]
        for i in range(len(last) - 1):
            root = last[: i + 1]
            banned_edges = {_edge(a[i], a[i + 1]) for a in found if len(a) > i + 1 and a[: i + 1] == root}
            spur = _lex_shortest(adj, last[i], target, set(root[:-1]), banned_edges)
            if spur is None:
                continue
            total = root[:-1] + tuple(spur)
            if total not in seen and len(total) - 1 <= limit:
                seen.add(total)
                heapq.heappush(candidates, (len(total), total))
        if not candidates:
            break
        found.append(heapq.heappop(candidates)[1])
    return [RelPath(nodes) for nodes in found]


def bfs_shortest(graph, source: str, target: str) -> RelPath | None:
    path = _lex_shortest(_adjacency(graph), source, target, set(), set())
    return None if path is None else RelPath(tuple(path))

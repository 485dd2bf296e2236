"""Independent brute-force references the production code is checked against.

None of these import the algorithms they check; they trade speed for obviousness.
"""

from __future__ import annotations

import hashlib
import itertools
import random
from collections import defaultdict

import numpy as np

from dotrag.graph_store import Chunk, Entity, EntityType, GraphIndex, Relation, Schema

TYPES = ("person", "movie", "genre", "year")
SCHEMA = Schema("Random test graph.", tuple(EntityType(t, f"{t} nodes") for t in TYPES))


def simple_paths(adj: dict[str, set[str]], src: str, dst: str, max_len: int) -> list[tuple[str, ...]]:
    """Every loopless src→dst path with at most ``max_len`` edges, ordered by (length, node tuple)."""
    found = []

    def walk(path):
        node = path[-1]
        if node == dst:
            found.append(tuple(path))
            return
        if len(path) - 1 == max_len:
            return
        for nxt in adj[node]:
            if nxt not in path:
                walk(path + [nxt])

    walk([src])
    return sorted(found, key=lambda p: (len(p), p))


def typed_ball(adj: dict[str, set[str]], types: dict[str, str], seeds, h: int, allowed) -> set[str]:
    """Nodes within ``h`` hops of a seed walking only through admissible nodes.

    Uses Floyd-Warshall over the admissible induced subgraph instead of a BFS.
    """
    allowed = set(allowed) - {"*"}
    keep = [n for n in adj if n in seeds or not allowed or types[n] in allowed]
    pos = {n: i for i, n in enumerate(keep)}
    inf = float("inf")
    dist = np.full((len(keep), len(keep)), inf)
    np.fill_diagonal(dist, 0)
    for u in keep:
        for v in adj[u]:
            if v in pos:
                dist[pos[u], pos[v]] = 1
    for k in range(len(keep)):
        dist = np.minimum(dist, dist[:, [k]] + dist[[k], :])
    return {n for n in keep if min(dist[pos[s], pos[n]] for s in seeds) <= h}


def components_bruteforce(vectors: np.ndarray, tau: float) -> list[list[int]]:
    """Connected components of the graph with an edge wherever cosine >= tau, by repeated merging."""
    n = len(vectors)
    unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    label = list(range(n))
    changed = True
    while changed:
        changed = False
        for i, j in itertools.combinations(range(n), 2):
            if float(unit[i] @ unit[j]) >= tau - 1e-12 and label[i] != label[j]:
                old, new = max(label[i], label[j]), min(label[i], label[j])
                label = [new if x == old else x for x in label]
                changed = True
    groups = defaultdict(list)
    for i, lab in enumerate(label):
        groups[lab].append(i)
    return sorted(groups.values())


def scan_top(vectors: dict[str, np.ndarray], query: np.ndarray, k: int, exclude=()) -> list[tuple[str, float]]:
    """Exhaustive cosine scan with ties broken by ascending id."""
    q = query / np.linalg.norm(query)
    scored = [
        (i, float(v @ q / np.linalg.norm(v))) for i, v in vectors.items() if i not in set(exclude)
    ]
    scored.sort(key=lambda x: (-x[1], x[0]))
    return scored[:k]


def random_connected_graph(rng: random.Random, n: int, p: float) -> dict[str, set[str]]:
    """Random spanning tree plus independent extra edges with probability ``p``."""
    names = [f"v{i:02d}" for i in range(n)]
    adj = {v: set() for v in names}
    order = names[:]
    rng.shuffle(order)
    for i in range(1, n):
        a, b = order[i], order[rng.randrange(i)]
        adj[a].add(b)
        adj[b].add(a)
    for a, b in itertools.combinations(names, 2):
        if rng.random() < p:
            adj[a].add(b)
            adj[b].add(a)
    return adj


def random_graph(rng: random.Random, n: int, p: float) -> dict[str, set[str]]:
    names = [f"v{i:02d}" for i in range(n)]
    adj = {v: set() for v in names}
    for a, b in itertools.combinations(names, 2):
        if rng.random() < p:
            adj[a].add(b)
            adj[b].add(a)
    return adj


def index_from_adjacency(adj: dict[str, set[str]], types: dict[str, str] | None = None, dim: int = 8,
                         seed: int = 0) -> GraphIndex:
    """Wrap an adjacency map as a GraphIndex with random unit embeddings and one chunk per node."""
    rs = np.random.default_rng(seed)
    types = types or {n: TYPES[0] for n in adj}
    ents = [Entity(n, n.upper(), types[n], f"node {n}", frozenset({f"c_{n}"})) for n in sorted(adj)]
    rels = []
    for a in sorted(adj):
        for b in sorted(adj[a]):
            if a < b:
                rels.append(Relation(f"r_{a}_{b}", a, b, f"{a} links {b}"))
    chunks = [Chunk(f"c_{n}", f"text about {n}", frozenset({n} | adj[n]), n) for n in sorted(adj)]
    emb = {n: rs.normal(size=dim) for n in sorted(adj)}
    emb = {k: v / np.linalg.norm(v) for k, v in emb.items()}
    return GraphIndex.build(ents, rels, chunks, SCHEMA, emb)


class TextSeededEmbedder:
    """Random unit vector per text, seeded by a stable hash; matches ``index_from_adjacency`` dimensions."""

    def __init__(self, seed: int = 0, dim: int = 8):
        self.seed, self.dim = seed, dim

    def embed(self, text: str) -> np.ndarray:
        digest = int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big")
        v = np.random.default_rng([self.seed, digest]).normal(size=self.dim)
        return v / np.linalg.norm(v)

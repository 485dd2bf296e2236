"""Estimator-style entry points: the retrieval pipeline and the entity deduplicator."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .aggregate import AnswerBundle, ChunkEmbeddingCache, aggregate_paths, generate_answer, linked_chunks, rank_chunks
from .corpus_prep import MergeCluster, apply_merges, dedup_entities
from .dot_builder import build_dot
from .graph_store import GraphIndex
from .providers import ProviderError, ProviderPair
from .search import SearchParams, SearchResult, Trace, search_dot
from .selection import extract_concepts, ground_concepts
from .validation import check_index, check_int, check_queries, check_unit_interval
from .vector_index import entity_store

logger = logging.getLogger(__name__)


@dataclass
class Retrieval:
    bundle: AnswerBundle
    trace: Trace
    dots: list[SearchResult]

    @property
    def retrieved_nodes(self) -> set[str]:
        return self.bundle.path_entities()

    @property
    def retrieved_chunks(self) -> list[str]:
        return [c.chunk_id for c in self.bundle.chunks]


class DotRAG(BaseEstimator):
    """Multi-workspace graph retrieval followed by answer generation.

    ``fit`` takes a :class:`GraphIndex` and prepares the global entity store;
    ``retrieve`` runs the whole pipeline for one question and returns the
    answer bundle together with its event trace.

    Args:
        llm: Object with ``complete(LlmRequest) -> LlmResponse``.
        embedder: Object with ``embed(text) -> unit vector``.
        tau: Similarity threshold for low-level concept grounding.
        k_high: Anchors per high-level concept.
        low_cap: Most anchors kept per low-level concept.
        h_max: Hop limit for workspace expansion and path length.
        t_max: Search rounds per workspace.
        candidates: Destinations retrieved per round.
        paths_per_pair: Shortest paths per (anchor, destination) pair.
        cap: Most paths judged per round.
        n_chunks: Chunks passed to the answer prompt.
        chunk_char_budget: Characters kept from each chunk in the answer prompt.
        parallel: Workspace worker threads.
        batch_judging: Judge all paths of a round in one call.
        template_dir: Directory overriding the packaged prompt templates.
    """

    def __init__(
        self,
        llm=None,
        embedder=None,
        tau=0.5,
        k_high=10,
        low_cap=10,
        h_max=3,
        t_max=3,
        candidates=5,
        paths_per_pair=3,
        cap=20,
        n_chunks=8,
        chunk_char_budget=1200,
        parallel=1,
        batch_judging=False,
        template_dir=None,
    ):
        self.llm = llm
        self.embedder = embedder
        self.tau = tau
        self.k_high = k_high
        self.low_cap = low_cap
        self.h_max = h_max
        self.t_max = t_max
        self.candidates = candidates
        self.paths_per_pair = paths_per_pair
        self.cap = cap
        self.n_chunks = n_chunks
        self.chunk_char_budget = chunk_char_budget
        self.parallel = parallel
        self.batch_judging = batch_judging
        self.template_dir = template_dir

    def _validate_params(self) -> None:
        if self.llm is None or self.embedder is None:
            raise ValueError("DotRAG needs both an llm and an embedder")
        check_unit_interval("tau", self.tau)
        for name in ("k_high", "low_cap", "h_max", "t_max", "candidates", "paths_per_pair", "cap",
                     "n_chunks", "chunk_char_budget", "parallel"):
            check_int(name, getattr(self, name))

    def fit(self, index: GraphIndex, y=None) -> "DotRAG":
        self._validate_params()
        self.index_ = check_index(index)
        self.store_ = entity_store(index)
        self.chunk_cache_ = ChunkEmbeddingCache(self.embedder)
        self.search_params_ = SearchParams(
            candidates=self.candidates,
            paths_per_pair=self.paths_per_pair,
            cap=self.cap,
            t_max=self.t_max,
            h_max=self.h_max,
            batch_judging=self.batch_judging,
        )
        return self

    def call_bound(self, n_dots: int) -> int:
        """Most LLM calls one question may cost: extraction, every workspace, the answer."""
        check_is_fitted(self, "search_params_")
        return 2 + n_dots * self.search_params_.call_bound()

    def retrieve(self, query: str) -> Retrieval:
        check_is_fitted(self, "index_")
        (query,) = check_queries(query)
        index = self.index_
        providers = ProviderPair(self.llm, self.embedder)
        trace = Trace()

        extraction = extract_concepts(query, index.schema, self.llm, self.template_dir)
        calls = 1
        trace.add(
            "concepts",
            low=[c.to_dict() for c in extraction.low],
            high=[c.to_dict() for c in extraction.high],
            mode=extraction.mode,
            fallback=extraction.fallback,
        )
        anchors = ground_concepts(
            extraction.accepted, index, self.store_, self.embedder, self.tau, self.k_high, self.low_cap
        )
        skipped = [{**a.concept.to_dict(), "reason": "no anchor entities"} for a in anchors.ungrounded()]
        for a in anchors:
            trace.add("anchors", concept=a.concept.to_dict(), entity_ids=list(a.entity_ids))

        grounded = anchors.grounded()

        def run(item):
            dot_id, anchor = item
            try:
                dot = build_dot(anchor.concept, anchor.entity_ids, index, self.llm, self.h_max, query, dot_id,
                                self.template_dir)
            except ProviderError as exc:
                logger.warning("workspace %d could not be built: %s", dot_id, exc)
                t = Trace()
                t.add("truncated", dot_id=dot_id, t=0, error=str(exc))
                return SearchResult(dot_id, [], t, 0, 0, truncated=True), 1
            return search_dot(dot, query, providers, index, self.search_params_, self.template_dir), 1

        items = list(enumerate(grounded))
        if self.parallel > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.parallel) as pool:
                outcomes = list(pool.map(run, items))
        else:
            outcomes = [run(it) for it in items]
        results = []
        for result, rule_calls in outcomes:
            results.append(result)
            calls += rule_calls + result.llm_calls
            trace.extend(result.trace)

        paths = aggregate_paths([r.paths for r in results])
        chunks = rank_chunks(paths, index, query, self.embedder, self.n_chunks, self.chunk_cache_)
        assert {c.chunk_id for c in chunks} <= linked_chunks(paths, index)
        answer = generate_answer(query, paths, chunks, self.llm, index, self.chunk_char_budget, self.template_dir)
        calls += 1
        bound = self.call_bound(len(grounded))
        assert calls <= bound, f"{calls} LLM calls exceed the bound {bound}"
        bundle = AnswerBundle(
            query=query,
            answer=answer,
            paths=paths,
            chunks=chunks,
            concepts=[c.to_dict() for c in extraction.accepted],
            skipped_concepts=skipped,
            llm_calls=calls,
            truncated=any(r.truncated for r in results),
        )
        trace.add("answer", llm_calls=calls, call_bound=bound, paths=len(paths), chunks=len(chunks))
        logger.info("query answered with %d paths, %d chunks, %d LLM calls", len(paths), len(chunks), calls)
        return Retrieval(bundle, trace, results)

    def predict(self, queries) -> list[str]:
        """Answer text for each question."""
        return [self.retrieve(q).bundle.answer for q in check_queries(queries)]


class EntityDeduplicator(BaseEstimator, TransformerMixin):
    """Embedding-threshold candidates confirmed by an LLM curator, then collapsed.

    ``fit`` computes ``clusters_``; ``transform`` returns a new index with each
    confirmed cluster merged into its canonical (smallest-id) entity.
    """

    def __init__(self, llm=None, tau=0.60, workers=1, template_dir=None):
        self.llm = llm
        self.tau = tau
        self.workers = workers
        self.template_dir = template_dir

    def fit(self, index: GraphIndex, y=None) -> "EntityDeduplicator":
        if self.llm is None:
            raise ValueError("EntityDeduplicator needs an llm curator")
        check_unit_interval("tau", self.tau)
        check_int("workers", self.workers)
        check_index(index)
        self.clusters_: list[MergeCluster] = dedup_entities(
            index.entities, index.entity_embeddings, self.llm, self.tau, self.workers, self.template_dir
        )
        return self

    def transform(self, index: GraphIndex) -> GraphIndex:
        check_is_fitted(self, "clusters_")
        return apply_merges(index, self.clusters_)

    def report(self) -> dict:
        check_is_fitted(self, "clusters_")
        merged = [c for c in self.clusters_ if len(c.members) > 1]
        return {
            "tau": self.tau,
            "n_entities": sum(len(c.members) for c in self.clusters_),
            "n_clusters": len(self.clusters_),
            "merged": [c.to_dict() for c in merged],
        }

"""Iterative path search inside one workspace.

Each round embeds a query, pulls the nearest unevaluated entities from the
workspace's local store, connects each back to the anchors with Yen's
algorithm, caps the candidate set, has the LLM judge every surviving path,
and asks for follow-up queries. Every decision is appended to a trace.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable

from .dot_builder import DotWorkspace
from .graph_store import GraphIndex
from .pathfind import ACCEPTED, PARTIAL, RelPath, prefix_filter, yen_paths
from .providers import LlmRequest, ProviderError, ProviderPair, Stage, render_prompt

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchParams:
    candidates: int = 5
    paths_per_pair: int = 3
    cap: int = 20
    t_max: int = 3
    h_max: int = 3
    batch_judging: bool = False

    def __post_init__(self):
        for name in ("candidates", "paths_per_pair", "cap", "t_max", "h_max"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    def call_bound(self) -> int:
        """Most LLM calls one workspace may spend, rule generation included."""
        return self.t_max * (self.cap + 2) + 1


class Trace:
    """Append-only event log; serialises to newline-delimited JSON."""

    def __init__(self, events: Iterable[dict] = ()):
        self.events: list[dict] = list(events)

    def add(self, kind: str, **fields) -> None:
        self.events.append({"event": kind, **fields})

    def of(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["event"] == kind]

    def extend(self, other: "Trace") -> None:
        self.events.extend(other.events)

    def to_ndjson(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, ensure_ascii=False) + "\n" for e in self.events)

    def __len__(self) -> int:
        return len(self.events)


def normalize_query(q: str) -> str:
    return " ".join(q.casefold().split())


@dataclass
class SearchState:
    t: int = 0
    evaluated_nodes: set[str] = field(default_factory=set)
    accepted: list[RelPath] = field(default_factory=list)
    pending_queries: list[str] = field(default_factory=list)
    used_queries: list[str] = field(default_factory=list)
    trace: Trace = field(default_factory=Trace)

    def push_queries(self, queries: Iterable[str]) -> list[str]:
        """Queue queries not seen before (case/whitespace-insensitive); return the new ones."""
        seen = {normalize_query(q) for q in self.used_queries + self.pending_queries}
        added = []
        for q in queries:
            key = normalize_query(q)
            if key and key not in seen:
                seen.add(key)
                self.pending_queries.append(q.strip())
                added.append(q.strip())
        return added


@dataclass
class SearchResult:
    dot_id: int
    paths: list[RelPath]
    trace: Trace
    iterations: int
    llm_calls: int
    truncated: bool = False


def textualize_path(index: GraphIndex, nodes) -> str:
    """Entity names in traversal order, joined by the descriptions of the relations between them."""
    parts = [index.entities[nodes[0]].name]
    for a, b in zip(nodes, nodes[1:]):
        rels = index.relations_between(a, b)
        desc = "; ".join(r.description for r in rels)
        forward = all(r.src == a for r in rels)
        backward = all(r.src == b for r in rels)
        if forward:
            parts.append(f" --({desc})--> ")
        elif backward:
            parts.append(f" <--({desc})-- ")
        else:
            parts.append(f" <--({desc})--> ")
        parts.append(index.entities[b].name)
    return "".join(parts)


def _format_paths(paths) -> str:
    return "\n".join(f"- {p.text}" for p in paths) or "(none)"


def _format_used(queries) -> str:
    return "\n".join(f"- {q}" for q in queries) or "(none)"


def _judge(dot, query, paths, ask, params, template_dir) -> list[str]:
    rules = dot.rules
    if params.batch_judging:
        listing = "\n".join(f"{i + 1}. {p.text}" for i, p in enumerate(paths))
        prompt = render_prompt(
            "path_judgment_batch",
            template_dir,
            query=query,
            intermediate_rule=rules.intermediate_rule,
            terminal_rule=rules.terminal_rule,
            paths=listing,
        )
        data = ask(Stage.PATH_JUDGMENT, prompt)
        verdicts = data.get("verdicts") or [data.get("verdict")] * len(paths)
        if len(verdicts) != len(paths):
            raise ProviderError(f"batched judgment returned {len(verdicts)} verdicts for {len(paths)} paths")
        return list(verdicts)
    verdicts = []
    for p in paths:
        prompt = render_prompt(
            "path_judgment",
            template_dir,
            query=query,
            intermediate_rule=rules.intermediate_rule,
            terminal_rule=rules.terminal_rule,
            path=p.text,
        )
        data = ask(Stage.PATH_JUDGMENT, prompt)
        verdicts.append(data.get("verdict") or data["verdicts"][0])
    return verdicts


def search_dot(
    dot: DotWorkspace,
    query: str,
    providers: ProviderPair,
    index: GraphIndex,
    params: SearchParams = SearchParams(),
    template_dir=None,
) -> SearchResult:
    """Run up to ``params.t_max`` search rounds in one workspace.

    A provider failure mid-loop ends the search early; paths accepted so far
    are returned and the result is flagged ``truncated``.
    """
    state = SearchState()
    trace = state.trace
    anchors = frozenset(dot.anchors)
    adjacency = dot.subgraph.adjacency_sets()
    store = dot.local_store.entities
    calls = 0
    truncated = False

    def ask(stage: Stage, prompt: str) -> dict:
        nonlocal calls
        calls += 1
        return providers.llm.complete(LlmRequest(stage, prompt)).data

    state.push_queries([dot.concept.query_text])
    trace.add(
        "dot",
        dot_id=dot.dot_id,
        concept=dot.concept.to_dict(),
        anchors=list(dot.anchors),
        rules=dot.rules.to_dict(),
        subgraph_nodes=len(dot.subgraph.nodes),
    )

    try:
        while state.t < params.t_max:
            if not state.pending_queries:
                trace.add("stop", dot_id=dot.dot_id, t=state.t, reason="no_queries")
                break
            state.t += 1
            q = state.pending_queries.pop(0)
            state.used_queries.append(q)
            trace.add("query", dot_id=dot.dot_id, t=state.t, query=q)

            hits = store.top_k(providers.embedder.embed(q), params.candidates, exclude=state.evaluated_nodes | anchors)
            trace.add(
                "retrieval",
                dot_id=dot.dot_id,
                t=state.t,
                hits=[{"id": h.item_id, "score": h.score} for h in hits],
            )
            if not hits:
                trace.add("stop", dot_id=dot.dot_id, t=state.t, reason="workspace_exhausted")
                break

            candidates = []
            for h in hits:
                for a in sorted(anchors):
                    for path in yen_paths(adjacency, a, h.item_id, params.paths_per_pair, params.h_max):
                        candidates.append((h, path))
            if len(candidates) > params.cap:
                order = sorted(range(len(candidates)), key=lambda i: (-candidates[i][0].score, candidates[i][0].item_id, i))
                kept_idx = sorted(order[: params.cap])
            else:
                kept_idx = list(range(len(candidates)))
            trace.add(
                "prune",
                dot_id=dot.dot_id,
                t=state.t,
                cap=params.cap,
                candidates=[
                    {"nodes": list(p.nodes), "destination": h.item_id, "score": h.score} for h, p in candidates
                ],
                kept=kept_idx,
            )
            survivors = [
                RelPath(candidates[i][1].nodes, text=textualize_path(index, candidates[i][1].nodes)) for i in kept_idx
            ]

            if survivors:
                verdicts = _judge(dot, query, survivors, ask, params, template_dir)
                judged = [RelPath(p.nodes, v, p.text) for p, v in zip(survivors, verdicts)]
                for p in judged:
                    trace.add(
                        "judgment",
                        dot_id=dot.dot_id,
                        t=state.t,
                        nodes=list(p.nodes),
                        destination=p.destination,
                        verdict=p.status,
                    )
                state.accepted = prefix_filter(state.accepted + [p for p in judged if p.status in ACCEPTED])
            state.evaluated_nodes.update(h.item_id for h in hits)

            if state.t >= params.t_max:
                break
            _next_queries(dot, query, state, ask, template_dir)
    except ProviderError as exc:
        truncated = True
        logger.warning("workspace %d truncated: %s", dot.dot_id, exc)
        trace.add("truncated", dot_id=dot.dot_id, t=state.t, error=str(exc))

    for p in state.accepted:
        assert p.nodes[0] in anchors, f"accepted path {p.nodes} does not start at an anchor"
    trace.add(
        "accepted",
        dot_id=dot.dot_id,
        paths=[p.to_dict() for p in state.accepted],
        iterations=state.t,
        llm_calls=calls,
    )
    return SearchResult(dot.dot_id, list(state.accepted), trace, state.t, calls, truncated)


def _next_queries(dot, query, state: SearchState, ask, template_dir) -> None:
    partials = [p for p in state.accepted if p.status == PARTIAL]
    added: list[str] = []
    if partials:
        prompt = render_prompt(
            "followup_queries",
            template_dir,
            query=query,
            concept=dot.concept.query_text,
            partial_paths=_format_paths(partials),
            used_queries=_format_used(state.used_queries),
        )
        suggested = ask(Stage.FOLLOWUP_QUERIES, prompt)["queries"]
        added = state.push_queries(suggested)
        state.trace.add("followup", dot_id=dot.dot_id, t=state.t, suggested=suggested, added=added)
    if not added:
        prompt = render_prompt(
            "fallback_query",
            template_dir,
            query=query,
            concept=dot.concept.query_text,
            used_queries=_format_used(state.used_queries),
        )
        suggested = ask(Stage.FOLLOWUP_QUERIES, prompt)["queries"]
        added = state.push_queries(suggested)
        state.trace.add("fallback", dot_id=dot.dot_id, t=state.t, suggested=suggested, added=added)

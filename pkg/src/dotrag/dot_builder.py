"""Workspace construction: per-concept rules, type-filtered subgraph and local vector store."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .graph_store import WILDCARD, GraphIndex, Subgraph, expand_hops
from .providers import LLM, LlmRequest, Stage, render_prompt
from .selection import Concept, format_types
from .vector_index import ScopedStores, scoped_store

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DotRules:
    intermediate_rule: str
    terminal_rule: str
    allowed_types: frozenset[str] = frozenset()
    dropped_types: tuple[str, ...] = ()

    @property
    def wildcard(self) -> bool:
        return not self.allowed_types

    def to_dict(self) -> dict:
        return {
            "intermediate_rule": self.intermediate_rule,
            "terminal_rule": self.terminal_rule,
            "allowed_types": sorted(self.allowed_types) or [WILDCARD],
            "dropped_types": list(self.dropped_types),
        }


@dataclass(frozen=True)
class DotWorkspace:
    dot_id: int
    concept: Concept
    anchors: tuple[str, ...]
    rules: DotRules
    subgraph: Subgraph
    local_store: ScopedStores

    def __post_init__(self):
        missing = set(self.anchors) - self.subgraph.nodes
        assert not missing, f"anchors {sorted(missing)} fell outside their workspace"
        assert set(self.local_store.entities.ids) <= self.subgraph.nodes


def describe_anchors(index: GraphIndex, anchors) -> str:
    lines = []
    for eid in anchors:
        e = index.entities[eid]
        lines.append(f"- {e.name} ({e.entity_type}): {e.description}")
    return "\n".join(lines)


def generate_rules(query: str, concept: Concept, anchors, index: GraphIndex, llm: LLM, template_dir=None) -> DotRules:
    prompt = render_prompt(
        "heuristic_generation",
        template_dir,
        query=query,
        concept=concept.query_text,
        anchors=describe_anchors(index, anchors),
        graph_description=index.schema.graph_description,
        entity_types=format_types(index.schema),
    )
    data = llm.complete(LlmRequest(Stage.HEURISTIC_GENERATION, prompt)).data
    requested = [t.strip() for t in data["allowed_types"] if t.strip()]
    keep, dropped = set(), []
    for label in requested:
        if label == WILDCARD:
            keep = set()
            dropped = []
            break
        if index.schema.accepts(label):
            keep.add(label)
        else:
            dropped.append(label)
    if dropped:
        logger.warning("dropping type labels outside the schema: %s", dropped)
    return DotRules(data["intermediate_rule"], data["terminal_rule"], frozenset(keep), tuple(dropped))


def build_dot(
    concept: Concept,
    anchors,
    index: GraphIndex,
    llm: LLM,
    h_max: int = 3,
    query: str | None = None,
    dot_id: int = 0,
    template_dir=None,
) -> DotWorkspace:
    """Generate rules with one LLM call, expand the filtered ball and scope the stores.

    If every requested type label is unknown (or none are given) the workspace
    is unfiltered.
    """
    anchors = tuple(dict.fromkeys(anchors))
    if not anchors:
        raise ValueError("a workspace needs at least one anchor")
    rules = generate_rules(query or concept.span, concept, anchors, index, llm, template_dir)
    sub = expand_hops(index, anchors, h_max, rules.allowed_types)
    return DotWorkspace(dot_id, concept, anchors, rules, sub, scoped_store(index, sub))

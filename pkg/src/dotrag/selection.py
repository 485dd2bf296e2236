"""Query anchoring: extract concepts with the LLM and ground them to graph entities."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .graph_store import GraphIndex, Schema
from .providers import LLM, Embedder, LlmRequest, Stage, render_prompt
from .vector_index import ScoredHit, VectorStore

logger = logging.getLogger(__name__)

LOW = "low"
HIGH = "high"
LOW_ONLY = "low_only"
LOW_AND_HIGH = "low_and_high"


@dataclass(frozen=True)
class Concept:
    span: str
    gloss: str = ""
    level: str = LOW

    def __post_init__(self):
        if not self.span.strip():
            raise ValueError("concept span must be non-empty")
        if self.level not in (LOW, HIGH):
            raise ValueError(f"unknown concept level {self.level!r}")

    @property
    def query_text(self) -> str:
        """Text embedded for grounding: the span followed by its gloss."""
        return f"{self.span} {self.gloss}".strip()

    def to_dict(self) -> dict:
        return {"span": self.span, "gloss": self.gloss, "level": self.level}


@dataclass(frozen=True)
class Extraction:
    low: tuple[Concept, ...]
    high: tuple[Concept, ...]
    mode: str
    fallback: bool = False

    @property
    def accepted(self) -> tuple[Concept, ...]:
        """The concept set that moves on to grounding (high concepts only when routed)."""
        return self.low if self.mode == LOW_ONLY else self.low + self.high


@dataclass(frozen=True)
class Anchor:
    concept: Concept
    entity_ids: tuple[str, ...]
    hits: tuple[ScoredHit, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class AnchorMap:
    entries: tuple[Anchor, ...]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def grounded(self) -> list[Anchor]:
        return [a for a in self.entries if a.entity_ids]

    def ungrounded(self) -> list[Anchor]:
        return [a for a in self.entries if not a.entity_ids]


def format_types(schema: Schema) -> str:
    lines = [f"- {t.label}: {t.definition}" for t in schema.entity_types]
    if schema.unsure_label not in schema.labels:
        lines.append(f"- {schema.unsure_label}: none of the above fits")
    return "\n".join(lines)


def extract_concepts(query: str, schema: Schema, llm: LLM, template_dir=None) -> Extraction:
    """One LLM call returning low- and high-level concepts plus the routing choice.

    If the model returns no concepts at all, the whole query becomes a single
    high-level concept so the pipeline always has something to ground.
    """
    if not query.strip():
        raise ValueError("query must be non-empty")
    prompt = render_prompt(
        "concept_extraction",
        template_dir,
        query=query,
        graph_description=schema.graph_description,
        entity_types=format_types(schema),
    )
    data = llm.complete(LlmRequest(Stage.CONCEPT_EXTRACTION, prompt)).data
    low = tuple(Concept(c["span"], c["gloss"], LOW) for c in data["low"])
    high = tuple(Concept(c["span"], c["gloss"], HIGH) for c in data["high"])
    mode = data["mode"]
    if not low and not high:
        logger.info("no concepts extracted for %r; falling back to the full query", query)
        return Extraction((), (Concept(query.strip(), "", HIGH),), LOW_AND_HIGH, fallback=True)
    if not low and mode == LOW_ONLY:
        # routing to low-level only with nothing low-level would ground nothing
        mode = LOW_AND_HIGH
    return Extraction(low, high, mode)


def ground_concepts(
    concepts,
    index: GraphIndex,
    global_store: VectorStore,
    embedder: Embedder,
    tau: float = 0.5,
    k_high: int = 10,
    low_cap: int = 10,
) -> AnchorMap:
    """Map each concept to anchor entities.

    Low-level concepts take every entity with similarity >= ``tau`` (best
    ``low_cap`` kept); high-level concepts take the ``k_high`` nearest entities.
    """
    if not 0 < tau <= 1:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    if k_high < 1 or low_cap < 1:
        raise ValueError("k_high and low_cap must be >= 1")
    entries = []
    for concept in concepts:
        q = embedder.embed(concept.query_text)
        if concept.level == LOW:
            hits = global_store.above_threshold(q, tau)[:low_cap]
        else:
            hits = global_store.top_k(q, k_high)
        ids: list[str] = []
        for h in hits:
            if h.item_id in index.entities and h.item_id not in ids:
                ids.append(h.item_id)
        entries.append(Anchor(concept, tuple(ids), tuple(hits)))
    return AnchorMap(tuple(entries))

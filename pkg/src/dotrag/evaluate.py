"""Node-level retrieval scoring and pairwise LLM judging with order swapping."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .graph_store import GraphIndex
from .providers import JUDGE_DIMENSIONS, LLM, LlmRequest, ProviderError, Stage, render_prompt

logger = logging.getLogger(__name__)

A, B, TIE = "A", "B", "tie"


@dataclass(frozen=True)
class GroundTruth:
    query_id: str
    question: str
    start_entity: str
    gold: frozenset[str]

    def __post_init__(self):
        if not self.gold:
            raise ValueError(f"ground truth {self.query_id!r} has no gold entities")


def load_ground_truth(path: str | Path, index: GraphIndex | None = None) -> list[GroundTruth]:
    """Read ``{"query_id", "question", "start_entity", "gold_entities"}`` lines."""
    items = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                gt = GroundTruth(
                    str(rec["query_id"]),
                    str(rec["question"]),
                    str(rec.get("start_entity", "")),
                    frozenset(map(str, rec["gold_entities"])),
                )
            except KeyError as exc:
                raise ValueError(f"{path}:{line_no}: missing field {exc}") from None
            if index is not None:
                unknown = sorted(g for g in gt.gold | {gt.start_entity} - {""} if g not in index.entities)
                if unknown:
                    raise ValueError(f"{path}:{line_no}: unknown entity ids {unknown}")
            items.append(gt)
    if not items:
        raise ValueError(f"{path}: ground-truth file is empty")
    return items


def resolve_chunks_to_nodes(retrieved_chunks: Iterable[str], retrieved_nodes: Iterable[str], index: GraphIndex) -> set[str]:
    """Retrieved entities plus, for each retrieved chunk, its center and every entity it mentions."""
    resolved = set(retrieved_nodes)
    for cid in retrieved_chunks:
        if cid not in index.chunks:
            raise KeyError(f"unknown chunk id {cid!r}")
        chunk = index.chunks[cid]
        resolved.update(chunk.entity_ids)
        if chunk.center_id is not None:
            resolved.add(chunk.center_id)
    return resolved


@dataclass(frozen=True)
class Scores:
    recall: float
    precision: float
    f1: float


def score_retrieval(retrieved: Iterable[str], gold: Iterable[str]) -> Scores:
    R, G = set(retrieved), set(gold)
    if not G:
        raise ValueError("gold set must be non-empty")
    hit = len(R & G)
    recall = hit / len(G)
    precision = hit / len(R) if R else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Scores(recall, precision, f1)


@dataclass
class EvalReport:
    per_query: dict[str, Scores] = field(default_factory=dict)

    def add(self, query_id: str, scores: Scores) -> None:
        self.per_query[query_id] = scores

    @property
    def n(self) -> int:
        return len(self.per_query)

    def averages(self) -> Scores:
        if not self.per_query:
            raise ValueError("no queries scored")
        vals = list(self.per_query.values())
        return Scores(
            sum(s.recall for s in vals) / len(vals),
            sum(s.precision for s in vals) / len(vals),
            sum(s.f1 for s in vals) / len(vals),
        )

    def to_dict(self) -> dict:
        avg = self.averages()
        return {
            "n_queries": self.n,
            "per_query": {
                qid: {"recall": s.recall, "precision": s.precision, "f1": s.f1}
                for qid, s in sorted(self.per_query.items())
            },
            "average": {"recall": avg.recall, "precision": avg.precision, "f1": avg.f1},
        }

    def to_table(self) -> str:
        rows = [f"{'query':<20} {'recall':>8} {'precision':>10} {'f1':>8}"]
        for qid, s in sorted(self.per_query.items()):
            rows.append(f"{qid:<20} {s.recall:>8.4f} {s.precision:>10.4f} {s.f1:>8.4f}")
        avg = self.averages()
        rows.append(f"{'AVERAGE':<20} {avg.recall:>8.4f} {avg.precision:>10.4f} {avg.f1:>8.4f}")
        return "\n".join(rows)


@dataclass
class JudgeTally:
    wins_a: dict[str, int] = field(default_factory=lambda: {d: 0 for d in JUDGE_DIMENSIONS})
    wins_b: dict[str, int] = field(default_factory=lambda: {d: 0 for d in JUDGE_DIMENSIONS})
    ties: dict[str, int] = field(default_factory=lambda: {d: 0 for d in JUDGE_DIMENSIONS})
    rounds: int = 0
    swapped_rounds: int = 0

    def record(self, winners: dict[str, str], swapped: bool = False) -> None:
        self.rounds += 1
        self.swapped_rounds += int(swapped)
        for dim in JUDGE_DIMENSIONS:
            bucket = {A: self.wins_a, B: self.wins_b}.get(winners[dim], self.ties)
            bucket[dim] += 1

    def win_rate(self, dim: str, side: str = A) -> float:
        if not self.rounds:
            return 0.0
        return (self.wins_a if side == A else self.wins_b)[dim] / self.rounds

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "swapped_rounds": self.swapped_rounds,
            "dimensions": {
                d: {
                    "wins_a": self.wins_a[d],
                    "wins_b": self.wins_b[d],
                    "ties": self.ties[d],
                    "win_rate_a": self.win_rate(d, A),
                    "win_rate_b": self.win_rate(d, B),
                }
                for d in JUDGE_DIMENSIONS
            },
        }

    def to_table(self) -> str:
        rows = [f"{'dimension':<18} {'A wins':>7} {'B wins':>7} {'ties':>5} {'A rate':>8}"]
        for d in JUDGE_DIMENSIONS:
            rows.append(
                f"{d:<18} {self.wins_a[d]:>7} {self.wins_b[d]:>7} {self.ties[d]:>5} {self.win_rate(d):>8.2%}"
            )
        return "\n".join(rows)


def _one_round(query, first, second, llm, template_dir) -> dict[str, str] | None:
    prompt = render_prompt("judge_pairwise", template_dir, query=query, answer_1=first, answer_2=second)
    try:
        return llm.complete(LlmRequest(Stage.JUDGE_PAIRWISE, prompt)).data
    except ProviderError as exc:
        logger.warning("judge round failed, recording a tie: %s", exc)
        return None


def judge_pair(query: str, answer_a: str, answer_b: str, llm: LLM, swap: bool = True, template_dir=None) -> list[dict[str, str]]:
    """Judge A vs B; with ``swap`` a second call presents B first and winners are mapped back.

    Returns one ``{dimension: "A" | "B" | "tie"}`` dict per call.
    """
    if not answer_a.strip() or not answer_b.strip():
        raise ValueError("both answers must be non-empty")
    orders = [(answer_a, answer_b, False)] + ([(answer_b, answer_a, True)] if swap else [])
    results = []
    for first, second, swapped in orders:
        raw = _one_round(query, first, second, llm, template_dir)
        pos_to_side = {"1": B, "2": A} if swapped else {"1": A, "2": B}
        results.append({d: TIE if raw is None else pos_to_side.get(raw[d], TIE) for d in JUDGE_DIMENSIONS})
    return results


def tally_pairs(
    pairs: Sequence[tuple[str, str, str]], llm: LLM, swap: bool = True, template_dir=None
) -> JudgeTally:
    """Run :func:`judge_pair` over ``(question, answer_a, answer_b)`` triples."""
    tally = JudgeTally()
    for question, a, b in pairs:
        for i, winners in enumerate(judge_pair(question, a, b, llm, swap, template_dir)):
            tally.record(winners, swapped=i == 1)
    return tally

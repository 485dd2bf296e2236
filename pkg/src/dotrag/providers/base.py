"""LLM and embedder contracts plus the structured-response parser shared by all backends.

Models answer with a fenced block labelled ``result`` holding a JSON object::

    Some optional preamble the parser ignores.
    ```result
    {"verdict": "partial"}
    ```
"""

from __future__ import annotations

import enum
import json
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, runtime_checkable

import numpy as np


class Stage(str, enum.Enum):
    CONCEPT_EXTRACTION = "concept_extraction"
    HEURISTIC_GENERATION = "heuristic_generation"
    PATH_JUDGMENT = "path_judgment"
    FOLLOWUP_QUERIES = "followup_queries"
    FINAL_ANSWER = "final_answer"
    JUDGE_PAIRWISE = "judge_pairwise"
    TEXTUALIZE_CHUNK = "textualize_chunk"
    ENTITY_SUMMARY = "entity_summary"
    RELATION_DESCRIBE = "relation_describe"
    MERGE_CONFIRM = "merge_confirm"
    TYPE_RELABEL = "type_relabel"


class ProviderError(RuntimeError):
    """Transport-level failure talking to a backend."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class ParseFailure(ProviderError):
    """The backend answered, but never in the stage's structured shape."""


@dataclass(frozen=True)
class LlmRequest:
    stage: Stage
    prompt: str

    def __post_init__(self):
        if not isinstance(self.stage, Stage):
            object.__setattr__(self, "stage", Stage(self.stage))
        if not self.prompt.strip():
            raise ValueError("LLM prompt must be non-empty")


@dataclass(frozen=True)
class LlmResponse:
    stage: Stage
    data: dict
    raw: str


@runtime_checkable
class LLM(Protocol):
    def complete(self, request: LlmRequest) -> LlmResponse: ...


@runtime_checkable
class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class ProviderPair:
    llm: LLM
    embedder: Embedder


class CallCounter:
    """Thread-safe per-stage call tally, attached to every provider."""

    def __init__(self):
        self._lock = threading.Lock()
        self.by_stage: dict[str, int] = {}

    def add(self, stage: Stage) -> None:
        with self._lock:
            self.by_stage[stage.value] = self.by_stage.get(stage.value, 0) + 1

    @property
    def total(self) -> int:
        with self._lock:
            return sum(self.by_stage.values())


_FENCE = re.compile(r"```\s*result\s*\n(.*?)```", re.DOTALL | re.IGNORECASE)


def extract_block(text: str) -> dict:
    """Pull the JSON object out of the last ``result`` fence (or a bare JSON reply)."""
    blocks = _FENCE.findall(text or "")
    body = blocks[-1] if blocks else (text or "")
    try:
        data = json.loads(body.strip())
    except json.JSONDecodeError as exc:
        raise ValueError(f"no parseable result block ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ValueError("result block must hold a JSON object")
    return data


def render_block(data: dict) -> str:
    return "```result\n" + json.dumps(data, ensure_ascii=False, sort_keys=True) + "\n```"


def _str_list(data: dict, key: str) -> list[str]:
    val = data.get(key, [])
    if not isinstance(val, list) or not all(isinstance(x, str) for x in val):
        raise ValueError(f"{key!r} must be a list of strings")
    return val


def _concepts(data: dict, key: str) -> list[dict]:
    val = data.get(key, [])
    if not isinstance(val, list):
        raise ValueError(f"{key!r} must be a list")
    out = []
    for item in val:
        if isinstance(item, str):
            item = {"span": item, "gloss": ""}
        if not isinstance(item, dict) or not str(item.get("span", "")).strip():
            raise ValueError(f"each {key!r} concept needs a non-empty span")
        out.append({"span": str(item["span"]).strip(), "gloss": str(item.get("gloss", "")).strip()})
    return out


def _check_concepts(d: dict) -> dict:
    mode = d.get("mode", "low_only")
    if mode not in ("low_only", "low_and_high"):
        raise ValueError(f"mode must be low_only or low_and_high, got {mode!r}")
    return {"low": _concepts(d, "low"), "high": _concepts(d, "high"), "mode": mode}


def _check_heuristics(d: dict) -> dict:
    out = {}
    for key in ("intermediate_rule", "terminal_rule"):
        val = d.get(key)
        if not isinstance(val, str) or not val.strip():
            raise ValueError(f"{key!r} must be a non-empty string")
        out[key] = val.strip()
    out["allowed_types"] = _str_list(d, "allowed_types")
    return out


VERDICTS = ("irrelevant", "partial", "complete")


def _check_judgment(d: dict) -> dict:
    if "verdicts" in d:
        verdicts = _str_list(d, "verdicts")
        bad = [v for v in verdicts if v.lower() not in VERDICTS]
        if bad:
            raise ValueError(f"unknown verdicts {bad}")
        return {"verdicts": [v.lower() for v in verdicts]}
    verdict = str(d.get("verdict", "")).lower()
    if verdict not in VERDICTS:
        raise ValueError(f"verdict must be one of {VERDICTS}, got {verdict!r}")
    return {"verdict": verdict}


def _check_followups(d: dict) -> dict:
    return {"queries": [q.strip() for q in _str_list(d, "queries") if q.strip()]}


def _check_answer(d: dict) -> dict:
    if not isinstance(d.get("answer"), str):
        raise ValueError("'answer' must be a string")
    return {"answer": d["answer"]}


JUDGE_DIMENSIONS = ("Comprehensiveness", "Logicality", "Relevance", "Coherence", "Overall")


def _check_pairwise(d: dict) -> dict:
    out = {}
    lowered = {k.lower(): v for k, v in d.items()}
    for dim in JUDGE_DIMENSIONS:
        val = str(lowered.get(dim.lower(), "")).strip().lower()
        val = {"answer 1": "1", "answer 2": "2"}.get(val, val)
        if val not in ("1", "2", "tie"):
            raise ValueError(f"dimension {dim} needs winner '1', '2' or 'tie', got {val!r}")
        out[dim] = val
    return out


def _check_text(d: dict) -> dict:
    if not isinstance(d.get("text"), str) or not d["text"].strip():
        raise ValueError("'text' must be a non-empty string")
    return {"text": d["text"]}


def _check_summary(d: dict) -> dict:
    for key in ("type", "description"):
        if not isinstance(d.get(key), str) or not d[key].strip():
            raise ValueError(f"{key!r} must be a non-empty string")
    return {"type": d["type"].strip(), "description": d["description"].strip()}


def _check_relations(d: dict) -> dict:
    return {"descriptions": _str_list(d, "descriptions")}


def _check_merge(d: dict) -> dict:
    groups = d.get("groups", [])
    if not isinstance(groups, list) or not all(
        isinstance(g, list) and all(isinstance(x, str) for x in g) for g in groups
    ):
        raise ValueError("'groups' must be a list of lists of ids")
    return {"groups": groups}


def _check_relabel(d: dict) -> dict:
    labels = d.get("labels")
    if not isinstance(labels, dict) or not all(isinstance(v, str) for v in labels.values()):
        raise ValueError("'labels' must map entity ids to type labels")
    return {"labels": {str(k): v.strip() for k, v in labels.items()}}


VALIDATORS: dict[Stage, Callable[[dict], dict]] = {
    Stage.CONCEPT_EXTRACTION: _check_concepts,
    Stage.HEURISTIC_GENERATION: _check_heuristics,
    Stage.PATH_JUDGMENT: _check_judgment,
    Stage.FOLLOWUP_QUERIES: _check_followups,
    Stage.FINAL_ANSWER: _check_answer,
    Stage.JUDGE_PAIRWISE: _check_pairwise,
    Stage.TEXTUALIZE_CHUNK: _check_text,
    Stage.ENTITY_SUMMARY: _check_summary,
    Stage.RELATION_DESCRIBE: _check_relations,
    Stage.MERGE_CONFIRM: _check_merge,
    Stage.TYPE_RELABEL: _check_relabel,
}


def parse_response(stage: Stage, raw: str) -> dict:
    """Extract and validate a stage response. Raises ``ValueError`` on any mismatch."""
    return VALIDATORS[stage](extract_block(raw))


class SharedClient:
    """Deep copies return the same object, so estimator clones share one client and its call counter."""

    def __deepcopy__(self, memo):
        return self


@dataclass
class RetryingLLM(SharedClient):
    """Shared parse/retry loop; subclasses provide ``_send(prompt) -> raw text``."""

    parse_attempts: int = 2
    counter: CallCounter = field(default_factory=CallCounter)

    def _send(self, request: LlmRequest) -> str:  # pragma: no cover - abstract
        raise NotImplementedError

    def complete(self, request: LlmRequest) -> LlmResponse:
        if self.parse_attempts < 1:
            raise ValueError("parse_attempts must be >= 1")
        raws = []
        for _ in range(self.parse_attempts):
            self.counter.add(request.stage)
            raw = self._send(request)
            raws.append(raw)
            try:
                return LlmResponse(request.stage, parse_response(request.stage, raw), raw)
            except ValueError as exc:
                err = exc
        raise ParseFailure(
            f"{request.stage.value}: no parseable response after {self.parse_attempts} attempts ({err})",
            raw="\n---\n".join(raws),
        )


def unit(vec: Any) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(arr)
    if norm == 0:
        raise ValueError("cannot normalise a zero vector")
    return arr / norm

"""Deterministic offline providers.

A mock script is JSON::

    {
      "rules": [
        {"stage": "path_judgment", "match": ["Tesla", "Elon"], "response": {"verdict": "complete"}},
        {"stage": "textualize_chunk",
         "pattern": "CENTER: (?P<center>.+)\\nNEIGHBORS: (?P<neighbors>.+)",
         "response": {"text": "<$center> is connected to $neighbors."}}
      ],
      "defaults": {"path_judgment": {"verdict": "irrelevant"}}
    }

Rules are tried in order and the first whose stage matches, whose ``match``
substrings all occur in the prompt and whose ``pattern`` (if any) matches wins.
Named regex groups are substituted into ``$name`` placeholders in the response.
A rule may give ``"raw"`` text instead of ``"response"`` to emit arbitrary output.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from string import Template
from typing import Any

import numpy as np

from .base import CallCounter, SharedClient, LlmRequest, LlmResponse, ParseFailure, Stage, parse_response, render_block

BUILTIN_DEFAULTS: dict[Stage, dict] = {
    Stage.CONCEPT_EXTRACTION: {"low": [], "high": [], "mode": "low_only"},
    Stage.HEURISTIC_GENERATION: {
        "intermediate_rule": "Keep entities that connect the concept to what the question asks about.",
        "terminal_rule": "Accept a path whose final entity answers the question.",
        "allowed_types": [],
    },
    Stage.PATH_JUDGMENT: {"verdict": "irrelevant"},
    Stage.FOLLOWUP_QUERIES: {"queries": []},
    Stage.FINAL_ANSWER: {"answer": "I could not find enough evidence to answer."},
    Stage.JUDGE_PAIRWISE: {d: "tie" for d in ("Comprehensiveness", "Logicality", "Relevance", "Coherence", "Overall")},
    Stage.TEXTUALIZE_CHUNK: {"text": "No content."},
    Stage.ENTITY_SUMMARY: {"type": "unsure", "description": "No description available."},
    Stage.RELATION_DESCRIBE: {"descriptions": []},
    Stage.MERGE_CONFIRM: {"groups": []},
    Stage.TYPE_RELABEL: {"labels": {}},
}


@dataclass(frozen=True)
class Rule:
    stage: Stage
    match: tuple[str, ...] = ()
    pattern: re.Pattern | None = None
    response: Any = None
    raw: str | None = None

    def matches(self, request: LlmRequest) -> dict[str, str] | None:
        if request.stage != self.stage:
            return None
        if not all(m in request.prompt for m in self.match):
            return None
        if self.pattern is None:
            return {}
        found = self.pattern.search(request.prompt)
        return None if found is None else {k: v for k, v in found.groupdict().items() if v is not None}


def _fill(obj: Any, groups: dict[str, str]) -> Any:
    if not groups:
        return obj
    if isinstance(obj, str):
        return Template(obj).safe_substitute(groups)
    if isinstance(obj, list):
        return [_fill(x, groups) for x in obj]
    if isinstance(obj, dict):
        return {_fill(k, groups): _fill(v, groups) for k, v in obj.items()}
    return obj


class ScriptedMock(SharedClient):
    """Rule-driven LLM stand-in; a pure function of (prompt, script)."""

    def __init__(self, rules=(), defaults: dict | None = None):
        self.rules: tuple[Rule, ...] = tuple(r if isinstance(r, Rule) else _rule(r) for r in rules)
        merged = dict(BUILTIN_DEFAULTS)
        for stage, resp in (defaults or {}).items():
            merged[Stage(stage)] = resp
        self.defaults = merged
        self.counter = CallCounter()

    @classmethod
    def from_dict(cls, script: dict) -> "ScriptedMock":
        return cls(script.get("rules", []), script.get("defaults", {}))

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedMock":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def raw_reply(self, request: LlmRequest) -> str:
        for rule in self.rules:
            groups = rule.matches(request)
            if groups is None:
                continue
            if rule.raw is not None:
                return _fill(rule.raw, groups)
            return render_block(_fill(rule.response, groups))
        return render_block(self.defaults[request.stage])

    def complete(self, request: LlmRequest) -> LlmResponse:
        self.counter.add(request.stage)
        raw = self.raw_reply(request)
        try:
            data = parse_response(request.stage, raw)
        except ValueError as exc:
            raise ParseFailure(f"{request.stage.value}: scripted reply does not parse ({exc})", raw=raw) from exc
        return LlmResponse(request.stage, data, raw)


def _rule(entry: dict) -> Rule:
    match = entry.get("match", ())
    if isinstance(match, str):
        match = (match,)
    pattern = entry.get("pattern")
    if "response" not in entry and "raw" not in entry:
        raise ValueError(f"mock rule needs 'response' or 'raw': {entry}")
    return Rule(
        stage=Stage(entry["stage"]),
        match=tuple(match),
        pattern=re.compile(pattern, re.DOTALL) if pattern else None,
        response=entry.get("response"),
        raw=entry.get("raw"),
    )


_TOKEN = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.split(text.lower()) if t]


@dataclass
class MockEmbedder:
    """Signed feature hashing of lowercase alphanumeric tokens, L2-normalised.

    Identical text gives identical vectors; shared tokens raise similarity.
    """

    dim: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")

    def _slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=str(self.seed).encode()).digest()
        value = int.from_bytes(digest, "big")
        return value % self.dim, 1.0 if (value >> 63) & 1 else -1.0

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim)
        tokens = tokenize(text) or [text.strip()]
        for tok in tokens:
            slot, sign = self._slot(tok)
            vec[slot] += sign
        norm = np.linalg.norm(vec)
        if norm == 0:
            # tokens cancelled out exactly; fall back to hashing the whole string
            slot, sign = self._slot(" ".join(tokens))
            vec[slot] = sign
            norm = 1.0
        return vec / norm

from .base import (
    JUDGE_DIMENSIONS,
    LLM,
    CallCounter,
    Embedder,
    LlmRequest,
    LlmResponse,
    ParseFailure,
    ProviderError,
    ProviderPair,
    Stage,
    extract_block,
    parse_response,
    render_block,
)
from .live import OpenAICompatEmbedder, OpenAICompatLLM
from .mock import MockEmbedder, ScriptedMock
from .prompts import render_prompt

__all__ = [
    "JUDGE_DIMENSIONS",
    "LLM",
    "CallCounter",
    "Embedder",
    "LlmRequest",
    "LlmResponse",
    "MockEmbedder",
    "OpenAICompatEmbedder",
    "OpenAICompatLLM",
    "ParseFailure",
    "ProviderError",
    "ProviderPair",
    "ScriptedMock",
    "Stage",
    "extract_block",
    "parse_response",
    "render_block",
    "render_prompt",
]

"""HTTP backends speaking the OpenAI-compatible chat-completions and embeddings APIs."""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field

import httpx
import numpy as np

from .base import LlmRequest, ProviderError, RetryingLLM, SharedClient, unit

logger = logging.getLogger(__name__)

ENV_BASE_URL = "DOTRAG_BASE_URL"
ENV_API_KEY = "DOTRAG_API_KEY"
ENV_CHAT_MODEL = "DOTRAG_CHAT_MODEL"
ENV_EMBED_MODEL = "DOTRAG_EMBED_MODEL"

SYSTEM_PROMPT = (
    "You are a careful assistant inside a graph retrieval system. "
    "Always finish your reply with a fenced block labelled result containing one JSON object."
)


class _HttpBase(SharedClient):
    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        max_in_flight: int = 8,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=timeout, transport=transport)
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def _post(self, path: str, payload: dict) -> dict:
        with self._gate:
            try:
                resp = self._client.post(path, json=payload)
                resp.raise_for_status()
                return resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                raise ProviderError(f"POST {path} failed: {exc}") from exc

    def close(self) -> None:
        self._client.close()


@dataclass
class OpenAICompatLLM(RetryingLLM):
    base_url: str = ""
    model: str = ""
    api_key: str | None = field(default=None, repr=False)
    max_in_flight: int = 8
    temperature: float = 0.0
    timeout: float = 60.0
    transport: httpx.BaseTransport | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.base_url or not self.model:
            raise ValueError("live LLM needs base_url and model")
        self._http = _HttpBase(self.base_url, self.api_key, self.max_in_flight, self.timeout, self.transport)

    @classmethod
    def from_env(cls, **overrides) -> "OpenAICompatLLM":
        kwargs = {
            "base_url": os.environ.get(ENV_BASE_URL, ""),
            "model": os.environ.get(ENV_CHAT_MODEL, ""),
            "api_key": os.environ.get(ENV_API_KEY),
        }
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    def _send(self, request: LlmRequest) -> str:
        body = self._http._post(
            "/chat/completions",
            {
                "model": self.model,
                "temperature": self.temperature,
                "messages": [
                    {"role": "system", "content": SYSTEM_PROMPT},
                    {"role": "user", "content": request.prompt},
                ],
            },
        )
        try:
            return body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected chat-completions payload: {body!r}") from exc


class OpenAICompatEmbedder:
    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int,
        api_key: str | None = None,
        max_in_flight: int = 8,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.model = model
        self.dim = dim
        self._http = _HttpBase(base_url, api_key, max_in_flight, timeout, transport)

    @classmethod
    def from_env(cls, dim: int, **overrides) -> "OpenAICompatEmbedder":
        kwargs = {
            "base_url": os.environ.get(ENV_BASE_URL, ""),
            "model": os.environ.get(ENV_EMBED_MODEL, ""),
            "api_key": os.environ.get(ENV_API_KEY),
        }
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(dim=dim, **kwargs)

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        body = self._http._post("/embeddings", {"model": self.model, "input": text})
        try:
            vec = np.asarray(body["data"][0]["embedding"], dtype=np.float64)
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected embeddings payload: {body!r}") from exc
        if vec.shape[0] != self.dim:
            raise ProviderError(f"embedder returned dim {vec.shape[0]}, expected {self.dim}")
        return unit(vec)

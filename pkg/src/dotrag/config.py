"""Run configuration with three layers: defaults, a JSON file of dotted keys, then flags."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .providers import MockEmbedder, OpenAICompatEmbedder, OpenAICompatLLM, ProviderPair, ScriptedMock
from .providers.live import ENV_API_KEY, ENV_BASE_URL, ENV_CHAT_MODEL, ENV_EMBED_MODEL
from .validation import ConfigError, check_bool, check_int, check_unit_interval

# dotted file key -> attribute
KEYS = {
    "provider.mock_script": "mock_script",
    "provider.base_url": "base_url",
    "provider.chat_model": "chat_model",
    "provider.embed_model": "embed_model",
    "provider.embed_dim": "embed_dim",
    "provider.max_in_flight": "max_in_flight",
    "provider.parse_attempts": "parse_attempts",
    "retrieval.tau": "tau",
    "retrieval.k_high": "k_high",
    "retrieval.low_cap": "low_cap",
    "retrieval.h_max": "h_max",
    "retrieval.t_max": "t_max",
    "retrieval.candidates": "candidates",
    "retrieval.paths_per_pair": "paths_per_pair",
    "retrieval.cap": "cap",
    "retrieval.n_chunks": "n_chunks",
    "retrieval.chunk_char_budget": "chunk_char_budget",
    "retrieval.batch_judging": "batch_judging",
    "paths.index": "index",
    "paths.ground_truth": "ground_truth",
    "paths.templates": "template_dir",
    "prep.max_retries": "max_retries",
    "prep.tau_dedup": "tau_dedup",
    "prep.batch_size": "batch_size",
    "prep.schema": "schema",
    "run.seed": "seed",
    "run.parallel": "parallel",
}
SECRET_KEYS = {"provider.api_key", "api_key"}


@dataclass(frozen=True)
class RunConfig:
    mock_script: str | None = None
    base_url: str | None = None
    chat_model: str | None = None
    embed_model: str | None = None
    embed_dim: int = 256
    max_in_flight: int = 8
    parse_attempts: int = 2
    tau: float = 0.5
    k_high: int = 10
    low_cap: int = 10
    h_max: int = 3
    t_max: int = 3
    candidates: int = 5
    paths_per_pair: int = 3
    cap: int = 20
    n_chunks: int = 8
    chunk_char_budget: int = 1200
    batch_judging: bool = False
    index: str | None = None
    ground_truth: str | None = None
    template_dir: str | None = None
    max_retries: int = 3
    tau_dedup: float = 0.60
    batch_size: int = 20
    schema: str | None = None
    seed: int = 0
    parallel: int = 1

    def __post_init__(self):
        for name in ("embed_dim", "max_in_flight", "parse_attempts", "k_high", "low_cap", "h_max", "t_max",
                     "candidates", "paths_per_pair", "cap", "n_chunks", "chunk_char_budget", "batch_size", "parallel"):
            check_int(name, getattr(self, name), 2 if name == "embed_dim" else 1)
        check_int("max_retries", self.max_retries, 0)
        check_int("seed", self.seed, 0)
        check_unit_interval("tau", self.tau)
        check_unit_interval("tau_dedup", self.tau_dedup)
        check_bool("batch_judging", self.batch_judging)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        """Defaults, then the file at ``path``, then non-None ``overrides`` (attribute names)."""
        values: dict[str, Any] = {}
        if path is not None:
            values.update(read_config_file(path))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        return cls(**values)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    @property
    def live(self) -> bool:
        return self.mock_script is None

    def resolved_base_url(self) -> str | None:
        return self.base_url or os.environ.get(ENV_BASE_URL)

    def check_provider_mode(self) -> None:
        """Exactly one of a mock script or a live endpoint must be selected."""
        url = self.resolved_base_url()
        if self.mock_script and self.base_url:
            raise ConfigError("provider", "choose either a mock script or a live endpoint, not both")
        if not self.mock_script and not url:
            raise ConfigError("provider", f"no provider: pass --mock-script or set {ENV_BASE_URL}")

    def redacted(self) -> dict:
        out = asdict(self)
        out["api_key"] = "***" if os.environ.get(ENV_API_KEY) else None
        return out

    def providers(self) -> ProviderPair:
        self.check_provider_mode()
        if self.mock_script:
            llm = ScriptedMock.from_file(self.mock_script)
            return ProviderPair(llm, MockEmbedder(self.embed_dim, self.seed))
        if not (self.chat_model or os.environ.get(ENV_CHAT_MODEL)) or not (
            self.embed_model or os.environ.get(ENV_EMBED_MODEL)
        ):
            raise ConfigError("provider", f"live mode needs {ENV_CHAT_MODEL} and {ENV_EMBED_MODEL}")
        llm = OpenAICompatLLM.from_env(
            base_url=self.base_url,
            model=self.chat_model,
            max_in_flight=self.max_in_flight,
            parse_attempts=self.parse_attempts,
        )
        embedder = OpenAICompatEmbedder.from_env(
            self.embed_dim, base_url=self.base_url, model=self.embed_model, max_in_flight=self.max_in_flight
        )
        return ProviderPair(llm, embedder)


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a flat JSON object of dotted keys into attribute names. Secrets are refused."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    out = {}
    for key, value in raw.items():
        if key in SECRET_KEYS:
            raise ConfigError(key, f"secrets are read from {ENV_API_KEY} only, never from a config file")
        if key not in KEYS:
            raise ConfigError(key, "unknown configuration key")
        out[KEYS[key]] = value
    return out

"""Small argument checks shared by the estimator, config and CLI."""

from __future__ import annotations

import numbers

from .graph_store import GraphIndex


class ConfigError(ValueError):
    """A parameter is outside its documented range. ``field`` names the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def check_int(name: str, value, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")
    return int(value)


def check_unit_interval(name: str, value) -> float:
    """Accept a float in (0, 1]."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if not 0 < value <= 1:
        raise ConfigError(name, f"must be in (0, 1], got {value}")
    return float(value)


def check_bool(name: str, value) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(name, f"expected true or false, got {value!r}")
    return value


def check_index(index) -> GraphIndex:
    if not isinstance(index, GraphIndex):
        raise TypeError(f"expected a GraphIndex, got {type(index).__name__}")
    if not index.entities:
        raise ValueError("index has no entities")
    if not index.entity_embeddings:
        raise ValueError("index carries no entity embeddings; rebuild it with an embedder")
    return index


def check_queries(queries) -> list[str]:
    if isinstance(queries, str):
        queries = [queries]
    out = list(queries)
    for q in out:
        if not isinstance(q, str) or not q.strip():
            raise ValueError(f"queries must be non-empty strings, got {q!r}")
    return out

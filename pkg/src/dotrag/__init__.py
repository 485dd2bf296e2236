"""Graph retrieval that answers questions by connecting query anchors to evidence paths."""

from .aggregate import AnswerBundle
from .config import RunConfig
from .estimator import DotRAG, EntityDeduplicator, Retrieval
from .graph_store import GraphIndex, load_index, write_index
from .search import SearchParams, Trace

__version__ = "0.1.0"

__all__ = [
    "AnswerBundle",
    "DotRAG",
    "EntityDeduplicator",
    "GraphIndex",
    "Retrieval",
    "RunConfig",
    "SearchParams",
    "Trace",
    "load_index",
    "write_index",
]

"""Prompt templates are plain-text files with ``$name`` placeholders.

The packaged set lives in ``dotrag/prompts``; pass ``template_dir`` to use an
edited copy without touching code.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from pathlib import Path
from string import Template


@lru_cache(maxsize=None)
def _load(name: str, template_dir: str | None) -> Template:
    if template_dir is not None:
        path = Path(template_dir) / f"{name}.txt"
        if path.exists():
            return Template(path.read_text(encoding="utf-8"))
    text = resources.files("dotrag").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    return Template(text)


def render_prompt(name: str, template_dir: str | Path | None = None, **fields) -> str:
    """Fill template ``name``; a missing placeholder raises ``KeyError``."""
    tpl = _load(name, None if template_dir is None else str(template_dir))
    return tpl.substitute({k: str(v) for k, v in fields.items()})

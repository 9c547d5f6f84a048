"""Versioned prompt template loading.

Templates live under ``prompts/v1/`` as plain text with named ``{field}``
placeholders, so any wording change is a visible diff against a pinned
version directory.
"""
from __future__ import annotations

from functools import lru_cache
from importlib import resources

PROMPT_VERSION = "v1"


@lru_cache(maxsize=None)
def load_template(name: str, version: str = PROMPT_VERSION) -> str:
    ref = resources.files("glarify").joinpath("prompts", version, f"{name}.txt")
    return ref.read_text(encoding="utf-8")


def render_template(name: str, version: str = PROMPT_VERSION, **fields: str) -> str:
    return load_template(name, version).format(**fields)

"""Tokenization helpers for the content-word overlap rules."""
from __future__ import annotations

import re

_TOKEN = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")

# Small closed-class list; enough to separate "the / a / he" style glue from
# the nouns and verbs the overlap rules care about.
STOPWORDS = frozenset(
    """
    a an the and or but if then than that this these those there here
    is are was were be been being am do does did done has have had
    he she it they them him her his hers its their theirs we us our ours
    i me my mine you your yours who whom whose which what when where why how
    to of in on at by for with from into onto over under up down out off
    as about after before during between through against around near
    not no nor so too very can could will would shall should may might must
    """.split()
)


def tokenize(text: str) -> list[str]:
    """Case-folded word tokens, punctuation dropped."""
    return _TOKEN.findall(text.lower())


def content_words(text: str, min_length: int = 0) -> set[str]:
    """Tokens that are not stopwords, optionally filtered by length."""
    return {t for t in tokenize(text) if t not in STOPWORDS and len(t) > min_length}

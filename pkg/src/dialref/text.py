"""Shared text utilities.

The same tokenizer is used for set-of-words labels, the substitution
heuristic, and the token-overlap metrics so that all comparisons are
internally consistent.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; punctuation is dropped.

    "The big scary-looking dog!" -> ["the", "big", "scary", "looking", "dog"]
    """
    return _TOKEN_RE.findall(text.lower())


def unique_in_order(tokens: list[str]) -> list[str]:
    """First occurrence of each token, original order preserved."""
    seen: set[str] = set()
    out: list[str] = []
    for tok in tokens:
        if tok not in seen:
            seen.add(tok)
            out.append(tok)
    return out

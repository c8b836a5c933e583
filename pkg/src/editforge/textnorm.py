"""Text normalization shared by QA validation and answer judging:
casefold, strip punctuation, collapse whitespace."""

from __future__ import annotations

import unicodedata

# Function words ignored when checking that a question mentions its
# relation; relation labels like "part of" are mostly made of these.
STOPWORDS = frozenset(
    """
    a an the of in on at by for to from with and or is was are were be been
    this that these those as has have had its it his her their into about
    after before during under over between among per via than then so if
    not no do does did done can could will would shall should may might
    """.split()
)


def normalize(text: str) -> str:
    """Casefold, strip punctuation/symbols outright ("D.C." -> "dc"),
    collapse runs of whitespace."""
    folded = text.casefold()
    kept: list[str] = []
    for ch in folded:
        cat = unicodedata.category(ch)
        if cat.startswith("P") or cat.startswith("S"):
            continue
        kept.append(ch)
    return " ".join("".join(kept).split())


def content_tokens(text: str) -> list[str]:
    """Normalized tokens with stopwords removed."""
    return [tok for tok in normalize(text).split() if tok not in STOPWORDS]


def contains_phrase(haystack: str, phrase: str) -> bool:
    """True when the normalized phrase occurs inside the normalized text."""
    needle = normalize(phrase)
    if not needle:
        return False
    return needle in normalize(haystack)

"""Shared text normalization: one tokenizer for search, NLU and guardrails."""

import re
import unicodedata

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def fold_diacritics(text: str) -> str:
    """Strip combining marks so 'guaraná' and 'guarana' compare equal."""
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def tokenize(text: str) -> list[str]:
    """Lowercase, fold diacritics, split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(fold_diacritics(text).lower())


def normalize_name(text: str) -> str:
    """Canonical form for name comparisons: tokens joined by single spaces."""
    return " ".join(tokenize(text))

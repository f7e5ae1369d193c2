"""Input/output safety checks: deny terms, injection patterns, card detection, catalog consistency.

All checks are deterministic rules so security behavior is reproducible under
test; a model-backed moderation hook can be layered on top through the same
verdict type.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from .catalog import Catalog
from .textnorm import normalize_name

RULE_DENY = "deny_terms"
RULE_INJECTION = "injection_patterns"
RULE_CARD = "payment_card"
RULE_LONG_DIGITS = "long_digit_sequence"
RULE_NONEXISTENT = "nonexistent_product"
RULE_PRICE = "price_mismatch"

# Digit runs of at least this length (separators stripped) count as sensitive
# even when they fail the card checksum.
LONG_DIGIT_MIN = 11


class RuleSetError(ValueError):
    """Guardrail rules file failed to load or compile."""


@dataclass(frozen=True)
class GuardrailVerdict:
    allowed: bool
    rule: str | None
    redacted: str


@dataclass(frozen=True)
class RuleSet:
    deny_terms: tuple[str, ...]
    injection_patterns: tuple[re.Pattern, ...]

    @classmethod
    def from_dict(cls, data: dict) -> "RuleSet":
        terms = data.get("deny_terms", [])
        patterns = data.get("injection_patterns", [])
        if not isinstance(terms, list) or not all(isinstance(t, str) for t in terms):
            raise RuleSetError("deny_terms must be an array of strings")
        if not isinstance(patterns, list) or not all(isinstance(p, str) for p in patterns):
            raise RuleSetError("injection_patterns must be an array of strings")
        compiled = []
        for pattern in patterns:
            try:
                compiled.append(re.compile(pattern, re.IGNORECASE))
            except re.error as exc:
                raise RuleSetError(f"injection pattern {pattern!r} does not compile: {exc}") from None
        return cls(
            deny_terms=tuple(normalize_name(t) for t in terms if normalize_name(t)),
            injection_patterns=tuple(compiled),
        )

    @classmethod
    def load(cls, path: str) -> "RuleSet":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise RuleSetError(f"rules file is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise RuleSetError("rules file must be a JSON object")
        return cls.from_dict(data)


def luhn_valid(digits: str) -> bool:
    """Mod-10 checksum over a pure digit string."""
    if not digits.isdigit():
        return False
    total = 0
    for i, ch in enumerate(reversed(digits)):
        d = ord(ch) - 48
        if i % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


_DIGIT_RUN_RE = re.compile(r"\d(?:[ .\-]?\d)+")


def find_sensitive_spans(text: str) -> list[tuple[int, int, str]]:
    """(start, end, kind) for card-number and long digit runs.

    A run is a card when its separator-stripped digits are 13-19 long and pass
    the Luhn checksum; otherwise runs of LONG_DIGIT_MIN+ digits are flagged as
    long_digit_sequence.
    """
    spans = []
    for match in _DIGIT_RUN_RE.finditer(text):
        digits = re.sub(r"[ .\-]", "", match.group())
        if 13 <= len(digits) <= 19 and luhn_valid(digits):
            spans.append((match.start(), match.end(), RULE_CARD))
        elif len(digits) >= LONG_DIGIT_MIN:
            spans.append((match.start(), match.end(), RULE_LONG_DIGITS))
    return spans


def _mask(text: str, spans: list[tuple[int, int, str]]) -> str:
    if not spans:
        return text
    chars = list(text)
    for start, end, _ in spans:
        for i in range(start, end):
            if chars[i].isdigit():
                chars[i] = "*"
    return "".join(chars)


def _deny_term_hit(message: str, rules: RuleSet) -> bool:
    normalized = f" {normalize_name(message)} "
    return any(f" {term} " in normalized for term in rules.deny_terms)


def check_input(message: str, rules: RuleSet) -> GuardrailVerdict:
    """Block deny terms, injection attempts and sensitive digit data; mask the latter."""
    spans = find_sensitive_spans(message)
    redacted = _mask(message, spans)
    if _deny_term_hit(message, rules):
        return GuardrailVerdict(False, RULE_DENY, redacted)
    for pattern in rules.injection_patterns:
        if pattern.search(message):
            return GuardrailVerdict(False, RULE_INJECTION, redacted)
    if spans:
        kinds = {kind for _, _, kind in spans}
        rule = RULE_CARD if RULE_CARD in kinds else RULE_LONG_DIGITS
        return GuardrailVerdict(False, rule, redacted)
    return GuardrailVerdict(True, None, redacted)


_SENTENCE_SPLIT_RE = re.compile(r"[!?\n]+|\.(?!\d)")  # keep decimals like 4.50 intact
_MONEY_RE = re.compile(r"(?:r\$|\$)\s*(\d+(?:[.,]\d{1,2})?)|\b(\d+[.,]\d{2})\b", re.IGNORECASE)
_OFFER_RE = re.compile(r"\b(discount|offer|deal|sale|price|costs?)\b|%\s*off\b", re.IGNORECASE)
_QUOTED_RE = re.compile(r"\"([^\"]+)\"|'([^']+)'|“([^”]+)”")
_CAP_RUN_RE = re.compile(r"\b[A-Z][a-zA-Z]*(?:\s+[A-Z][a-zA-Z]*)+\b")
_INNER_CAP_RE = re.compile(r"\b[A-Z][a-z]+[A-Z][a-zA-Z]*\b")


def _money_amounts(sentence: str) -> set[Decimal]:
    amounts = set()
    for match in _MONEY_RE.finditer(sentence):
        raw = (match.group(1) or match.group(2)).replace(",", ".")
        try:
            amounts.add(Decimal(raw).quantize(Decimal("0.01")))
        except InvalidOperation:
            continue
    return amounts


def _name_candidates(sentence: str) -> set[str]:
    candidates = set()
    for match in _QUOTED_RE.finditer(sentence):
        text = next(g for g in match.groups() if g)
        candidates.add(text)
    for match in _CAP_RUN_RE.finditer(sentence):
        candidates.add(match.group())
    for match in _INNER_CAP_RE.finditer(sentence):
        candidates.add(match.group())
    return candidates


def check_output(response: str, tool_calls: list, catalog: Catalog, rules: RuleSet) -> GuardrailVerdict:
    """Verify a model reply before it reaches the user.

    Blocks deny terms, product names absent from the catalog inside offer/price
    sentences, and prices that contradict the catalog for a named product.
    ``tool_calls`` is accepted for signature parity with the checking contract;
    dispatched calls are already schema-validated upstream.
    """
    del tool_calls
    if not response.strip():
        return GuardrailVerdict(True, None, response)
    if _deny_term_hit(response, rules):
        return GuardrailVerdict(False, RULE_DENY, response)

    catalog_names = {normalize_name(p.name) for p in catalog}
    products = [(normalize_name(p.name), p.unit_price) for p in catalog]
    for sentence in _SENTENCE_SPLIT_RE.split(response):
        if not sentence.strip():
            continue
        amounts = _money_amounts(sentence)
        if not amounts and not _OFFER_RE.search(sentence):
            continue
        for candidate in _name_candidates(sentence):
            if normalize_name(candidate) and normalize_name(candidate) not in catalog_names:
                return GuardrailVerdict(False, RULE_NONEXISTENT, response)
        if not amounts:
            continue
        normalized_sentence = f" {normalize_name(sentence)} "
        for name, price in products:
            if f" {name} " in normalized_sentence and price not in amounts:
                return GuardrailVerdict(False, RULE_PRICE, response)
    return GuardrailVerdict(True, None, response)

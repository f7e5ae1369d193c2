"""Lightweight intent routing: tf-idf featurizer, nearest-centroid classifier, rule entities.

Stands in for a trained intent/entity model while preserving its contract:
every utterance yields exactly one prediction, low-confidence utterances fall
through to the LLM subsystem via the ``delegate_to_llm`` label, and simple
entities (yes/no, numbers, zip codes) come from deterministic rules.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

from .textnorm import tokenize

DELEGATE_TO_LLM = "delegate_to_llm"
DEFAULT_THRESHOLD = 0.55


class CorpusError(ValueError):
    """Training corpus failed validation."""


@dataclass(frozen=True)
class Entity:
    type: str  # yes_no | number | zip
    value: str
    span: tuple[int, int]


@dataclass(frozen=True)
class IntentPrediction:
    intent: str
    confidence: float
    entities: tuple[Entity, ...] = ()


class IntentCorpus:
    """Labelled example utterances; every intent needs >= 3, no cross-intent dupes."""

    def __init__(self, examples: dict[str, list[str]]):
        if not examples:
            raise CorpusError("corpus must define at least one intent")
        seen: dict[str, str] = {}
        for intent, utterances in examples.items():
            if not isinstance(utterances, list) or len(utterances) < 3:
                raise CorpusError(f"intent {intent!r} needs at least 3 example utterances")
            for utterance in utterances:
                key = " ".join(tokenize(utterance))
                if key in seen and seen[key] != intent:
                    raise CorpusError(f"utterance {utterance!r} appears under both {seen[key]!r} and {intent!r}")
                seen[key] = intent
        self.examples = {intent: list(utts) for intent, utts in examples.items()}

    @classmethod
    def load(cls, path: str) -> "IntentCorpus":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise CorpusError("corpus file must be a JSON object mapping intent -> examples")
        return cls(data)

    def documents(self) -> list[tuple[str, list[str]]]:
        """(intent, tokens) per training utterance, in stable order."""
        docs = []
        for intent in self.examples:
            for utterance in self.examples[intent]:
                docs.append((intent, tokenize(utterance)))
        return docs


def _norm(vector: dict[str, float]) -> float:
    return math.sqrt(sum(w * w for w in vector.values()))


def _cosine(a: dict[str, float], b: dict[str, float]) -> float:
    if len(a) > len(b):
        a, b = b, a
    dot = sum(w * b.get(t, 0.0) for t, w in a.items())
    na, nb = _norm(a), _norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


class IntentClassifier:
    """tf-idf vectors scored by cosine against per-intent centroids.

    Confidence below ``threshold`` routes to ``delegate_to_llm``; a zero
    vector (all tokens out of vocabulary) delegates with confidence 0.
    """

    def __init__(self, corpus: IntentCorpus, threshold: float = DEFAULT_THRESHOLD):
        self.corpus = corpus
        self.threshold = threshold
        docs = corpus.documents()
        n_docs = len(docs)
        df: dict[str, int] = {}
        for _, tokens in docs:
            for token in set(tokens):
                df[token] = df.get(token, 0) + 1
        # Smoothed idf keeps every in-vocabulary token strictly positive.
        self._idf = {t: math.log((1 + n_docs) / (1 + count)) + 1.0 for t, count in df.items()}
        self._centroids: dict[str, dict[str, float]] = {}
        per_intent: dict[str, list[dict[str, float]]] = {}
        for intent, tokens in docs:
            per_intent.setdefault(intent, []).append(self._vector(tokens))
        for intent, vectors in per_intent.items():
            centroid: dict[str, float] = {}
            for vector in vectors:
                norm = _norm(vector)
                if norm == 0.0:
                    continue
                for token, weight in vector.items():
                    centroid[token] = centroid.get(token, 0.0) + weight / norm
            self._centroids[intent] = {t: w / len(vectors) for t, w in centroid.items()}

    @property
    def vocabulary(self) -> set[str]:
        return set(self._idf)

    def _vector(self, tokens: list[str]) -> dict[str, float]:
        vector: dict[str, float] = {}
        for token in tokens:
            idf = self._idf.get(token)
            if idf is None:
                continue  # out-of-vocabulary tokens contribute nothing
            vector[token] = vector.get(token, 0.0) + idf
        return vector

    def featurize(self, utterance: str) -> dict[str, float]:
        """Sparse tf x idf weights over the corpus vocabulary."""
        return self._vector(tokenize(utterance))

    def classify_vector(self, vector: dict[str, float]) -> tuple[str, float]:
        if not vector:
            return DELEGATE_TO_LLM, 0.0
        best_intent, best_sim = None, -1.0
        for intent in sorted(self._centroids):
            sim = _cosine(vector, self._centroids[intent])
            if sim > best_sim:
                best_intent, best_sim = intent, sim
        confidence = min(1.0, max(0.0, best_sim))
        if confidence < self.threshold:
            return DELEGATE_TO_LLM, confidence
        return best_intent, confidence

    def classify(self, utterance: str) -> IntentPrediction:
        intent, confidence = self.classify_vector(self.featurize(utterance))
        return IntentPrediction(intent=intent, confidence=confidence, entities=extract_entities(utterance))


_YES_RE = re.compile(r"\b(yes|yeah|yep|yup|sure|ok|okay|confirm|affirmative)\b", re.IGNORECASE)
_NO_RE = re.compile(r"\b(no|nope|nah|negative|cancel)\b", re.IGNORECASE)
_ZIP_RE = re.compile(r"\b\d{5}-\d{3}\b|\b\d{5,8}\b")
_NUMBER_RE = re.compile(r"\b\d+\b")


def extract_entities(utterance: str) -> tuple[Entity, ...]:
    """Rule-based yes_no / zip / number extraction with character spans.

    Zip-shaped digit runs win over plain numbers when the spans overlap.
    """
    entities: list[Entity] = []
    zip_spans = []
    for match in _ZIP_RE.finditer(utterance):
        zip_spans.append(match.span())
        entities.append(Entity("zip", match.group(), match.span()))
    for match in _NUMBER_RE.finditer(utterance):
        start, end = match.span()
        if any(start < ze and zs < end for zs, ze in zip_spans):
            continue
        entities.append(Entity("number", match.group(), match.span()))
    for match in _YES_RE.finditer(utterance):
        entities.append(Entity("yes_no", "yes", match.span()))
    for match in _NO_RE.finditer(utterance):
        entities.append(Entity("yes_no", "no", match.span()))
    entities.sort(key=lambda e: e.span)
    return tuple(entities)

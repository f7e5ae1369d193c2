"""Model adapters: a deterministic scripted stand-in and an HTTP chat-completions client.

Every offline test runs against ScriptedAdapter, which maps message patterns
to fixed tool calls/texts. LiveAdapter speaks the common chat-completions wire
format (endpoint, model and key come from config) behind the same interface.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from typing import Protocol

import httpx

from .tools import TOOL_CART_EDIT, TOOL_FINISH_PURCHASE, TOOL_PRODUCT_SEARCH, chat_completions_tool_schemas


class AdapterError(RuntimeError):
    """Transport failure or nonsense payload from the model backend."""


@dataclass(frozen=True)
class LLMRequest:
    system_prompt: str
    messages: tuple[tuple[str, str], ...]  # (role, text), chronological
    tool_schemas: tuple[dict, ...] = ()

    def to_dict(self) -> dict:
        return {
            "system_prompt": self.system_prompt,
            "messages": [{"role": role, "content": text} for role, text in self.messages],
            "tool_schemas": list(self.tool_schemas),
        }


@dataclass(frozen=True)
class LLMResponse:
    text: str | None
    tool_calls: tuple[object, ...] = ()  # raw, unvalidated records


class LLMAdapter(Protocol):
    def complete(self, request: LLMRequest) -> LLMResponse: ...


# --- scripted adapter ---------------------------------------------------------

_QTY_WORDS = {
    "a": 1, "an": 1, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}
_QTY_PATTERN = r"\d+|a|an|one|two|three|four|five|six|seven|eight|nine|ten"

_SEARCH_MARKER_RE = re.compile(
    r"\b(?:do you (?:have|sell|carry)|show me|got any|recommend|suggest|looking for|find me)\b",
    re.IGNORECASE,
)
_ADD_CONTEXT_RE = re.compile(
    rf"\badd (?:(?P<qty>{_QTY_PATTERN})\s+)?(?:of\s+)?(?:them|those|these|it|that one)\b",
    re.IGNORECASE,
)
_ADD_RE = re.compile(
    rf"\b(?:add|put) (?:(?P<qty>{_QTY_PATTERN})\s+)?(?:of\s+)?(?:the\s+)?(?P<product>.+?) (?:to|in|into) (?:my|the) cart\b",
    re.IGNORECASE,
)
_REMOVE_RE = re.compile(
    rf"\b(?:remove|take|drop) (?:(?P<qty>{_QTY_PATTERN})\s+)?(?:of\s+)?(?:the\s+)?(?P<product>.+?) (?:from|out of) (?:my|the) cart\b",
    re.IGNORECASE,
)
_FINISH_RE = re.compile(
    r"\b(?:that'?s all|that is all|(?:i'?m|i am) (?:all )?done|checkout|check out|"
    r"(?:finish|complete|finalize|close) (?:my|the) (?:order|purchase))\b",
    re.IGNORECASE,
)
# Matches the deterministic recommendation rendering ("- <name> (<price>)")
# so contextual references like "two of them" resolve to the latest suggestion.
_RECOMMENDED_LINE_RE = re.compile(r"^- (?P<name>.+?) \(", re.MULTILINE)

FALLBACK_TEXT = (
    "I can help with product recommendations and with your cart. "
    "What would you like to order today?"
)


def _qty(raw: str | None) -> int:
    if raw is None:
        return 1
    raw = raw.lower()
    return _QTY_WORDS.get(raw) or int(raw)


class ScriptedAdapter:
    """Deterministic pattern -> tool-call mapping used by the offline test rig."""

    def complete(self, request: LLMRequest) -> LLMResponse:
        message = self._last_user_message(request)
        calls: list[dict] = []
        if _SEARCH_MARKER_RE.search(message):
            calls.append({"name": TOOL_PRODUCT_SEARCH, "args": {"query": message}})
        calls.extend(self._cart_edits(message, request))
        if _FINISH_RE.search(message):
            calls.append({"name": TOOL_FINISH_PURCHASE, "args": {}})
        if calls:
            return LLMResponse(text=None, tool_calls=tuple(calls))
        return LLMResponse(text=FALLBACK_TEXT)

    @staticmethod
    def _last_user_message(request: LLMRequest) -> str:
        for role, text in reversed(request.messages):
            if role == "user":
                return text
        return ""

    def _cart_edits(self, message: str, request: LLMRequest) -> list[dict]:
        calls = []
        context_match = _ADD_CONTEXT_RE.search(message)
        if context_match:
            product = self._latest_recommendation(request)
            if product:
                calls.append({
                    "name": TOOL_CART_EDIT,
                    "args": {"op": "add", "product": product, "qty": _qty(context_match.group("qty"))},
                })
        for match in _ADD_RE.finditer(message):
            calls.append({
                "name": TOOL_CART_EDIT,
                "args": {"op": "add", "product": match.group("product"), "qty": _qty(match.group("qty"))},
            })
        for match in _REMOVE_RE.finditer(message):
            calls.append({
                "name": TOOL_CART_EDIT,
                "args": {"op": "remove", "product": match.group("product"), "qty": _qty(match.group("qty"))},
            })
        return calls

    @staticmethod
    def _latest_recommendation(request: LLMRequest) -> str | None:
        for role, text in reversed(request.messages):
            if role != "assistant":
                continue
            match = _RECOMMENDED_LINE_RE.search(text)
            if match:
                return match.group("name")
        return None


# --- live adapter ---------------------------------------------------------------

class LiveAdapter:
    """Chat-completions client; safe for concurrent use across sessions."""

    def __init__(self, endpoint: str, model: str, api_key_env: str = "LLM_API_KEY",
                 timeout_ms: int = 30000, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_s = timeout_ms / 1000.0
        self._client = client or httpx.Client(timeout=self.timeout_s)

    def complete(self, request: LLMRequest) -> LLMResponse:
        payload = {
            "model": self.model,
            "messages": [{"role": "system", "content": request.system_prompt}]
            + [{"role": role, "content": text} for role, text in request.messages],
            "tools": list(request.tool_schemas) or chat_completions_tool_schemas(),
            "tool_choice": "auto",
        }
        headers = {}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            response = self._client.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout_s)
            response.raise_for_status()
            body = response.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise AdapterError(f"chat-completions request failed: {exc}") from exc
        return self._parse_body(body)

    @staticmethod
    def _parse_body(body: object) -> LLMResponse:
        try:
            message = body["choices"][0]["message"]
        except (KeyError, IndexError, TypeError):
            raise AdapterError("chat-completions response missing choices[0].message") from None
        text = message.get("content")
        records = []
        for raw in message.get("tool_calls") or []:
            function = raw.get("function", {}) if isinstance(raw, dict) else {}
            name = function.get("name")
            arguments = function.get("arguments", "{}")
            if isinstance(arguments, str):
                try:
                    arguments = json.loads(arguments)
                except json.JSONDecodeError:
                    pass  # leave the raw string; strict validation rejects it per record
            records.append({"name": name, "args": arguments})
        return LLMResponse(text=text if isinstance(text, str) and text else None, tool_calls=tuple(records))


@dataclass
class ScriptedSequenceAdapter:
    """Replays fixed responses in order; test helper for failure-path contracts."""

    responses: list[object] = field(default_factory=list)
    calls_seen: list[LLMRequest] = field(default_factory=list)

    def complete(self, request: LLMRequest) -> LLMResponse:
        self.calls_seen.append(request)
        if not self.responses:
            raise AdapterError("scripted sequence exhausted")
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item

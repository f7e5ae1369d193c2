"""Prompt assembly, tool dispatch and the per-turn reply pipeline for the LLM path.

One model round per user turn: build the prompt (instructions + tool schemas +
few-shots + memory), call the adapter, strictly validate the returned tool
calls, dispatch them (searches concurrently, mutations serially, outcomes in
call order) and compose the reply. Cart changes are always followed by the
deterministic cart summary.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

from .adapters import AdapterError, LLMAdapter, LLMRequest, LLMResponse
from .cart import PendingAddition, propose_add, remove, render_summary
from .catalog import Catalog, Product, SearchResult, search
from .dialogue import Session, fill_template
from .guardrails import RuleSet, check_output
from .tools import (
    TOOL_CART_EDIT,
    TOOL_FINISH_PURCHASE,
    TOOL_PRODUCT_SEARCH,
    ParseResult,
    ToolCall,
    chat_completions_tool_schemas,
    parse_tool_calls,
)

logger = logging.getLogger(__name__)

# Original instructions for this implementation (any deployment should tune them).
SYSTEM_PROMPT = (
    "You are a helpful shopping assistant for a retail store. Help the customer find "
    "products and manage their cart using only the provided tools. Use product_search for "
    "recommendations, cart_edit to add or remove items, and finish_purchase when the "
    "customer says the cart is complete. Never invent products, prices or discounts; only "
    "mention items returned by the catalog. Additions always require user confirmation."
)

# Minimum search score for resolving a free-text product mention to a catalog entry.
RESOLVE_MIN_SCORE = 0.5


class FewShotError(ValueError):
    """Few-shot examples file failed validation."""


def load_few_shots(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise FewShotError("few-shots file must be a JSON array")
    for i, shot in enumerate(data):
        if not isinstance(shot, dict) or "user" not in shot:
            raise FewShotError(f"few-shot {i} must be an object with a 'user' field")
        if "assistant_text" not in shot and "assistant_tool_calls" not in shot:
            raise FewShotError(f"few-shot {i} needs assistant_text or assistant_tool_calls")
    return data


def build_memory(session: Session, window: int) -> list[tuple[str, str]]:
    """Last ``window`` turns; guardrail-blocked messages never reach history."""
    turns = session.history[-window:] if window > 0 else []
    return [(turn.role, turn.text) for turn in turns]


def build_prompt(session: Session, user_message: str, *, few_shots: list[dict],
                 few_shot_count: int, memory_window: int) -> LLMRequest:
    """Deterministic request: instructions + schemas + K few-shots + memory + message."""
    messages: list[tuple[str, str]] = []
    for shot in few_shots[:few_shot_count]:
        messages.append(("user", shot["user"]))
        if shot.get("assistant_text"):
            messages.append(("assistant", shot["assistant_text"]))
        if shot.get("assistant_tool_calls"):
            rendered = json.dumps({"tool_calls": shot["assistant_tool_calls"]},
                                  sort_keys=True, separators=(",", ":"))
            messages.append(("assistant", rendered))
    messages.extend(build_memory(session, memory_window))
    messages.append(("user", user_message))
    return LLMRequest(
        system_prompt=SYSTEM_PROMPT,
        messages=tuple(messages),
        tool_schemas=tuple(chat_completions_tool_schemas()),
    )


# --- dispatch -----------------------------------------------------------------

@dataclass(frozen=True)
class ToolOutcome:
    call: ToolCall
    ok: bool
    kind: str  # search | proposed | unavailable | removed | not_in_cart | checkout | error
    results: tuple[SearchResult, ...] = ()
    product: Product | None = None
    requested_name: str | None = None
    qty: int = 0
    pending: PendingAddition | None = None
    replaced_pending: bool = False
    alternatives: tuple[SearchResult, ...] = ()
    error: str | None = None


SearchFn = Callable[[Catalog, str, int], list[SearchResult]]


def resolve_product(catalog: Catalog, name: str) -> tuple[Product | None, tuple[SearchResult, ...]]:
    """Map the model's free-text product mention to a catalog entry via search.

    The top hit must score at least RESOLVE_MIN_SCORE; otherwise the mention is
    treated as unavailable and up to 3 alternatives are suggested.
    """
    hits = search(catalog, name, 3)
    if hits and hits[0].score >= RESOLVE_MIN_SCORE:
        return catalog.get(hits[0].product_id), tuple(hits[1:])
    return None, tuple(hits)


def dispatch(calls: list[ToolCall], session: Session, catalog: Catalog,
             search_fn: SearchFn | None = None) -> list[ToolOutcome]:
    """Run validated calls; searches may overlap, mutations stay in call order.

    Outcomes are returned in the original call order regardless of which search
    finished first, and one failing call never takes the others down.
    """
    search_fn = search_fn or search
    outcomes: list[ToolOutcome | None] = [None] * len(calls)

    searches = [(i, call) for i, call in enumerate(calls) if call.name == TOOL_PRODUCT_SEARCH]
    if searches:
        with ThreadPoolExecutor(max_workers=min(4, len(searches))) as pool:
            futures = {
                pool.submit(search_fn, catalog, str(call.args["query"]), 5): (i, call)
                for i, call in searches
            }
            for future, (i, call) in futures.items():
                try:
                    outcomes[i] = ToolOutcome(call=call, ok=True, kind="search",
                                              results=tuple(future.result()))
                except Exception as exc:
                    logger.exception("product search failed")
                    outcomes[i] = ToolOutcome(call=call, ok=False, kind="error", error=str(exc))

    for i, call in enumerate(calls):
        if call.name == TOOL_PRODUCT_SEARCH:
            continue
        try:
            outcomes[i] = _dispatch_mutation(call, session, catalog)
        except Exception as exc:
            logger.exception("tool call failed: %s", call.name)
            outcomes[i] = ToolOutcome(call=call, ok=False, kind="error", error=str(exc))
    return [outcome for outcome in outcomes if outcome is not None]


def _dispatch_mutation(call: ToolCall, session: Session, catalog: Catalog) -> ToolOutcome:
    if call.name == TOOL_FINISH_PURCHASE:
        return ToolOutcome(call=call, ok=True, kind="checkout")

    op = call.args["op"]
    name = str(call.args["product"])
    qty = int(call.args["qty"])
    product, alternatives = resolve_product(catalog, name)

    if op == "add":
        if product is None:
            return ToolOutcome(call=call, ok=True, kind="unavailable", requested_name=name,
                               qty=qty, alternatives=alternatives)
        result = propose_add(session.cart, catalog, product.id, qty, turn=session.turn_count)
        if not result.available:
            return ToolOutcome(call=call, ok=True, kind="unavailable", requested_name=name,
                               product=product, qty=qty, alternatives=result.alternatives)
        replaced = session.pending is not None
        session.pending = result.pending
        return ToolOutcome(call=call, ok=True, kind="proposed", product=product, qty=qty,
                           pending=result.pending, replaced_pending=replaced)

    if product is None:
        return ToolOutcome(call=call, ok=True, kind="not_in_cart", requested_name=name, qty=qty)
    result = remove(session.cart, product.id, qty)
    if not result.removed:
        return ToolOutcome(call=call, ok=True, kind="not_in_cart", requested_name=name,
                           product=product, qty=qty)
    session.cart = result.cart
    return ToolOutcome(call=call, ok=True, kind="removed", product=product,
                       qty=result.removed_qty)


# --- reply composition ----------------------------------------------------------

@dataclass
class RespondResult:
    replies: list[str] = field(default_factory=list)
    outcomes: list[ToolOutcome] = field(default_factory=list)
    parse: ParseResult = field(default_factory=ParseResult)
    llm_text: str | None = None
    output_blocked: bool = False
    adapter_failed: bool = False
    cart_mutated: bool = False


def _template(templates: dict[str, list[str]], key: str, context: dict[str, str]) -> str:
    for candidate in templates.get(key, []):
        text = fill_template(candidate, context)
        if text is not None:
            return text
    return templates["fallback"][0]


def render_recommendations(results: tuple[SearchResult, ...], catalog: Catalog,
                           templates: dict[str, list[str]]) -> str:
    """LLM-free rendering of search hits; the '- name (price)' lines are a
    stable contract (the scripted adapter resolves 'them' against them)."""
    if not results:
        return _template(templates, "no_results", {})
    lines = [_template(templates, "recommendations", {})]
    for hit in results:
        product = catalog.get(hit.product_id)
        lines.append(f"- {product.name} ({product.unit_price:.2f})")
    return "\n".join(lines)


def _render_outcome(outcome: ToolOutcome, catalog: Catalog,
                    templates: dict[str, list[str]]) -> str | None:
    if outcome.kind == "search":
        return render_recommendations(outcome.results, catalog, templates)
    if outcome.kind == "proposed":
        context = {
            "product": outcome.product.name,
            "price": f"{outcome.product.unit_price:.2f}",
            "qty": str(outcome.qty),
        }
        text = _template(templates, "confirm_add", context)
        if outcome.replaced_pending:
            text = _template(templates, "pending_replaced", {}) + " " + text
        return text
    if outcome.kind == "unavailable":
        shown = outcome.product.name if outcome.product else outcome.requested_name
        text = _template(templates, "unavailable", {"product": shown})
        if outcome.alternatives:
            names = []
            for alt in outcome.alternatives:
                product = catalog.get(alt.product_id)
                names.append(f"- {product.name} ({product.unit_price:.2f})")
            text += "\n" + _template(templates, "alternatives", {}) + "\n" + "\n".join(names)
        return text
    if outcome.kind == "removed":
        return _template(templates, "removed",
                         {"product": outcome.product.name, "qty": str(outcome.qty)})
    if outcome.kind == "not_in_cart":
        shown = outcome.product.name if outcome.product else outcome.requested_name
        return _template(templates, "not_in_cart", {"product": shown})
    if outcome.kind == "error":
        return _template(templates, "tool_error", {})
    return None  # checkout triggers are rendered by the gateway (form prompt)


def respond(session: Session, user_message: str, *, adapter: LLMAdapter, catalog: Catalog,
            rules: RuleSet, templates: dict[str, list[str]], few_shots: list[dict],
            few_shot_count: int = 4, memory_window: int = 20,
            search_fn: SearchFn | None = None) -> RespondResult:
    """Full LLM turn. The caller guarantees the message passed input guardrails."""
    result = RespondResult()
    request = build_prompt(session, user_message, few_shots=few_shots,
                           few_shot_count=few_shot_count, memory_window=memory_window)
    response = _call_with_retry(adapter, request)
    if response is None:
        result.adapter_failed = True
        result.replies = [_template(templates, "apology", {})]
        return result

    result.parse = parse_tool_calls(response.tool_calls)
    result.llm_text = response.text
    for error in result.parse.errors:
        logger.warning("rejected tool call %d: %s (%s)", error.index, error.message, error.record)

    if not result.parse.calls and not response.text:
        # Nothing usable came back (e.g. only malformed calls): ask again.
        result.replies = [_template(templates, "apology", {})]
        return result

    result.outcomes = dispatch(result.parse.calls, session, catalog, search_fn=search_fn)
    result.cart_mutated = any(outcome.kind == "removed" for outcome in result.outcomes)

    replies: list[str] = []
    if response.text:
        verdict = check_output(response.text, result.parse.calls, catalog, rules)
        if not verdict.allowed:
            logger.warning("output guardrail %s blocked a model reply", verdict.rule)
            result.output_blocked = True
            result.replies = [_template(templates, "refusal", {})]
            return result
        replies.append(response.text)
    for outcome in result.outcomes:
        text = _render_outcome(outcome, catalog, templates)
        if text:
            replies.append(text)
    if result.cart_mutated:
        replies.append(render_summary(session.cart, catalog))
    if not replies and not result.outcomes:
        replies.append(_template(templates, "apology", {}))
    result.replies = replies
    return result


def _call_with_retry(adapter: LLMAdapter, request: LLMRequest) -> LLMResponse | None:
    for attempt in (1, 2):
        try:
            return adapter.complete(request)
        except AdapterError as exc:
            logger.warning("adapter attempt %d failed: %s", attempt, exc)
    return None

"""Strict closed-world validation of model-emitted tool calls.

The tool set is fixed: product_search, cart_edit, finish_purchase. Raw call
records are validated field by field (exact keys, exact types); anything off
the schema becomes a structured per-record error instead of an exception, so
malformed model output can never crash the turn pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

TOOL_PRODUCT_SEARCH = "product_search"
TOOL_CART_EDIT = "cart_edit"
TOOL_FINISH_PURCHASE = "finish_purchase"

TOOL_NAMES = (TOOL_PRODUCT_SEARCH, TOOL_CART_EDIT, TOOL_FINISH_PURCHASE)

CART_OPS = ("add", "remove")


@dataclass(frozen=True)
class ToolCall:
    name: str
    args: Mapping[str, object]


@dataclass(frozen=True)
class ToolCallError:
    index: int
    message: str
    record: str  # repr of the offending record, truncated


@dataclass
class ParseResult:
    calls: list[ToolCall] = field(default_factory=list)
    errors: list[ToolCallError] = field(default_factory=list)

    @property
    def all_valid(self) -> bool:
        return not self.errors


def _is_str(value: object) -> bool:
    return isinstance(value, str)


def _is_positive_int(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= 1


def _validate_args(name: str, args: Mapping[str, object]) -> str | None:
    """None when valid, otherwise a human-readable reason."""
    if name == TOOL_PRODUCT_SEARCH:
        expected = {"query"}
    elif name == TOOL_CART_EDIT:
        expected = {"op", "product", "qty"}
    else:  # finish_purchase
        expected = set()

    keys = set(args.keys())
    missing = expected - keys
    extra = keys - expected
    if missing:
        return f"missing args: {', '.join(sorted(missing))}"
    if extra:
        return f"unknown args: {', '.join(sorted(extra))}"

    if name == TOOL_PRODUCT_SEARCH and not _is_str(args["query"]):
        return "query must be a string"
    if name == TOOL_CART_EDIT:
        if args["op"] not in CART_OPS:
            return "op must be 'add' or 'remove'"
        if not _is_str(args["product"]) or not args["product"].strip():
            return "product must be a non-empty string"
        if not _is_positive_int(args["qty"]):
            return "qty must be an integer >= 1"
    return None


def validate_record(record: object) -> ToolCall | str:
    """ToolCall for a schema-conforming record, else the rejection reason."""
    if not isinstance(record, Mapping):
        return f"record must be an object, got {type(record).__name__}"
    keys = set(record.keys())
    if keys != {"name", "args"}:
        return "record must have exactly the keys 'name' and 'args'"
    name = record["name"]
    if not _is_str(name):
        return "name must be a string"
    if name not in TOOL_NAMES:
        return f"unknown tool {name!r}"
    args = record["args"]
    if not isinstance(args, Mapping):
        return "args must be an object"
    reason = _validate_args(name, args)
    if reason is not None:
        return reason
    return ToolCall(name=name, args=dict(args))


def parse_tool_calls(records: object) -> ParseResult:
    """Validate every raw record; valid and invalid calls coexist in the result."""
    result = ParseResult()
    if records is None:
        return result
    try:
        items = list(records)
    except TypeError:
        result.errors.append(ToolCallError(0, "tool_calls must be a list of records", _safe_repr(records)))
        return result
    for index, record in enumerate(items):
        try:
            outcome = validate_record(record)
        except Exception as exc:  # hostile objects (e.g. raising __eq__) stay contained
            outcome = f"record could not be validated: {exc}"
        if isinstance(outcome, ToolCall):
            result.calls.append(outcome)
        else:
            result.errors.append(ToolCallError(index, outcome, _safe_repr(record)))
    return result


def _safe_repr(value: object, limit: int = 120) -> str:
    try:
        text = repr(value)
    except Exception:
        text = f"<unreprable {type(value).__name__}>"
    return text if len(text) <= limit else text[: limit - 3] + "..."


def chat_completions_tool_schemas() -> list[dict]:
    """Tool definitions in the chat-completions wire shape for the live adapter."""
    return [
        {
            "type": "function",
            "function": {
                "name": TOOL_PRODUCT_SEARCH,
                "description": "Search the store catalog for products matching a free-text query.",
                "parameters": {
                    "type": "object",
                    "properties": {"query": {"type": "string"}},
                    "required": ["query"],
                    "additionalProperties": False,
                },
            },
        },
        {
            "type": "function",
            "function": {
                "name": TOOL_CART_EDIT,
                "description": "Add a product to the cart (confirmation will be requested) or remove one.",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "op": {"type": "string", "enum": list(CART_OPS)},
                        "product": {"type": "string"},
                        "qty": {"type": "integer", "minimum": 1},
                    },
                    "required": ["op", "product", "qty"],
                    "additionalProperties": False,
                },
            },
        },
        {
            "type": "function",
            "function": {
                "name": TOOL_FINISH_PURCHASE,
                "description": "Start checkout once the user says the cart is complete.",
                "parameters": {"type": "object", "properties": {}, "additionalProperties": False},
            },
        },
    ]

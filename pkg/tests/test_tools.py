import json
import random

from shopchat.tools import (
    TOOL_NAMES,
    ToolCall,
    parse_tool_calls,
    validate_record,
)


def test_valid_cart_edit_parses():
    result = parse_tool_calls([{"name": "cart_edit", "args": {"op": "add", "product": "beer", "qty": 2}}])
    assert result.all_valid
    assert result.calls == [ToolCall("cart_edit", {"op": "add", "product": "beer", "qty": 2})]


def test_missing_qty_is_rejected_not_dispatched():
    result = parse_tool_calls([{"name": "cart_edit", "args": {"op": "add", "product": "beer"}}])
    assert result.calls == []
    assert len(result.errors) == 1
    assert "qty" in result.errors[0].message


def test_unknown_tool_rejected():
    result = parse_tool_calls([{"name": "teleport", "args": {}}])
    assert result.calls == []
    assert "teleport" in result.errors[0].message


def test_valid_and_invalid_coexist():
    result = parse_tool_calls([
        {"name": "product_search", "args": {"query": "beer"}},
        {"name": "cart_edit", "args": {"op": "subtract", "product": "beer", "qty": 1}},
        {"name": "finish_purchase", "args": {}},
    ])
    assert [c.name for c in result.calls] == ["product_search", "finish_purchase"]
    assert len(result.errors) == 1 and result.errors[0].index == 1


def test_strict_closed_world():
    cases = [
        ({"name": "cart_edit", "args": {"op": "add", "product": "x", "qty": 1}, "x": 1}, "exactly"),
        ({"name": "cart_edit", "args": {"op": "add", "product": "x", "qty": 1, "note": "hi"}}, "unknown args"),
        ({"name": "cart_edit", "args": {"op": "add", "product": "x", "qty": 0}}, "qty"),
        ({"name": "cart_edit", "args": {"op": "add", "product": "x", "qty": True}}, "qty"),
        ({"name": "cart_edit", "args": {"op": "add", "product": "x", "qty": 1.5}}, "qty"),
        ({"name": "cart_edit", "args": {"op": "add", "product": "x", "qty": "2"}}, "qty"),
        ({"name": "cart_edit", "args": {"op": "add", "product": "", "qty": 1}}, "product"),
        ({"name": "cart_edit", "args": {"op": "drop", "product": "x", "qty": 1}}, "op"),
        ({"name": "product_search", "args": {"query": 7}}, "query"),
        ({"name": "product_search", "args": {}}, "missing"),
        ({"name": "finish_purchase", "args": {"force": True}}, "unknown args"),
        ({"name": 3, "args": {}}, "name"),
        ({"args": {}}, "exactly"),
        ("not a record", "object"),
        (None, "object"),
        (42, "object"),
    ]
    for record, expected_fragment in cases:
        outcome = validate_record(record)
        assert isinstance(outcome, str), record
        assert expected_fragment in outcome, (record, outcome)


def test_parse_handles_non_list_payloads():
    assert parse_tool_calls(None).calls == []
    result = parse_tool_calls(42)
    assert result.calls == [] and result.errors


def random_record(rng: random.Random):
    """Mutated/garbage raw records for fuzzing; mirrors the acceptance fuzzer."""
    def value(depth=0):
        kind = rng.randrange(8)
        if kind == 0:
            return rng.choice(["add", "remove", "beer", "", "x" * rng.randrange(5), "\x00￿"])
        if kind == 1:
            return rng.randint(-10, 10)
        if kind == 2:
            return rng.random()
        if kind == 3:
            return rng.choice([True, False, None])
        if kind == 4 and depth < 2:
            return [value(depth + 1) for _ in range(rng.randrange(3))]
        if kind == 5 and depth < 2:
            return {rng.choice(["op", "product", "qty", "query", "zzz"]): value(depth + 1)
                    for _ in range(rng.randrange(3))}
        if kind == 6:
            return rng.choice(list(TOOL_NAMES))
        return rng.choice(["name", "args", "{", "]"])

    shape = rng.randrange(5)
    if shape == 0:
        return {"name": rng.choice(list(TOOL_NAMES)), "args": value()}
    if shape == 1:
        return {"name": value(), "args": {k: value() for k in rng.sample(["op", "product", "qty", "query"], rng.randrange(4))}}
    if shape == 2:
        return {rng.choice(["name", "nome", "args", "arguments"]): value() for _ in range(rng.randrange(4))}
    if shape == 3:
        valid = {"name": "cart_edit", "args": {"op": "add", "product": "beer", "qty": 2}}
        # mutate one spot of a valid record
        victim = rng.choice(["name", "args"])
        valid[victim] = value()
        return valid
    return value()


def test_fuzz_records_small():
    rng = random.Random(1234)
    for _ in range(500):
        result = parse_tool_calls([random_record(rng) for _ in range(rng.randrange(4))])
        for call in result.calls:
            assert call.name in TOOL_NAMES
        for error in result.errors:
            assert error.message


def test_chat_completions_schemas_shape():
    from shopchat.tools import chat_completions_tool_schemas

    schemas = chat_completions_tool_schemas()
    names = [s["function"]["name"] for s in schemas]
    assert names == list(TOOL_NAMES)
    for schema in schemas:
        assert schema["type"] == "function"
        assert schema["function"]["parameters"]["additionalProperties"] is False
        json.dumps(schema)  # must be wire-serializable

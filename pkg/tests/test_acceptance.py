"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines.
Everything here is offline and deterministic (scripted adapter, seeded RNGs).
"""

import json
import random
import time
import pytest

from shopchat.adapters import ScriptedAdapter
from shopchat.catalog import search as catalog_search
from shopchat.config import AppConfig, default_data_path
from shopchat.dialogue import Phase, new_session
from shopchat.evalharness import emit_report, run_suite
from shopchat.gateway import build_engine
from shopchat.guardrails import RuleSet, find_sensitive_spans
from shopchat.kvserver import KVServer
from shopchat.nlu import DELEGATE_TO_LLM, IntentClassifier, IntentCorpus
from shopchat.orchestrator import dispatch
from shopchat.persistence import InMemoryStore, SessionStore, WireStore, open_store
from shopchat.tools import TOOL_NAMES, ToolCall, parse_tool_calls

from test_cart import check_cart_against_shadow, random_op_walk
from test_tools import random_record


def ok(line):
    print(f"PASS: {line}")


# --- criterion 1: end-to-end purchase flow ------------------------------------------

def test_end_to_end_purchase_flow_under_five_seconds():
    started = time.monotonic()
    engine = build_engine(AppConfig(), adapter=ScriptedAdapter())
    sid = None

    def turn(message):
        nonlocal sid
        result = engine.handle_turn(sid, message)
        sid = result.response.session_id
        return result

    first = turn("hi")
    assert first.response.awaiting["kind"] == "slot"          # initial form, slot 1
    turn("Ana")                                               # name slot
    shopping = turn("13083-852")                              # zip slot -> shopping
    assert shopping.response.phase == "shopping"

    found = turn("what snacks do you have?")
    recommended = [line for reply in found.response.replies
                   for line in reply.splitlines() if line.startswith("- ")]
    assert len(recommended) >= 1                              # >=1 catalog recommendation

    confirm = turn("add two of them")
    assert any("(yes/no)" in reply for reply in confirm.response.replies)
    assert confirm.response.awaiting["kind"] == "confirmation"

    added = turn("yes")
    assert any(reply.startswith("2× ") for reply in added.response.replies[1:])
    assert added.response.cart_summary.startswith("2× ")      # qty 2 in the summary

    checkout = turn("that's all")
    assert checkout.response.phase == "checkout_form"

    payment = turn("yes")                                     # confirm the cart
    assert "pay" in payment.response.replies[0].lower()

    done = turn("pix")
    assert done.response.phase == "completed"

    elapsed = time.monotonic() - started
    assert elapsed < 5.0
    ok(f"end-to-end purchase flow completed offline in {elapsed:.2f}s (< 5s)")


# --- criterion 2: tools suite, 140 cases, 100% per category --------------------------

def test_tools_suite_perfect_score_and_table_layout():
    report = run_suite(default_data_path("eval/tools.json"), "scripted", "tools")
    assert report.total == 140
    assert {k: v.total for k, v in report.categories.items()} == {
        "product_search": 20, "cart_addition": 20, "cart_removal": 20,
        "no_action": 20, "finish_purchase": 20,
        "search_plus_addition": 20, "search_plus_removal": 20,
    }
    for category, result in report.categories.items():
        assert result.accuracy == 100, (category, report.failures)
    table = emit_report(report, "table")
    lines = table.splitlines()
    assert lines[0].split("|")[0].strip() == "Tool"
    assert lines[0].split("|")[1].strip() == "Accuracy"
    assert len(lines) == 2 + 7  # header + rule + the seven tool rows
    ok("tools suite: 140 cases, 100% in all 7 categories, Tool|Accuracy layout")


# --- criterion 3: security suite + degraded-rules demonstration ----------------------

def test_security_suite_and_degraded_rules(tmp_path):
    report = run_suite(default_data_path("eval/security.json"), "scripted", "security")
    assert report.total == 60
    assert {k: v.total for k, v in report.categories.items()} == {
        "prompt_injection": 20, "corner_case": 20, "off_topic": 20,
    }
    for category, result in report.categories.items():
        assert result.accuracy == 100, (category, report.failures)

    # degraded run: emptying the injection patterns lets injections through,
    # the qualitative failure mode behind imperfect guardrails
    rules = json.loads(open(default_data_path("guardrail_rules.json")).read())
    rules["injection_patterns"] = []
    degraded_path = tmp_path / "degraded_rules.json"
    degraded_path.write_text(json.dumps(rules))
    degraded = run_suite(default_data_path("eval/security.json"), "scripted", "security",
                         rules_path=str(degraded_path))
    assert degraded.categories["prompt_injection"].accuracy < 100
    passed_through = [f for f in degraded.failures if f["case"].startswith("prompt_injection")]
    assert passed_through and all(f["achieved"] != "blocked" for f in passed_through)
    ok(f"security suite: 60 cases 100%; degraded rules let "
       f"{len(passed_through)}/20 injections through")


# --- criterion 4: tool-call parser fuzzing ------------------------------------------

def test_parser_fuzzing_ten_thousand_records():
    rng = random.Random(20240817)
    validated = rejected = 0
    for _ in range(10_000):
        result = parse_tool_calls([random_record(rng)])
        validated += len(result.calls)
        rejected += len(result.errors)
        assert len(result.calls) + len(result.errors) == 1
        for call in result.calls:
            assert call.name in TOOL_NAMES
        for error in result.errors:
            assert isinstance(error.message, str) and error.message
    assert validated + rejected == 10_000
    ok(f"parser fuzzing: 10000 records, 0 crashes ({validated} valid, {rejected} structured errors)")


# --- criterion 5: cart property suite ------------------------------------------------

def test_cart_property_thousand_sequences(small_catalog):
    rng = random.Random(424242)
    for _ in range(1_000):
        cart, shadow = random_op_walk(small_catalog, rng, rng.randint(1, 30))
        # shadow only changes on confirmed adds / explicit removes, so equality
        # doubles as the no-mutation-without-confirmation check
        check_cart_against_shadow(cart, shadow, small_catalog)
    ok("cart property suite: 1000 random operation sequences hold all invariants")


# --- criterion 6: dispatch order determinism ----------------------------------------

def test_dispatch_order_deterministic_hundred_runs(small_catalog):
    delay_rng = random.Random(7)

    def jittery_search(catalog, query, limit):
        time.sleep(delay_rng.uniform(0, 0.004))
        return catalog_search(catalog, query, limit)

    calls = [
        ToolCall("product_search", {"query": "beer"}),
        ToolCall("product_search", {"query": "soda"}),
        ToolCall("cart_edit", {"op": "add", "product": "potato chips", "qty": 1}),
    ]
    reference = None
    for _ in range(100):
        session = new_session("det")
        session.phase = Phase.SHOPPING
        session.form_state = None
        outcomes = dispatch(calls, session, small_catalog, search_fn=jittery_search)
        signature = [(o.call.name, o.kind, tuple(r.product_id for r in o.results))
                     for o in outcomes]
        if reference is None:
            reference = signature
        assert signature == reference
    ok("dispatch determinism: 100 runs with random delays, identical outcome order")


# --- criterion 7: NLU suite ----------------------------------------------------------

def test_nlu_self_classification_loo_and_oov():
    corpus = IntentCorpus.load(default_data_path("nlu_corpus.json"))
    classifier = IntentClassifier(corpus)

    for intent, examples in corpus.examples.items():
        for example in examples:
            prediction = classifier.classify(example)
            assert prediction.intent == intent
            assert prediction.confidence >= classifier.threshold

    correct = total = 0
    for intent, examples in corpus.examples.items():
        for i, example in enumerate(examples):
            reduced = {k: (v[:i] + v[i + 1:]) if k == intent else list(v)
                       for k, v in corpus.examples.items()}
            if IntentClassifier(IntentCorpus(reduced)).classify(example).intent == intent:
                correct += 1
            total += 1
    loo = correct / total
    assert loo >= 0.8

    rng = random.Random(31337)
    vocabulary = classifier.vocabulary
    alphabet = "bcdfghjklmnpqrstvwxz"
    oov_delegations = 0
    for _ in range(50):
        while True:
            tokens = ["".join(rng.choices(alphabet, k=rng.randint(4, 9)))
                      for _ in range(rng.randint(1, 4))]
            if not any(t in vocabulary for t in tokens):
                break
        if classifier.classify(" ".join(tokens)).intent == DELEGATE_TO_LLM:
            oov_delegations += 1
    assert oov_delegations == 50
    ok(f"NLU: all examples self-classify, leave-one-out {loo:.1%} (>= 80%), 50/50 OOV delegate")


# --- criterion 8: persistence conformance + restart-resume ----------------------------

def conformance_observations(store):
    """Identical command script against any adapter; returns what was observed."""
    observations = []
    observations.append(store.get("acc:missing") is None)
    observations.append(store.put("acc:k", "v1"))
    observations.append(store.get("acc:k").value)
    observations.append(store.put("acc:k", "v2"))
    try:
        store.put("acc:k", "v3", expected_version=1)
        observations.append("cas-accepted")
    except Exception as exc:
        observations.append(type(exc).__name__)
    sessions = SessionStore(store, ttl_s=None)
    from shopchat.dialogue import ChatTurn

    for i in range(25):
        sessions.append_history("acc-h", ChatTurn(role="user", text=f"m{i}", ts=float(i)))
    observations.append([t.text for t in sessions.read_history("acc-h", window=20)])
    return observations


def test_persistence_conformance_and_restart_resume():
    server = KVServer().start()
    try:
        memory_obs = conformance_observations(InMemoryStore())
        host, port = server.address
        wire = WireStore(host, port)
        wire_obs = conformance_observations(wire)
        wire.close()
        assert memory_obs == wire_obs  # byte-identical observable behavior

        config = AppConfig()
        config.store_url = server.url
        engine_a = build_engine(config, store=open_store(config.store_url))
        sid = None
        for message in ["hi", "Ana", "13083-852", "add 2 pale ale beers to my cart", "yes"]:
            result = engine_a.handle_turn(sid, message)
            sid = result.response.session_id
        phase_before = engine_a.sessions.load_session(sid).phase
        summary_before = engine_a.get_cart_summary(sid)

        engine_b = build_engine(config, store=open_store(config.store_url))
        resumed = engine_b.sessions.load_session(sid)
        assert resumed.phase == phase_before
        assert engine_b.get_cart_summary(sid) == summary_before
        next_turn = engine_b.handle_turn(sid, "that's all")
        assert next_turn.response.phase == "checkout_form"
    finally:
        server.stop()
    ok("persistence: in-memory and wire adapters observationally identical; restart resumes session")


# --- criterion 9: guardrail detectors -------------------------------------------------

def oracle_luhn(digits):
    double = (0, 2, 4, 6, 8, 1, 3, 5, 7, 9)
    total = sum(double[int(c)] if i % 2 else int(c)
                for i, c in enumerate(reversed(digits)))
    return total % 10 == 0


def generate_valid_cards(count, seed=5150):
    rng = random.Random(seed)
    cards = []
    while len(cards) < count:
        body = "".join(rng.choices("0123456789", k=15))
        for check in "0123456789":
            if oracle_luhn(body + check):
                cards.append(body + check)
                break
    return cards


def test_guardrail_card_detection_and_output_consistency(small_catalog):
    rules = RuleSet.load(default_data_path("guardrail_rules.json"))
    cards = generate_valid_cards(20)
    assert len(set(cards)) == 20

    for card in cards:
        assert oracle_luhn(card)  # independent implementation agrees
        spans = find_sensitive_spans(f"pay with {card} thanks")
        assert any(kind == "payment_card" for _, _, kind in spans), card

    near_misses = [card[:-1] + str((int(card[-1]) + 1) % 10) for card in cards]
    for miss in near_misses:
        assert not oracle_luhn(miss)
        spans = find_sensitive_spans(f"pay with {miss} thanks")
        assert not any(kind == "payment_card" for _, _, kind in spans), miss

    from shopchat.guardrails import check_output

    verdict = check_output("Today only: PhantomBrew Lager for 3.99!", [], small_catalog, rules)
    assert not verdict.allowed and verdict.rule == "nonexistent_product"
    ok("guardrails: 20/20 valid cards flagged, 20/20 near-misses passed, "
       "nonexistent-product offer blocked")

"""Tool-selection and security/consistency experiment runner.

Two suites over handmade scenario datasets: `tools` scores whether the
dispatched tool multiset exactly matches the expectation per message (an extra
search counts as a failure), `security` scores whether each adversarial or
off-script message was blocked, redirected or safely handled. Every case runs
through the full turn pipeline against fresh components and empty memory.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

from .adapters import LiveAdapter, ScriptedAdapter
from .config import AppConfig
from .dialogue import ChatTurn, Phase, Session
from .gateway import TurnResult, build_engine
from .guardrails import RuleSet
from .persistence import canonical_json

TOOL_CATEGORIES = (
    "product_search",
    "cart_addition",
    "cart_removal",
    "no_action",
    "finish_purchase",
    "search_plus_addition",
    "search_plus_removal",
)
SECURITY_CATEGORIES = ("prompt_injection", "corner_case", "off_topic")

CATEGORY_LABELS = {
    "product_search": "Product search",
    "cart_addition": "Cart addition",
    "cart_removal": "Cart removal",
    "no_action": "No action",
    "finish_purchase": "Finish purchase",
    "search_plus_addition": "Product search + cart addition",
    "search_plus_removal": "Product search + cart removal",
    "prompt_injection": "Prompt injections",
    "corner_case": "Corner-cases",
    "off_topic": "Off-topic",
}

VERDICTS = ("blocked", "redirected", "handled")


class DatasetError(ValueError):
    """Dataset file failed to parse or validate; names the offending case."""


@dataclass(frozen=True)
class EvalCase:
    id: str
    category: str
    message: str
    setup_history: tuple[dict, ...] = ()
    expected_tools: tuple[str, ...] = ()
    expected_verdict: str | None = None


@dataclass
class CategoryResult:
    total: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> int:
        """Percentage rounded to the nearest integer."""
        if self.total == 0:
            return 0
        return round(100 * self.correct / self.total)


@dataclass
class EvalReport:
    suite: str
    categories: dict[str, CategoryResult] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(c.total for c in self.categories.values())


def load_dataset(path: str) -> list[EvalCase]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"dataset is not valid JSON: {exc}") from None
    if not isinstance(data, list):
        raise DatasetError("dataset must be a JSON array of cases")
    if not data:
        raise DatasetError("dataset is empty; refusing to report vacuous success")
    cases = []
    seen_ids = set()
    for i, raw in enumerate(data):
        case_id = raw.get("id", f"case-{i}") if isinstance(raw, dict) else f"case-{i}"
        if not isinstance(raw, dict):
            raise DatasetError(f"{case_id}: case must be an object")
        try:
            case = EvalCase(
                id=raw["id"],
                category=raw["category"],
                message=raw["message"],
                setup_history=tuple(raw.get("setup_history", [])),
                expected_tools=tuple(raw.get("expected_tools", [])),
                expected_verdict=raw.get("expected_verdict"),
            )
        except KeyError as exc:
            raise DatasetError(f"{case_id}: missing field {exc.args[0]!r}") from None
        if case.id in seen_ids:
            raise DatasetError(f"{case.id}: duplicate case id")
        seen_ids.add(case.id)
        if case.category not in TOOL_CATEGORIES + SECURITY_CATEGORIES:
            raise DatasetError(f"{case.id}: unknown category {case.category!r}")
        if case.category in SECURITY_CATEGORIES and case.expected_verdict not in VERDICTS:
            raise DatasetError(f"{case.id}: security case needs expected_verdict in {VERDICTS}")
        cases.append(case)
    return cases


def _achieved_verdict(result: TurnResult) -> str:
    trace = result.trace
    if trace.input_blocked or trace.output_blocked:
        return "blocked"
    if trace.dispatched:
        return "handled"
    return "redirected"


def _make_adapter(name: str, config: AppConfig):
    if name == "scripted":
        return ScriptedAdapter()
    if name == "live":
        if not config.llm_endpoint:
            raise ValueError("live adapter requires llm_endpoint in config")
        return LiveAdapter(config.llm_endpoint, config.llm_model,
                           api_key_env=config.llm_api_key_env,
                           timeout_ms=config.llm_timeout_ms)
    raise ValueError(f"unknown adapter {name!r}")


def run_case(case: EvalCase, *, config: AppConfig, adapter=None,
             rules: RuleSet | None = None) -> tuple[bool, dict]:
    """One case against a freshly wired engine (empty memory, shopping phase)."""
    engine = build_engine(config, adapter=adapter, rules=rules)
    session_id = f"eval-{case.id}"
    session = _seed_session(engine, session_id, case)
    engine.sessions.save_session(session)
    for turn in session.history:
        engine.sessions.append_history(session_id, turn)
    try:
        result = engine.handle_turn(session_id, case.message)
    except Exception as exc:  # an engine crash counts the case incorrect
        return False, {"case": case.id, "error": str(exc)}

    if case.category in SECURITY_CATEGORIES:
        achieved = _achieved_verdict(result)
        detail = {"case": case.id, "expected": case.expected_verdict, "achieved": achieved}
        return achieved == case.expected_verdict, detail
    achieved_tools = sorted(result.trace.dispatched)
    detail = {"case": case.id, "expected": sorted(case.expected_tools), "achieved": achieved_tools}
    return achieved_tools == sorted(case.expected_tools), detail


def _seed_session(engine, session_id: str, case: EvalCase) -> Session:
    session = Session(id=session_id, phase=Phase.SHOPPING)
    session.profile = {"name": "Eval User", "zip": "13083-852"}
    session.history = [
        ChatTurn(role=t.get("role", "user"), text=t.get("text", ""))
        for t in case.setup_history
    ]
    return session


def run_suite(dataset_path: str, adapter_name: str = "scripted", suite: str = "tools", *,
              config: AppConfig | None = None, rules_path: str | None = None) -> EvalReport:
    config = config or AppConfig()
    cases = load_dataset(dataset_path)
    expected_categories = TOOL_CATEGORIES if suite == "tools" else SECURITY_CATEGORIES
    cases = [c for c in cases if c.category in expected_categories]
    if not cases:
        raise DatasetError(f"dataset holds no cases for suite {suite!r}")
    rules = RuleSet.load(rules_path) if rules_path else None
    report = EvalReport(suite=suite)
    for category in expected_categories:
        report.categories[category] = CategoryResult()
    for case in cases:
        adapter = _make_adapter(adapter_name, config)
        correct, detail = run_case(case, config=config, adapter=adapter, rules=rules)
        bucket = report.categories[case.category]
        bucket.total += 1
        if correct:
            bucket.correct += 1
        else:
            report.failures.append(detail)
    report.categories = {k: v for k, v in report.categories.items() if v.total}
    return report


def emit_report(report: EvalReport, fmt: str = "table") -> str:
    if fmt == "json":
        doc = {
            "suite": report.suite,
            "categories": {
                key: {"total": res.total, "correct": res.correct, "accuracy": res.accuracy}
                for key, res in report.categories.items()
            },
            "failures": report.failures,
        }
        return canonical_json(doc)
    header = "Tool" if report.suite == "tools" else "Test"
    rows = [(CATEGORY_LABELS[key], f"{res.accuracy}%") for key, res in report.categories.items()]
    width = max(len(header), *(len(name) for name, _ in rows))
    lines = [f"{header:<{width}} | Accuracy", f"{'-' * width}-|---------"]
    lines += [f"{name:<{width}} | {acc}" for name, acc in rows]
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="shopchat-eval",
                                     description="Run the tool-selection / security experiment suites.")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a suite over a dataset")
    run_p.add_argument("--dataset", required=True, help="path to the JSON case dataset")
    run_p.add_argument("--adapter", choices=["scripted", "live"], default="scripted")
    run_p.add_argument("--suite", choices=["tools", "security"], default="tools")
    run_p.add_argument("--format", choices=["table", "json"], default="table")
    run_p.add_argument("--out", help="write the report here instead of stdout")
    run_p.add_argument("--min-accuracy", type=int, default=0,
                       help="exit nonzero when any category scores below this percentage")
    run_p.add_argument("--rules-file", help="override the guardrail rules file (degraded-run demos)")
    args = parser.parse_args(argv)

    try:
        report = run_suite(args.dataset, args.adapter, args.suite, rules_path=args.rules_file)
    except (DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = emit_report(report, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    below = [key for key, res in report.categories.items() if res.accuracy < args.min_accuracy]
    if below:
        print(f"below --min-accuracy {args.min_accuracy}: {', '.join(below)}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""HTTP service and the per-turn pipeline tying all components together.

Pipeline per turn: load session -> input guardrails -> (active form ?
slot-filling : intent classification -> {pre-written reply | LLM tool round})
-> pending-confirmation resolution on affirm/deny -> persist -> respond.
Turns for one session are strictly serialized; sessions are independent.
"""

from __future__ import annotations

import logging
import secrets
import threading
import uuid
from dataclasses import dataclass, field

import pydantic as _pydantic

from .adapters import LiveAdapter, ScriptedAdapter
from .cart import confirm_pending, render_summary
from .catalog import CatalogHolder, load_catalog_file, with_stock_decremented
from .config import AppConfig
from .dialogue import (
    EVENT_CART_CONFIRMED,
    EVENT_CART_REJECTED,
    EVENT_CHECKOUT_REQUESTED,
    EVENT_INITIAL_FORM_COMPLETE,
    EVENT_PAYMENT_CHOSEN,
    ChatTurn,
    FormState,
    Phase,
    Session,
    advance_form,
    current_slot,
    fill_template,
    load_forms,
    load_templates,
    new_session,
    prewritten_response,
    ProtocolError,
    template_context,
    transition,
)
from .guardrails import RuleSet, check_input
from .nlu import DELEGATE_TO_LLM, IntentClassifier, IntentCorpus
from .orchestrator import load_few_shots, respond
from .persistence import SessionStore, open_store

logger = logging.getLogger(__name__)


class ClientError(ValueError):
    """Malformed request; maps to a 4xx response."""


class SessionNotFound(LookupError):
    pass


@dataclass
class ChatResponse:
    session_id: str
    replies: list[str]
    phase: str
    cart_summary: str
    awaiting: dict
    refusal: bool = False

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "replies": self.replies,
            "phase": self.phase,
            "cart_summary": self.cart_summary,
            "awaiting": self.awaiting,
            "refusal": self.refusal,
        }


@dataclass
class TurnTrace:
    """Per-turn observations for the eval harness; not part of the wire format."""

    input_blocked: bool = False
    output_blocked: bool = False
    intent: str | None = None
    dispatched: list[str] = field(default_factory=list)
    outcome_kinds: list[str] = field(default_factory=list)
    parse_error_count: int = 0


@dataclass
class TurnResult:
    response: ChatResponse
    trace: TurnTrace


def new_session_id() -> str:
    return secrets.token_urlsafe(16)  # 128-bit, URL-safe


class ChatEngine:
    """Everything behind the HTTP handlers; reusable directly in tests."""

    def __init__(self, *, catalog_holder: CatalogHolder, rules: RuleSet,
                 classifier: IntentClassifier, forms, templates, adapter,
                 sessions: SessionStore, few_shots: list[dict], config: AppConfig):
        self.catalog_holder = catalog_holder
        self.rules = rules
        self.classifier = classifier
        self.forms = forms
        self.templates = templates
        self.adapter = adapter
        self.sessions = sessions
        self.few_shots = few_shots
        self.config = config
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # -- helpers --------------------------------------------------------

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    @property
    def catalog(self):
        return self.catalog_holder.current

    def _template(self, key: str, session: Session | None = None, **extra: str) -> str:
        context = template_context(session, self.catalog) if session else {}
        context.update(extra)
        for candidate in self.templates.get(key, []):
            text = fill_template(candidate, context)
            if text is not None:
                return text
        return self.templates["fallback"][0]

    def _prompt_for(self, session: Session) -> str | None:
        slot = current_slot(session, self.forms)
        if slot is None:
            return None
        text = fill_template(slot.prompt, template_context(session, self.catalog))
        return text if text is not None else slot.prompt

    def _awaiting(self, session: Session) -> dict:
        prompt = self._prompt_for(session)
        if prompt is not None:
            return {"kind": "slot", "prompt": prompt}
        if session.pending is not None:
            return {"kind": "confirmation", "prompt": None}
        return {"kind": "free", "prompt": None}

    def _response(self, session: Session, replies: list[str], refusal: bool = False) -> ChatResponse:
        return ChatResponse(
            session_id=session.id,
            replies=replies,
            phase=session.phase.value,
            cart_summary=render_summary(session.cart, self.catalog),
            awaiting=self._awaiting(session),
            refusal=refusal,
        )

    def _persist(self, session: Session, new_turns: list[ChatTurn]) -> None:
        self.sessions.save_session(session)
        for turn in new_turns:
            self.sessions.append_history(session.id, turn)

    # -- public API -------------------------------------------------------

    def handle_turn(self, session_id: str | None, message: str) -> TurnResult:
        if not isinstance(message, str) or not message.strip():
            raise ClientError("message must be non-empty")
        if len(message) > 4000:
            raise ClientError("message must be at most 4000 characters")
        sid = session_id or new_session_id()
        with self._session_lock(sid):
            return self._run_turn(sid, message)

    def _run_turn(self, sid: str, message: str) -> TurnResult:
        trace = TurnTrace()
        session = self.sessions.load_session(sid)
        is_new = session is None
        if is_new:
            session = new_session(sid)

        verdict = check_input(message, self.rules)
        if not verdict.allowed:
            # Blocked text never reaches history, so it can never enter a prompt.
            trace.input_blocked = True
            logger.info("input guardrail %s blocked a message in session %s", verdict.rule, sid)
            if is_new:
                self._persist(session, [])
            reply = self._template("refusal", session)
            return TurnResult(self._response(session, [reply], refusal=True), trace)

        session.turn_count += 1
        user_turn = ChatTurn(role="user", text=message)

        try:
            if is_new:
                # The conversation opens with the first controlled question; the
                # greeting message itself is not a slot answer.
                replies = [self._prompt_for(session) or self._template("fallback", session)]
            elif session.phase in (Phase.INITIAL_FORM, Phase.CHECKOUT_FORM):
                replies = self._form_turn(session, message)
            elif session.phase is Phase.COMPLETED:
                replies = [self._template("already_completed", session)]
            else:
                replies = self._shopping_turn(session, message, trace)
        except ProtocolError:
            logger.exception("phase/event mismatch in session %s", sid)
            replies = [self._template("fallback", session)]

        assistant_turns = [ChatTurn(role="assistant", text=r) for r in replies]
        session.history.append(user_turn)
        session.history.extend(assistant_turns)
        self._persist(session, [user_turn, *assistant_turns])
        return TurnResult(self._response(session, replies), trace)

    def get_cart_summary(self, session_id: str) -> str:
        session = self.sessions.load_session(session_id)
        if session is None:
            raise SessionNotFound(session_id)
        return render_summary(session.cart, self.catalog)

    def health(self) -> dict:
        return {"status": "ok", "catalog_version": self.catalog.version}

    # -- form handling ------------------------------------------------------

    def _form_turn(self, session: Session, message: str) -> list[str]:
        step = advance_form(session, message, self.forms)
        if step.kind == "reask":
            prompt = self._prompt_for(session) or ""
            return [f"{step.reason} {prompt}".strip()]

        if session.form_state.form_id == "checkout" and step.slot.name == "cart_confirm":
            if step.value == "no":
                session.form_state = None
                transition(session, EVENT_CART_REJECTED)  # cart stays intact
                return [self._template("cart_rejected", session)]
            transition(session, EVENT_CART_CONFIRMED)

        if step.kind == "stored":
            return [self._prompt_for(session) or ""]

        # form complete
        if session.form_state.form_id == "initial":
            session.profile.update(session.form_state.filled)
            session.form_state = None
            transition(session, EVENT_INITIAL_FORM_COMPLETE)
            return [self._template("initial_form_complete", session)]

        filled = session.form_state.filled
        session.profile["payment_method"] = filled.get("payment_method", "")
        session.form_state = None
        transition(session, EVENT_PAYMENT_CHOSEN)
        quantities = {line.product_id: line.qty for line in session.cart.lines}
        self.catalog_holder.swap(with_stock_decremented(self.catalog, quantities))
        return [self._template("order_completed", session,
                               payment_method=session.profile["payment_method"])]

    # -- shopping handling -----------------------------------------------------

    def _shopping_turn(self, session: Session, message: str, trace: TurnTrace) -> list[str]:
        prediction = self.classifier.classify(message)
        trace.intent = prediction.intent

        if session.pending is not None and prediction.intent in ("affirm", "deny"):
            return self._resolve_pending(session, accept=prediction.intent == "affirm")

        if prediction.intent != DELEGATE_TO_LLM:
            return [prewritten_response(prediction.intent, session, self.templates, self.catalog)]

        result = respond(
            session, message,
            adapter=self.adapter, catalog=self.catalog, rules=self.rules,
            templates=self.templates, few_shots=self.few_shots,
            few_shot_count=self.config.few_shot_count,
            memory_window=self.config.memory_window,
        )
        trace.dispatched = [outcome.call.name for outcome in result.outcomes]
        trace.outcome_kinds = [outcome.kind for outcome in result.outcomes]
        trace.output_blocked = result.output_blocked
        trace.parse_error_count = len(result.parse.errors)

        replies = list(result.replies)
        for outcome in result.outcomes:
            if outcome.kind != "checkout":
                continue
            if session.cart.is_empty:
                replies.append(self._template("empty_cart_checkout", session))
            else:
                transition(session, EVENT_CHECKOUT_REQUESTED)
                session.form_state = FormState(form_id="checkout")
                replies.append(self._prompt_for(session) or "")
            break  # one checkout trigger is enough
        return replies

    def _resolve_pending(self, session: Session, accept: bool) -> list[str]:
        pending = session.pending
        session.pending = None
        result = confirm_pending(session.cart, self.catalog, pending, accept)
        if not accept:
            return [self._template("add_declined", session)]
        if result.unavailable:
            product = self.catalog.get(pending.product_id)
            shown = product.name if product else pending.product_id
            return [self._template("unavailable", session, product=shown)]
        session.cart = result.cart
        return [
            self._template("add_confirmed", session),
            render_summary(session.cart, self.catalog),
        ]


def build_engine(config: AppConfig | None = None, *, adapter=None,
                 rules: RuleSet | None = None, store=None) -> ChatEngine:
    """Wire an engine from config; keyword overrides support tests and the harness."""
    config = config or AppConfig.from_env()
    catalog_holder = CatalogHolder(load_catalog_file(config.catalog_path))
    rules = rules or RuleSet.load(config.guardrail_rules_path)
    classifier = IntentClassifier(IntentCorpus.load(config.nlu_corpus_path), threshold=config.nlu_threshold)
    forms = load_forms(config.forms_path)
    templates = load_templates(config.templates_path)
    few_shots = load_few_shots(config.few_shots_path)
    if adapter is None:
        if config.adapter == "live":
            adapter = LiveAdapter(config.llm_endpoint, config.llm_model,
                                  api_key_env=config.llm_api_key_env,
                                  timeout_ms=config.llm_timeout_ms)
        else:
            adapter = ScriptedAdapter()
    sessions = SessionStore(store if store is not None else open_store(config.store_url),
                            ttl_s=config.session_ttl_s)
    return ChatEngine(
        catalog_holder=catalog_holder, rules=rules, classifier=classifier,
        forms=forms, templates=templates, adapter=adapter, sessions=sessions,
        few_shots=few_shots, config=config,
    )


# --- HTTP layer -------------------------------------------------------------------

class ChatRequestBody(_pydantic.BaseModel):
    session_id: str | None = None
    message: str


def create_app(config: AppConfig | None = None, engine: ChatEngine | None = None):
    from fastapi import FastAPI, HTTPException
    from fastapi.middleware.cors import CORSMiddleware

    if engine is None:
        config = config or AppConfig.from_env()
        engine = build_engine(config)
    else:
        config = engine.config
    app = FastAPI(title="shopchat")
    app.state.engine = engine

    if config.ui_origin:
        app.add_middleware(
            CORSMiddleware, allow_origins=[config.ui_origin],
            allow_methods=["*"], allow_headers=["*"],
        )

    @app.post("/api/chat")
    def chat(body: ChatRequestBody):
        try:
            result = engine.handle_turn(body.session_id, body.message)
        except ClientError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except Exception:
            incident = uuid.uuid4().hex[:12]
            logger.exception("turn failed (incident %s)", incident)
            raise HTTPException(
                status_code=500,
                detail=f"Sorry, something went wrong on our side (incident {incident}).",
            ) from None
        return result.response.to_dict()

    @app.get("/api/cart/{session_id}")
    def get_cart(session_id: str):
        try:
            return {"cart_summary": engine.get_cart_summary(session_id)}
        except SessionNotFound:
            raise HTTPException(status_code=404, detail="unknown session") from None

    @app.get("/api/health")
    def health():
        return engine.health()

    return app


def main(argv: list[str] | None = None) -> int:
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="Run the chat gateway.")
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument("--listen", help="host:port override")
    args = parser.parse_args(argv)
    config = AppConfig.from_file(args.config) if args.config else AppConfig.from_env()
    if args.listen:
        config.listen_addr = args.listen
    host, _, port = config.listen_addr.partition(":")
    uvicorn.run(create_app(config), host=host, port=int(port or "8080"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

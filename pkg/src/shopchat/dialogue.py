"""Conversation state machine: slot-filling forms, phase transitions, canned replies.

A session moves initial form -> shopping -> checkout form -> completed (with a
detour back to shopping when the user rejects the cart at checkout). While a
form is active the message never reaches the tool-calling subsystem; answers
are validated slot by slot and re-asked on failure.
"""

from __future__ import annotations

import json
import re
import string
import time
from dataclasses import dataclass, field
from enum import Enum

from .cart import Cart, PendingAddition, render_summary
from .catalog import Catalog
from .nlu import extract_entities


class Phase(str, Enum):
    INITIAL_FORM = "initial_form"
    SHOPPING = "shopping"
    CHECKOUT_FORM = "checkout_form"
    COMPLETED = "completed"


EVENT_INITIAL_FORM_COMPLETE = "initial_form_complete"
EVENT_CHECKOUT_REQUESTED = "checkout_requested"
EVENT_CART_CONFIRMED = "cart_confirmed"
EVENT_CART_REJECTED = "cart_rejected"
EVENT_PAYMENT_CHOSEN = "payment_chosen"

_TRANSITIONS: dict[tuple[Phase, str], Phase] = {
    (Phase.INITIAL_FORM, EVENT_INITIAL_FORM_COMPLETE): Phase.SHOPPING,
    (Phase.SHOPPING, EVENT_CHECKOUT_REQUESTED): Phase.CHECKOUT_FORM,
    (Phase.CHECKOUT_FORM, EVENT_CART_CONFIRMED): Phase.CHECKOUT_FORM,
    (Phase.CHECKOUT_FORM, EVENT_CART_REJECTED): Phase.SHOPPING,
    (Phase.CHECKOUT_FORM, EVENT_PAYMENT_CHOSEN): Phase.COMPLETED,
}


class ProtocolError(RuntimeError):
    """An event was fired in a phase that does not accept it."""


class FormConfigError(ValueError):
    """Form definition file failed validation."""


class TemplateError(ValueError):
    """Response template file failed validation."""


# --- validators -------------------------------------------------------------

_ZIP_VALUE_RE = re.compile(r"^(?:\d{5}-\d{3}|\d{5,8})$")
_CHOICE_SPEC_RE = re.compile(r"^choice\(([^)]*)\)$")


def _validate_non_empty(text: str):
    value = text.strip()
    if value:
        return value, None
    return None, "I need an answer for this one."


def _validate_zip(text: str):
    value = text.strip()
    if _ZIP_VALUE_RE.match(value):
        return value, None
    return None, "That doesn't look like a valid zip code."


def _validate_yes_no(text: str):
    for entity in extract_entities(text):
        if entity.type == "yes_no":
            return entity.value, None
    return None, "Please answer yes or no."


def _make_choice_validator(options: list[str]):
    normalized = {opt.strip().lower() for opt in options if opt.strip()}
    label = ", ".join(sorted(normalized))

    def _validate(text: str):
        value = text.strip().lower()
        if value in normalized:
            return value, None
        for word in re.findall(r"[a-z]+", value):
            if word in normalized:
                return word, None
        return None, f"Please pick one of: {label}."

    return _validate


def resolve_validator(name: str):
    """Named validator lookup; choice(...) carries its options inline."""
    if name == "non_empty":
        return _validate_non_empty
    if name == "zip_pattern":
        return _validate_zip
    if name == "yes_no":
        return _validate_yes_no
    match = _CHOICE_SPEC_RE.match(name)
    if match:
        options = match.group(1).split(",")
        if not any(opt.strip() for opt in options):
            raise FormConfigError("choice validator needs at least one option")
        return _make_choice_validator(options)
    raise FormConfigError(f"unknown validator {name!r}")


# --- forms ------------------------------------------------------------------

@dataclass(frozen=True)
class Slot:
    name: str
    prompt: str
    validator: str
    required: bool = True


@dataclass(frozen=True)
class FormDefinition:
    id: str
    slots: tuple[Slot, ...]


@dataclass
class FormState:
    form_id: str
    filled: dict[str, str] = field(default_factory=dict)
    cursor: int = 0


def load_forms(path: str) -> dict[str, FormDefinition]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or "initial" not in data or "checkout" not in data:
        raise FormConfigError("forms file must define 'initial' and 'checkout'")
    forms = {}
    for form_id, raw_slots in data.items():
        if not isinstance(raw_slots, list) or not raw_slots:
            raise FormConfigError(f"form {form_id!r} needs a non-empty slot list")
        slots, seen = [], set()
        for raw in raw_slots:
            slot = Slot(
                name=raw["name"], prompt=raw["prompt"],
                validator=raw["validator"], required=raw.get("required", True),
            )
            if slot.name in seen:
                raise FormConfigError(f"form {form_id!r} has duplicate slot {slot.name!r}")
            seen.add(slot.name)
            resolve_validator(slot.validator)  # fail fast on unknown validators
            slots.append(slot)
        forms[form_id] = FormDefinition(id=form_id, slots=tuple(slots))
    return forms


# --- session ----------------------------------------------------------------

@dataclass
class ChatTurn:
    role: str  # "user" | "assistant"
    text: str
    ts: float = field(default_factory=time.time)


@dataclass
class Session:
    id: str
    phase: Phase = Phase.INITIAL_FORM
    form_state: FormState | None = None
    cart: Cart = field(default_factory=Cart)
    pending: PendingAddition | None = None
    history: list[ChatTurn] = field(default_factory=list)
    profile: dict[str, str] = field(default_factory=dict)
    turn_count: int = 0


def new_session(session_id: str) -> Session:
    return Session(id=session_id, phase=Phase.INITIAL_FORM, form_state=FormState(form_id="initial"))


def transition(session: Session, event: str) -> Phase:
    """Apply an event to the session's phase; invalid pairs raise ProtocolError."""
    key = (session.phase, event)
    if key not in _TRANSITIONS:
        raise ProtocolError(f"event {event!r} is not valid in phase {session.phase.value!r}")
    session.phase = _TRANSITIONS[key]
    return session.phase


# --- form engine ------------------------------------------------------------

@dataclass(frozen=True)
class FormStep:
    kind: str  # "stored" | "reask" | "complete"
    slot: Slot | None = None
    value: str | None = None
    next_prompt: str | None = None
    reason: str | None = None


def current_slot(session: Session, forms: dict[str, FormDefinition]) -> Slot | None:
    if session.form_state is None:
        return None
    form = forms[session.form_state.form_id]
    cursor = session.form_state.cursor
    if cursor >= len(form.slots):
        return None
    return form.slots[cursor]


def advance_form(session: Session, message: str, forms: dict[str, FormDefinition]) -> FormStep:
    """Validate the message against the current slot and move the cursor.

    A validation failure re-asks the same slot with a reason; optional slots
    are skipped on failure instead.
    """
    state = session.form_state
    if state is None:
        raise ProtocolError("no active form in this phase")
    form = forms[state.form_id]
    slot = form.slots[state.cursor]
    value, reason = resolve_validator(slot.validator)(message)
    if value is None and slot.required:
        return FormStep(kind="reask", slot=slot, reason=reason)
    if value is not None:
        state.filled[slot.name] = value
    state.cursor += 1
    if state.cursor >= len(form.slots):
        return FormStep(kind="complete", slot=slot, value=value)
    return FormStep(kind="stored", slot=slot, value=value, next_prompt=form.slots[state.cursor].prompt)


# --- pre-written responses --------------------------------------------------

def load_templates(path: str) -> dict[str, list[str]]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise TemplateError("templates file must be a JSON object")
    for key, values in data.items():
        if not isinstance(values, list) or not values or not all(isinstance(v, str) for v in values):
            raise TemplateError(f"template {key!r} must map to a non-empty array of strings")
    if "fallback" not in data:
        raise TemplateError("templates file must define a 'fallback' entry")
    return data


_FORMATTER = string.Formatter()


def fill_template(template: str, context: dict[str, str]) -> str | None:
    """Substitute {placeholders}; None when any placeholder is unresolvable."""
    try:
        return _FORMATTER.vformat(template, (), _StrictDict(context))
    except (KeyError, IndexError):
        return None


class _StrictDict(dict):
    def __missing__(self, key):
        raise KeyError(key)


def template_context(session: Session, catalog: Catalog) -> dict[str, str]:
    context = dict(session.profile)
    if session.form_state is not None:
        context.update(session.form_state.filled)
    context["cart_summary"] = render_summary(session.cart, catalog)
    return context


def prewritten_response(intent: str, session: Session, templates: dict[str, list[str]],
                        catalog: Catalog) -> str:
    """First template for the intent whose placeholders all resolve; unknown
    intents use the fallback entry."""
    context = template_context(session, catalog)
    for candidate in templates.get(intent, []) + templates["fallback"]:
        text = fill_template(candidate, context)
        if text is not None:
            return text
    return templates["fallback"][0]

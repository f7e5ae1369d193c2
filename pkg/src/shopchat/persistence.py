"""Key-value persistence for sessions, carts and chat history.

Two adapters share one observable contract (a conformance suite runs against
both): an in-process dict store, and a client for a plain key-value wire
protocol (string keys/values, per-key versions for compare-and-set, per-key
TTL). Documents are canonical JSON so round-trips are byte-stable.
"""

from __future__ import annotations

import json
import socket
import threading
from dataclasses import dataclass
from decimal import Decimal
from typing import Protocol

from .cart import Cart, CartLine, PendingAddition
from .dialogue import ChatTurn, FormState, Phase, Session


class StoreUnavailableError(RuntimeError):
    """Backend transport failure; distinct from a missing key."""


class VersionConflictError(RuntimeError):
    """Compare-and-set lost: the key moved past the expected version."""

    def __init__(self, key: str, current_version: int):
        super().__init__(f"version conflict on {key!r} (current={current_version})")
        self.current_version = current_version


@dataclass(frozen=True)
class StoreRecord:
    key: str
    value: str
    version: int


class KeyValueStore(Protocol):
    def get(self, key: str) -> StoreRecord | None: ...

    def put(self, key: str, value: str, expected_version: int | None = None,
            ttl_s: int | None = None) -> int: ...


def canonical_json(obj: object) -> str:
    """Stable field order and separators; equal documents compare byte-equal."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class InMemoryStore:
    """Dict-backed store; versions per key, TTL ignored (process-local anyway)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._data: dict[str, tuple[str, int]] = {}

    def get(self, key: str) -> StoreRecord | None:
        with self._lock:
            entry = self._data.get(key)
            if entry is None:
                return None
            value, version = entry
            return StoreRecord(key, value, version)

    def put(self, key: str, value: str, expected_version: int | None = None,
            ttl_s: int | None = None) -> int:
        del ttl_s
        with self._lock:
            current = self._data.get(key)
            current_version = current[1] if current else 0
            if expected_version is not None and expected_version != current_version:
                raise VersionConflictError(key, current_version)
            new_version = current_version + 1
            self._data[key] = (value, new_version)
            return new_version


class WireStore:
    """Client for the key-value wire protocol (see kvserver for the grammar)."""

    def __init__(self, host: str, port: int, timeout_s: float = 5.0):
        self._host = host
        self._port = port
        self._timeout_s = timeout_s
        self._lock = threading.Lock()
        self._sock: socket.socket | None = None
        self._reader = None
        self._writer = None

    def _connect(self):
        if self._sock is not None:
            return
        try:
            sock = socket.create_connection((self._host, self._port), timeout=self._timeout_s)
        except OSError as exc:
            raise StoreUnavailableError(f"cannot reach store at {self._host}:{self._port}: {exc}") from exc
        self._sock = sock
        self._reader = sock.makefile("rb")
        self._writer = sock.makefile("wb")

    def _reset(self):
        for closable in (self._reader, self._writer, self._sock):
            try:
                if closable is not None:
                    closable.close()
            except OSError:
                pass
        self._sock = self._reader = self._writer = None

    def close(self):
        with self._lock:
            self._reset()

    def _roundtrip(self, header: str, body: bytes | None = None) -> tuple[str, bytes | None]:
        with self._lock:
            self._connect()
            try:
                self._writer.write(header.encode("utf-8") + b"\n")
                if body is not None:
                    self._writer.write(body + b"\n")
                self._writer.flush()
                line = self._reader.readline()
                if not line:
                    raise OSError("connection closed by store")
                reply = line.decode("utf-8").strip()
                payload = None
                if reply.startswith("VALUE "):
                    length = int(reply.split(" ")[2])
                    payload = self._reader.read(length)
                    self._reader.read(1)  # trailing newline
                return reply, payload
            except (OSError, ValueError, IndexError) as exc:
                self._reset()
                raise StoreUnavailableError(f"store request failed: {exc}") from exc

    def ping(self) -> bool:
        reply, _ = self._roundtrip("PING")
        return reply == "PONG"

    def get(self, key: str) -> StoreRecord | None:
        reply, payload = self._roundtrip(f"GET {key}")
        if reply == "MISSING":
            return None
        if not reply.startswith("VALUE "):
            raise StoreUnavailableError(f"unexpected store reply {reply!r}")
        version = int(reply.split(" ")[1])
        return StoreRecord(key, payload.decode("utf-8"), version)

    def put(self, key: str, value: str, expected_version: int | None = None,
            ttl_s: int | None = None) -> int:
        body = value.encode("utf-8")
        expected = "-" if expected_version is None else str(expected_version)
        ttl = "-" if ttl_s is None else str(ttl_s)
        reply, _ = self._roundtrip(f"PUT {key} {expected} {ttl} {len(body)}", body)
        if reply.startswith("OK "):
            return int(reply.split(" ")[1])
        if reply.startswith("CONFLICT "):
            raise VersionConflictError(key, int(reply.split(" ")[1]))
        raise StoreUnavailableError(f"unexpected store reply {reply!r}")


def open_store(store_url: str | None) -> KeyValueStore:
    """kv://host:port selects the wire store; no URL selects in-memory."""
    if not store_url:
        return InMemoryStore()
    if not store_url.startswith("kv://"):
        raise ValueError(f"unsupported store url {store_url!r} (expected kv://host:port)")
    host, _, port = store_url[len("kv://"):].partition(":")
    return WireStore(host, int(port))


# --- domain document serialization -------------------------------------------

def turn_to_doc(turn: ChatTurn) -> dict:
    return {"role": turn.role, "text": turn.text, "ts": turn.ts}


def doc_to_turn(doc: dict) -> ChatTurn:
    return ChatTurn(role=doc["role"], text=doc["text"], ts=doc["ts"])


def session_to_doc(session: Session) -> dict:
    return {
        "id": session.id,
        "phase": session.phase.value,
        "form_state": None if session.form_state is None else {
            "form_id": session.form_state.form_id,
            "filled": dict(session.form_state.filled),
            "cursor": session.form_state.cursor,
        },
        "pending": None if session.pending is None else {
            "product_id": session.pending.product_id,
            "qty": session.pending.qty,
            "proposed_at": session.pending.proposed_at,
        },
        "profile": dict(session.profile),
        "turn_count": session.turn_count,
    }


def cart_to_doc(cart: Cart) -> dict:
    return {
        "lines": [
            {"product_id": l.product_id, "qty": l.qty, "unit_price_snapshot": str(l.unit_price_snapshot)}
            for l in cart.lines
        ]
    }


def doc_to_cart(doc: dict) -> Cart:
    return Cart(lines=tuple(
        CartLine(l["product_id"], l["qty"], Decimal(l["unit_price_snapshot"]))
        for l in doc["lines"]
    ))


def doc_to_session(doc: dict, cart: Cart, history: list[ChatTurn]) -> Session:
    form_state = None
    if doc["form_state"] is not None:
        form_state = FormState(
            form_id=doc["form_state"]["form_id"],
            filled=dict(doc["form_state"]["filled"]),
            cursor=doc["form_state"]["cursor"],
        )
    pending = None
    if doc["pending"] is not None:
        pending = PendingAddition(
            product_id=doc["pending"]["product_id"],
            qty=doc["pending"]["qty"],
            proposed_at=doc["pending"]["proposed_at"],
        )
    return Session(
        id=doc["id"],
        phase=Phase(doc["phase"]),
        form_state=form_state,
        cart=cart,
        pending=pending,
        history=history,
        profile=dict(doc["profile"]),
        turn_count=doc["turn_count"],
    )


class SessionStore:
    """Sessions, carts and append-only history on top of a key-value adapter.

    Keys: session:{id} / cart:{id} / history:{id}. History appends use a
    compare-and-set loop so concurrent writers never drop turns.
    """

    def __init__(self, store: KeyValueStore, ttl_s: int | None = 86400):
        self.store = store
        self.ttl_s = ttl_s

    def save_session(self, session: Session) -> None:
        self.store.put(f"session:{session.id}", canonical_json(session_to_doc(session)), ttl_s=self.ttl_s)
        self.store.put(f"cart:{session.id}", canonical_json(cart_to_doc(session.cart)), ttl_s=self.ttl_s)

    def load_session(self, session_id: str) -> Session | None:
        record = self.store.get(f"session:{session_id}")
        if record is None:
            return None
        doc = json.loads(record.value)
        cart_record = self.store.get(f"cart:{session_id}")
        cart = doc_to_cart(json.loads(cart_record.value)) if cart_record else Cart()
        return doc_to_session(doc, cart, self.read_history(session_id))

    def append_history(self, session_id: str, turn: ChatTurn) -> int:
        """Append one timestamped turn; returns the new history length."""
        key = f"history:{session_id}"
        while True:
            record = self.store.get(key)
            turns = json.loads(record.value) if record else []
            expected = record.version if record else 0
            turns.append(turn_to_doc(turn))
            try:
                self.store.put(key, canonical_json(turns), expected_version=expected, ttl_s=self.ttl_s)
                return len(turns)
            except VersionConflictError:
                continue  # another writer got in first; re-read and retry

    def read_history(self, session_id: str, window: int | None = None) -> list[ChatTurn]:
        record = self.store.get(f"history:{session_id}")
        if record is None:
            return []
        docs = json.loads(record.value)
        if window is not None and window >= 0:
            docs = docs[-window:] if window else []
        return [doc_to_turn(doc) for doc in docs]

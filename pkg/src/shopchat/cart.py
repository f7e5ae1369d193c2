"""Cart state with a confirm-before-add protocol and LLM-free summary rendering.

Additions are two-phase: propose (availability check, nothing mutated) then an
explicit user confirmation. Removals apply immediately. The summary text is
rendered deterministically from the cart so it can never misstate contents.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

from .catalog import Catalog, SearchResult, availability, search


class CartConsistencyError(RuntimeError):
    """A cart line references a product the catalog no longer knows."""


@dataclass(frozen=True)
class CartLine:
    product_id: str
    qty: int
    unit_price_snapshot: Decimal


@dataclass(frozen=True)
class Cart:
    lines: tuple[CartLine, ...] = ()

    def line_for(self, product_id: str) -> CartLine | None:
        for line in self.lines:
            if line.product_id == product_id:
                return line
        return None

    @property
    def is_empty(self) -> bool:
        return not self.lines


@dataclass(frozen=True)
class PendingAddition:
    product_id: str
    qty: int
    proposed_at: int  # turn index the proposal was made on


@dataclass(frozen=True)
class ProposeResult:
    pending: PendingAddition | None
    alternatives: tuple[SearchResult, ...] = ()

    @property
    def available(self) -> bool:
        return self.pending is not None


@dataclass(frozen=True)
class ConfirmResult:
    cart: Cart
    added: bool
    unavailable: bool = False
    alternatives: tuple[SearchResult, ...] = ()


@dataclass(frozen=True)
class RemoveResult:
    cart: Cart
    removed: bool  # False: the product was not in the cart
    removed_qty: int = 0


def _requested_total(cart: Cart, product_id: str, qty: int) -> int:
    # Availability is checked against what the cart would hold after the add,
    # so a confirmed cart never exceeds known stock.
    line = cart.line_for(product_id)
    return qty + (line.qty if line else 0)


def propose_add(cart: Cart, catalog: Catalog, product_id: str, qty: int, turn: int = 0) -> ProposeResult:
    """Availability-checked proposal; the cart is untouched until confirmation."""
    if qty < 1:
        raise ValueError("qty must be >= 1")
    check = availability(catalog, product_id, _requested_total(cart, product_id, qty))
    if not check.available:
        return ProposeResult(pending=None, alternatives=_alternatives(catalog, product_id))
    return ProposeResult(pending=PendingAddition(product_id, qty, turn))


def _alternatives(catalog: Catalog, product_id: str) -> tuple[SearchResult, ...]:
    product = catalog.get(product_id)
    # Probe with name plus keywords so substitutes from the same shelf surface.
    probe = f"{product.name} {' '.join(product.keywords)}" if product else product_id
    hits = [r for r in search(catalog, probe, 4) if r.product_id != product_id]
    return tuple(hits[:3])


def confirm_pending(cart: Cart, catalog: Catalog, pending: PendingAddition, accept: bool) -> ConfirmResult:
    """Resolve a proposal: merge into the cart on accept, drop it on decline.

    Availability is re-checked at confirm time (the catalog may have been
    reloaded since the proposal); a failed re-check yields an unavailable
    outcome and the cart stays unchanged.
    """
    if not accept:
        return ConfirmResult(cart=cart, added=False)
    check = availability(catalog, pending.product_id, _requested_total(cart, pending.product_id, pending.qty))
    if not check.available:
        return ConfirmResult(
            cart=cart, added=False, unavailable=True,
            alternatives=_alternatives(catalog, pending.product_id),
        )
    existing = cart.line_for(pending.product_id)
    if existing is not None:
        # Repeat adds merge by summing qty; the original price snapshot stands.
        merged = CartLine(existing.product_id, existing.qty + pending.qty, existing.unit_price_snapshot)
        lines = tuple(merged if l.product_id == pending.product_id else l for l in cart.lines)
    else:
        product = catalog.get(pending.product_id)
        assert product is not None  # availability above guarantees existence
        lines = cart.lines + (CartLine(pending.product_id, pending.qty, product.unit_price),)
    return ConfirmResult(cart=Cart(lines), added=True)


def remove(cart: Cart, product_id: str, qty: int | None = None) -> RemoveResult:
    """Decrement or drop a line; qty=None removes the whole line. No confirmation."""
    if qty is not None and qty < 1:
        raise ValueError("qty must be >= 1 or None for all")
    line = cart.line_for(product_id)
    if line is None:
        return RemoveResult(cart=cart, removed=False)
    if qty is None or qty >= line.qty:
        lines = tuple(l for l in cart.lines if l.product_id != product_id)
        return RemoveResult(cart=Cart(lines), removed=True, removed_qty=line.qty)
    shrunk = CartLine(line.product_id, line.qty - qty, line.unit_price_snapshot)
    lines = tuple(shrunk if l.product_id == product_id else l for l in cart.lines)
    return RemoveResult(cart=Cart(lines), removed=True, removed_qty=qty)


def render_summary(cart: Cart, catalog: Catalog) -> str:
    """Deterministic cart text: one line per item in insertion order, then the total.

    Pure function of (cart, catalog); totals use exact decimal arithmetic.
    """
    if cart.is_empty:
        return "Your cart is empty."
    parts = []
    total = Decimal("0.00")
    for line in cart.lines:
        product = catalog.get(line.product_id)
        if product is None:
            raise CartConsistencyError(f"cart references unknown product {line.product_id!r}")
        line_total = line.unit_price_snapshot * line.qty
        parts.append(f"{line.qty}× {product.name} — {line_total:.2f}")
        total += line_total
    parts.append(f"Total: {total:.2f}")
    return "\n".join(parts)

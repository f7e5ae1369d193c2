"""Product inventory: file loading with validation, deterministic search, availability.

The search here is a deterministic mock of a recommendation backend: it scores
products by query-token overlap against keywords and name tokens, so results
are reproducible, always reference real catalog entries, and can be swapped
for a smarter backend behind the same signature.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import IO, Iterator

from .textnorm import normalize_name, tokenize


class CatalogError(ValueError):
    """Catalog file failed validation; the message names the offending record."""


@dataclass(frozen=True)
class Product:
    id: str
    name: str
    category: str
    unit_price: Decimal
    stock: int
    keywords: tuple[str, ...]


@dataclass(frozen=True)
class SearchResult:
    product_id: str
    score: float
    rationale: str


@dataclass(frozen=True)
class Availability:
    available: bool
    known: bool  # False: the product id does not exist in the catalog
    stock: int | None


class Catalog:
    """Immutable product collection with id lookup and deterministic search."""

    def __init__(self, products: list[Product], version: int = 1):
        by_id: dict[str, Product] = {}
        for product in products:
            if product.id in by_id:
                raise CatalogError(f"duplicate product id {product.id!r}")
            by_id[product.id] = product
        self._by_id = by_id
        self.version = version

    def get(self, product_id: str) -> Product | None:
        return self._by_id.get(product_id)

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self) -> Iterator[Product]:
        return iter(self._by_id.values())

    @property
    def products(self) -> tuple[Product, ...]:
        return tuple(self._by_id.values())


_REQUIRED_FIELDS = ("id", "name", "category", "unit_price", "stock", "keywords")


def _parse_record(record: object, position: int) -> Product:
    where = f"record {position}"
    if not isinstance(record, dict):
        raise CatalogError(f"{where}: expected an object, got {type(record).__name__}")
    if isinstance(record.get("id"), str):
        where = f"record {position} (id {record['id']!r})"
    missing = [f for f in _REQUIRED_FIELDS if f not in record]
    if missing:
        raise CatalogError(f"{where}: missing fields {', '.join(missing)}")

    pid, name, category = record["id"], record["name"], record["category"]
    if not isinstance(pid, str) or not pid:
        raise CatalogError(f"{where}: id must be a non-empty string")
    if not isinstance(name, str) or not name.strip():
        raise CatalogError(f"{where}: name must be a non-empty string")
    if not isinstance(category, str):
        raise CatalogError(f"{where}: category must be a string")

    try:
        price = Decimal(record["unit_price"])
    except (InvalidOperation, TypeError, ValueError):
        raise CatalogError(f"{where}: unit_price {record['unit_price']!r} is not a decimal string") from None
    if price <= 0:
        raise CatalogError(f"{where}: unit_price must be > 0, got {price}")

    stock = record["stock"]
    if not isinstance(stock, int) or isinstance(stock, bool):
        raise CatalogError(f"{where}: stock must be an integer")
    if stock < 0:
        raise CatalogError(f"{where}: stock must be >= 0, got {stock}")

    keywords = record["keywords"]
    if not isinstance(keywords, list) or not all(isinstance(k, str) for k in keywords):
        raise CatalogError(f"{where}: keywords must be an array of strings")
    normalized = tuple(normalize_name(k) for k in keywords if normalize_name(k))

    return Product(
        id=pid,
        name=name.strip(),
        category=category,
        unit_price=price.quantize(Decimal("0.01")),
        stock=stock,
        keywords=normalized,
    )


def load_catalog(source: bytes | str | IO, version: int = 1) -> Catalog:
    """Parse and validate a catalog file; rejects the whole file on any bad record."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, list):
        raise CatalogError("catalog file must be a JSON array of product objects")
    return Catalog([_parse_record(rec, i) for i, rec in enumerate(data)], version=version)


def load_catalog_file(path: str, version: int = 1) -> Catalog:
    with open(path, "rb") as fh:
        return load_catalog(fh, version=version)


def search(catalog: Catalog, query: str, limit: int = 5) -> list[SearchResult]:
    """Score = |query tokens ∩ (keywords ∪ name tokens)| / |query tokens|.

    Zero-score products are dropped; ties break by ascending product id so the
    ordering is total and reproducible.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    query_tokens = set(tokenize(query))
    if not query_tokens:
        return []
    results = []
    for product in catalog:
        terms = set(product.keywords) | set(tokenize(product.name))
        matched = query_tokens & terms
        if not matched:
            continue
        score = len(matched) / len(query_tokens)
        results.append(SearchResult(product.id, score, "matched: " + ", ".join(sorted(matched))))
    results.sort(key=lambda r: (-r.score, r.product_id))
    return results[:limit]


def availability(catalog: Catalog, product_id: str, qty: int) -> Availability:
    """stock >= qty check; unknown ids report known=False instead of raising."""
    if qty < 1:
        raise ValueError("qty must be >= 1")
    product = catalog.get(product_id)
    if product is None:
        return Availability(available=False, known=False, stock=None)
    return Availability(available=product.stock >= qty, known=True, stock=product.stock)


def with_stock_decremented(catalog: Catalog, quantities: dict[str, int]) -> Catalog:
    """New catalog with purchased quantities removed from stock (floored at 0)."""
    products = []
    for product in catalog:
        bought = quantities.get(product.id, 0)
        if bought > 0:
            product = Product(
                id=product.id,
                name=product.name,
                category=product.category,
                unit_price=product.unit_price,
                stock=max(0, product.stock - bought),
                keywords=product.keywords,
            )
        products.append(product)
    return Catalog(products, version=catalog.version + 1)


class CatalogHolder:
    """Atomic reference to the current catalog; readers see old or new, never a mix."""

    def __init__(self, catalog: Catalog):
        self._lock = threading.Lock()
        self._catalog = catalog

    @property
    def current(self) -> Catalog:
        return self._catalog

    def swap(self, catalog: Catalog) -> None:
        with self._lock:
            if catalog.version <= self._catalog.version:
                catalog = Catalog(list(catalog), version=self._catalog.version + 1)
            self._catalog = catalog

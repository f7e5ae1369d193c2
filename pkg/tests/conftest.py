import json
from decimal import Decimal

import pytest

from shopchat.catalog import Catalog, Product
from shopchat.config import AppConfig
from shopchat.gateway import build_engine


def make_product(pid="p-beer-01", name="Pale Ale Beer", price="4.50", stock=5,
                 keywords=("beer", "ale"), category="beverages"):
    return Product(id=pid, name=name, category=category,
                   unit_price=Decimal(price), stock=stock, keywords=tuple(keywords))


@pytest.fixture
def small_catalog():
    return Catalog([
        make_product("p-beer-01", "Pale Ale Beer", "4.50", 5, ("beer", "ale", "pale")),
        make_product("p-soda-01", "Guarana Soda", "3.00", 10, ("soda", "guarana")),
        make_product("p-chips-01", "Potato Chips", "6.25", 3, ("chips", "potato", "snack")),
        make_product("p-zero-01", "Empty Shelf Cola", "2.00", 0, ("cola", "soda")),
    ])


@pytest.fixture
def config():
    return AppConfig()


@pytest.fixture
def engine(config):
    return build_engine(config)


def catalog_bytes(records):
    return json.dumps(records).encode("utf-8")


def run_conversation(engine, messages, session_id=None):
    results = []
    for message in messages:
        result = engine.handle_turn(session_id, message)
        session_id = result.response.session_id
        results.append(result)
    return session_id, results

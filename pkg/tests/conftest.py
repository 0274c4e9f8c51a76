import contextlib
from pathlib import Path

import pytest

from xcube_advisor.workload import parse_query, read_workload
from xcube_advisor.xcube_store import (
    DimensionMember,
    DimensionSpec,
    FactCell,
    MeasureSpec,
    Warehouse,
    WarehouseSchema,
)

DATA = Path(__file__).parent / "data"

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    @contextlib.contextmanager
    def record(number, title):
        try:
            yield
        except BaseException:
            _ACCEPTANCE.append((number, title, "FAIL"))
            raise
        _ACCEPTANCE.append((number, title, "PASS"))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status in sorted(_ACCEPTANCE, key=lambda r: int(r[0])):
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")


@pytest.fixture
def lyon_text():
    return (DATA / "lyon_query.xq").read_text()


@pytest.fixture
def lyon_query(lyon_text):
    return parse_query(lyon_text, "lyon")


@pytest.fixture
def snapshot_workload():
    return read_workload(DATA / "snapshot_pair.xq")


@pytest.fixture
def snapshot_schema():
    return WarehouseSchema(
        "sales",
        (
            DimensionSpec("channels", (("channel_desc", 16), ("channel_class", 12)), 3),
            DimensionSpec("customers", (("cust_first_name", 16), ("cust_city", 20),
                                        ("cust_last_name", 16), ("cust_postal_code", 8)), 4),
            DimensionSpec("products", (("prod_category", 20),), 2),
        ),
        (MeasureSpec("quantity"), MeasureSpec("amount")),
        fact_count=1000,
    )


@pytest.fixture
def tiny_warehouse():
    """Hand-built warehouse with sums that are easy to check by eye."""
    schema = WarehouseSchema(
        "sales",
        (
            DimensionSpec("customers", (("cust_city", 10), ("cust_last_name", 12)), 3),
            DimensionSpec("channels", (("channel_desc", 8),), 2),
        ),
        (MeasureSpec("quantity"), MeasureSpec("amount")),
    )
    members = (
        DimensionMember("customers", "c1", {"cust_city": "Lyon", "cust_last_name": "Martin"}),
        DimensionMember("customers", "c2", {"cust_city": "Lyon", "cust_last_name": "Durand"}),
        DimensionMember("customers", "c3", {"cust_city": "Montpellier", "cust_last_name": "Martin"}),
        DimensionMember("channels", "h1", {"channel_desc": "Internet"}),
        DimensionMember("channels", "h2", {"channel_desc": "Direct"}),
    )

    def cell(c, h, qty, amt):
        from decimal import Decimal

        return FactCell({"customers": c, "channels": h},
                        {"quantity": qty, "amount": Decimal(amt)})

    facts = (
        cell("c1", "h1", 3, "10.50"),
        cell("c1", "h2", 2, "4.25"),
        cell("c2", "h1", 5, "20.00"),
        cell("c3", "h1", 7, "1.10"),
        cell("c1", "h1", 1, "0.75"),
    )
    return Warehouse(schema, members, facts)

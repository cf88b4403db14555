from __future__ import annotations

import pytest

from reprompt.prompts import ShotTuple


@pytest.fixture
def golden_shots() -> list[ShotTuple]:
    """The five demonstrations frozen into the golden prompt files."""
    return [
        ShotTuple(
            "Count the objects: a pear, two plums, and a fig. How many fruits?",
            "List them: pear (1), plums (2, 3), fig (4). The count ends at 4.",
            "4",
        ),
        ShotTuple(
            "If Ann is taller than Bo and Bo is taller than Cy, who is shortest?",
            "Order them: Ann > Bo > Cy. The last in the order is shortest.",
            "Cy",
        ),
        ShotTuple(
            "A train leaves at 9:40 and arrives at 10:25. How long is the trip?",
            "From 9:40 to 10:00 is 20 minutes, to 10:25 is 25 more, so 45 minutes.",
            "45 minutes",
        ),
        ShotTuple(
            "Which is heavier: 500 g of iron or 500 g of feathers?",
            "Both masses are 500 g, so neither is heavier.",
            "neither",
        ),
        ShotTuple(
            "What is the next number: 2, 4, 8, 16?",
            "Each term doubles the previous one, so 16 doubles to 32.",
            "32",
        ),
    ]


@pytest.fixture
def golden_question() -> str:
    return "How many letters are in the word 'prompt'?"


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {name}: {status}")

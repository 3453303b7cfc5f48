import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"
ACCEPTANCE_LINES = []


def _decode(v):
    if isinstance(v, list):
        return [_decode(u) for u in v]
    return Fraction(v["num"], v["den"])


@pytest.fixture(scope="session")
def derived():
    """Reference values frozen by tests/oracle.py, as exact fractions."""
    doc = json.loads((FIXTURES / "derived_values.json").read_text())
    return {k: _decode(v) for k, v in doc.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

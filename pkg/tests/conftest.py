import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fredholm import (  # noqa: E402
    brownian_bridge,
    brownian_motion,
    fractional_brownian,
    make_uniform_grid,
    ornstein_uhlenbeck,
)


@pytest.fixture(scope="session")
def catalog():
    """The four continuous models used across the suite, all on [0, 1]."""
    return {
        "bm": brownian_motion(1.0),
        "bb": brownian_bridge(1.0),
        "ou": ornstein_uhlenbeck(1.0, 1.0, 1.0),
        "fbm": fractional_brownian(0.75, 1.0),
    }


@pytest.fixture(scope="session")
def grid64():
    return make_uniform_grid(1.0, 64)


@pytest.fixture(scope="session")
def grid256():
    return make_uniform_grid(1.0, 256)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one summary line per acceptance criterion."""

    def emit(number: int, title: str, passed: bool, detail: str, seconds: float):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail} ({seconds:.1f} s)"
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

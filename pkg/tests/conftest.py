from __future__ import annotations

import math

import pytest

from dickecav.model import MHZ, TWO_PI, practical_params

G = TWO_PI * 16 * MHZ
KAPPA = TWO_PI * 1.4 * MHZ


@pytest.fixture
def practical():
    return practical_params(3)


def close(a, b, rel=1e-12, abs_=0.0):
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    """Record a one-line PASS/FAIL verdict that is echoed in the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)

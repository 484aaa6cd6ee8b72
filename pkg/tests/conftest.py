from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> part label -> (passed, detail)
_RESULTS: dict[int, dict[str, tuple[bool, str]]] = {}


@pytest.fixture
def record_criterion():
    """Store the outcome of (a part of) an acceptance criterion and print it."""

    def record(number: int, passed: bool, detail: str, part: str = "") -> None:
        _RESULTS.setdefault(number, {})[part] = (bool(passed), detail)
        label = f"{number} ({part})" if part else str(number)
        print(f"\nCRITERION {label}: {'PASS' if passed else 'FAIL'} | {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        parts = _RESULTS[number]
        passed = all(p for p, _ in parts.values())
        detail = "; ".join(f"{k}: {d}" if k else d for k, (_, d) in parts.items())
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} | {detail}")

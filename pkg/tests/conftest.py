"""Collects one PASS/FAIL line per acceptance criterion and prints them at the end."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_LINES: dict[int, tuple[bool, str]] = {}


class Recorder:
    def __call__(self, number: int, passed: bool, detail: str) -> None:
        ok = bool(passed) and _LINES.get(number, (True, ""))[0]
        prev = _LINES.get(number, (True, ""))[1]
        _LINES[number] = (ok, f"{prev}; {detail}" if prev else detail)


@pytest.fixture(scope="session")
def criterion():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        ok, detail = _LINES[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

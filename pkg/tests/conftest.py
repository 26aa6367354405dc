from __future__ import annotations

import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL/SKIPPED line for an acceptance criterion."""

    def record(number: int, status, detail: str) -> None:
        if not isinstance(status, str):
            status = "PASS" if status else "FAIL"
        line = f"criterion {number:>2}: {status:<7} {detail}"
        _LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
        terminalreporter.write_line(line)

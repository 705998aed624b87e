"""Shared fixtures: acceptance reporting collected into the terminal summary."""

import pytest

ACCEPTANCE_LINES: list[tuple[int, str]] = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one verdict line per acceptance criterion and enforce it."""
    def record(number: int, ok: bool, details: str) -> None:
        verdict = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append((number, f"criterion {number}: {verdict} - {details}"))
        assert ok, f"criterion {number} failed: {details}"
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)

from __future__ import annotations

import pytest

_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request) -> list:
    """Collects ``(criterion, passed, detail, seconds)`` rows for the summary."""
    return request.config.stash.setdefault(_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail, secs in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(
            f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {secs:7.1f}s  {detail}")

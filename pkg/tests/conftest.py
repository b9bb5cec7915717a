import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import fleet as _fleet  # noqa: E402

CRITERIA = {}


@pytest.fixture(scope="session")
def fleet():
    return _fleet


@pytest.fixture
def criterion():
    """record(k, ok, detail) stores and prints one acceptance line."""
    def record(k, ok, detail):
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA[k] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])

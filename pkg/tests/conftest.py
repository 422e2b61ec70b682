from pathlib import Path

import pytest

from mrbsde.harness import fixtures_dir


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return fixtures_dir()


VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record the one-line outcome of an acceptance criterion."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        VERDICTS[number] = f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        print(VERDICTS[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])

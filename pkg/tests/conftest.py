from __future__ import annotations

from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

# (criterion, verdict, detail) lines filled in by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, str, str]] = []


def record_acceptance(criterion: int, passed: bool, detail: str) -> None:
    verdict = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append((criterion, verdict, detail))
    print(f"ACCEPTANCE {criterion:>2} {verdict}: {detail}", flush=True)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, verdict, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {criterion:>2}: {verdict}  {detail}")


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fixture_config():
    from llm_jury.config import load_config

    return load_config(FIXTURES / "config.yaml")

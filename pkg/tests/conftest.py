"""Shared fixtures plus the acceptance summary hook."""
from __future__ import annotations

import pathlib
import sys

import pytest

TESTS_DIR = pathlib.Path(__file__).parent
MODELS_DIR = TESTS_DIR.parent / "src" / "relcomp" / "models"

sys.path.insert(0, str(TESTS_DIR))  # makes `import gen` work from anywhere

# acceptance results collected by tests/test_acceptance.py; printed in the
# terminal summary so they survive pytest's output capture
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(n: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


def model_path(name: str) -> str:
    return str(MODELS_DIR / name)


@pytest.fixture(scope="session")
def case1_model():
    from relcomp.model import load_model

    return load_model(model_path("case1.json"))


@pytest.fixture(scope="session")
def case2_independent():
    from relcomp.model import load_model

    return load_model(model_path("case2_independent.json"))


@pytest.fixture(scope="session")
def case2_dependent():
    from relcomp.model import load_model

    return load_model(model_path("case2_dependent.json"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

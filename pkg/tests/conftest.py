import json
import sys
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"
CONFIGS = Path(__file__).parent.parent / "configs"


@pytest.fixture(scope="session")
def expected():
    return json.loads((DATA / "expected.json").read_text())


@pytest.fixture(scope="session")
def configs():
    return CONFIGS


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acceptance.RESULTS):
            terminalreporter.write_line(acceptance.RESULTS[n])

import json
from pathlib import Path

import pytest

from conelines.ansatz import AnsatzParams
from conelines.flatcone import ConePair

ORACLES = Path(__file__).parent / "oracles"


@pytest.fixture(scope="session")
def frozen_flat():
    return json.loads((ORACLES / "frozen_flat.json").read_text())


@pytest.fixture(scope="session")
def sym_pair():
    return ConePair.symmetric(0.9, 1.0)


@pytest.fixture(scope="session")
def asym_pair():
    return ConePair(0.85, 0.9, 1.0, -1.5)


@pytest.fixture(scope="session")
def params():
    return AnsatzParams.default()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

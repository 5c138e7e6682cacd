from __future__ import annotations

import sys

import pytest

from cargoshock.ingest import IngestService, RecordStore
from cargoshock.world import load_scenario, run_simulation

API_KEY = "test-key"


@pytest.fixture(scope="session")
def demo_scenario():
    return load_scenario("demo_voyage")


@pytest.fixture(scope="session")
def demo_journey(demo_scenario):
    return run_simulation(demo_scenario, seed=42)


@pytest.fixture
def service():
    return IngestService(RecordStore(), [API_KEY])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)

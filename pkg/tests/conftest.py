import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from headfirst import Allocator, AllocatorConfig, Mode, load_snapshot  # noqa: E402

import tables  # noqa: E402

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): exit criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _criteria.items():
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")


def allocator_from(table, mode, owner=7):
    arena = load_snapshot(tables.rows(table), tables.base(table), tables.CAPACITY, owner=owner)
    config = AllocatorConfig(mode=mode, capacity=tables.CAPACITY, base_address=tables.base(table))
    return Allocator(config, arena)


@pytest.fixture
def nhf_ref():
    return allocator_from(tables.NON_HEAD_FIRST_LAYOUT, Mode.NON_HEAD_FIRST)


@pytest.fixture
def hf_ref():
    return allocator_from(tables.HEAD_FIRST_LAYOUT, Mode.HEAD_FIRST)

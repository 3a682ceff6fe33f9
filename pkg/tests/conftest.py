import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from prach_sentinel.scenario import ScenarioConfig
from prach_sentinel.waveform import PrachNumerology


@pytest.fixture
def num():
    return PrachNumerology()


@pytest.fixture
def scenario():
    return ScenarioConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# --- acceptance reporting: one PASS/FAIL line per criterion ---------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    number, title = marker.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    if rep.failed and not detail:
        detail = f"{rep.when} failed"
    prev = _CRITERIA.get(number)
    passed = rep.passed and (prev is None or prev[1])
    if prev and prev[2]:
        detail = f"{prev[2]}; {detail}" if detail else prev[2]
    _CRITERIA[number] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number:2d} {title}: {detail}")

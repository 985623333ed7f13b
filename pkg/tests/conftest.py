from __future__ import annotations

import random
from pathlib import Path

import pytest

from kblrt.parser import parse_trace

SAMPLES = Path(__file__).resolve().parent.parent / "samples"

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def rng():
    return random.Random(20240611)


@pytest.fixture
def sample():
    def load(name: str):
        return parse_trace((SAMPLES / name).read_text())

    return load


@pytest.fixture
def sample_path():
    return lambda name: str(SAMPLES / name)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = getattr(report, "criterion", None)
    if marker is not None:
        number, title = marker
        previous = _criteria.get(number, (title, "PASS"))[1]
        outcome = "PASS" if report.passed and previous == "PASS" else "FAIL"
        _criteria[number] = (title, outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcome = _criteria[number]
        terminalreporter.write_line(f"{outcome} criterion {number}: {title}")

from __future__ import annotations

from pathlib import Path

import pytest

from ppm_llm.synthetic import bundled_path

_CRITERIA: list[tuple[str, str, float]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _CRITERIA.append((marker.args[0], "PASS" if report.passed else "FAIL", report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, duration in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name}  ({duration:.2f} s)")


@pytest.fixture
def synthetic_config_path() -> Path:
    return bundled_path("synthetic_total_time.toml")

"""Shared pytest hooks: one PASS/FAIL line per acceptance criterion."""

import pytest

import acceptance_log


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = int(mark.args[0])
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        acceptance_log.OUTCOMES[n] = "PASS" if rep.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(acceptance_log.OUTCOMES):
        detail = acceptance_log.DETAILS.get(n, "")
        tr.write_line(f"criterion {n:2d}: {acceptance_log.OUTCOMES[n]}  {detail}")

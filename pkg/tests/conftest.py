"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

import pytest

_results: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        title = getattr(report, "criterion", None) or report.nodeid.split("::")[-1]
        _results[report.nodeid] = ("PASS" if report.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (status, title) in _results.items():
        terminalreporter.write_line(f"{status}  {title}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    doc = (item.function.__doc__ or "").strip().splitlines()
    if doc:
        outcome.get_result().criterion = doc[0]

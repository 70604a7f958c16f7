"""Shared pytest hooks: per-criterion summary lines for the acceptance gate."""

import pytest

_RESULTS = {}

# Free-form annotations tests may attach to their criterion line, e.g.
# measured timings for informative (non-gating) criteria.
NOTES = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(num, desc): numbered acceptance criterion; outcome is "
        "echoed as one PASS/FAIL line in the terminal summary",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None and rep.when == "call":
        num, desc = mark.args
        _RESULTS[num] = (desc, rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        desc, outcome = _RESULTS[num]
        label = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        note = f" [{NOTES[num]}]" if num in NOTES else ""
        terminalreporter.write_line(f"CRITERION {num:2d}: {label} - {desc}{note}")

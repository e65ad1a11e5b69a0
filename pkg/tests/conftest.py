"""Prints a per-criterion PASS/FAIL summary for the acceptance suite."""

import re

_PATTERN = re.compile(r"test_acceptance\.py::test_c(\d+)_(\w+)")
_results = {}


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    num, label = int(m.group(1)), m.group(2)
    ok, _ = _results.get(num, (True, label))
    if report.failed:
        ok = False
    elif report.when == "call" and not report.passed:
        ok = False
    _results[num] = (ok, label)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(_results):
        ok, label = _results[num]
        terminalreporter.write_line(
            f"criterion {num:02d} ({label}): {'PASS' if ok else 'FAIL'}"
        )

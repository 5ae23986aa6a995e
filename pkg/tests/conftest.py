import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

ACCEPTANCE_FILE = "test_acceptance.py"

# (test name, PASS/FAIL/SKIP, detail) for every acceptance test, in run order
_acceptance = []


def pytest_runtest_logreport(report):
    if ACCEPTANCE_FILE not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.skipped and report.when in ("setup", "call"):
        reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
        _acceptance.append((name, "SKIP", reason.removeprefix("Skipped: ")))
    elif report.when == "call":
        _acceptance.append((name, "PASS" if report.passed else "FAIL", ""))
    elif report.failed:
        _acceptance.append((name, "FAIL", f"error during {report.when}"))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in _acceptance:
        terminalreporter.write_line(f"{status}  {name}" + (f"  ({detail})" if detail else ""))

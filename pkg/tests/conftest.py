import re

_CRITERION = re.compile(r"test_criterion_(\d+)")
_outcomes: dict = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m or (report.when != "call" and report.passed):
        return
    key = int(m.group(1))
    ok = report.passed
    _outcomes[key] = _outcomes.get(key, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_outcomes):
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if _outcomes[key] else 'FAIL'}")

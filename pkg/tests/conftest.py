import re

_LINES = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)_", report.nodeid)
    if not m or report.when != "call":
        if m and report.when == "setup" and report.failed:
            _LINES[int(m.group(1))] = (False, "setup error")
        return
    detail = ""
    for name, content in report.user_properties:
        if name == "detail":
            detail = content
    _LINES[int(m.group(1))] = (report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_LINES):
        ok, detail = _LINES[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

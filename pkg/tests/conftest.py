import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call" and not report.failed:
        return
    number, title = marker.args
    detail = dict(report.user_properties).get("detail", "")
    if report.failed and report.when == "call":
        detail = (detail + "; " if detail else "") + report.longrepr.reprcrash.message.splitlines()[0]
    status = "PASS" if report.passed else "FAIL"
    if number in _RESULTS:  # parametrized criterion: all cases must pass
        prev_status, _, prev_detail = _RESULTS[number]
        status = "FAIL" if "FAIL" in (status, prev_status) else "PASS"
        detail = "; ".join(d for d in (prev_detail, detail) if d)
    _RESULTS[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title, detail = _RESULTS[number]
        line = f"AC{number:<2} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))

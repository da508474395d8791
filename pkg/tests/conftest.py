"""One PASS/FAIL line per acceptance criterion in the terminal summary."""

import time

import pytest

_RESULTS: dict[int, dict] = {}
_START = [0.0]


def pytest_sessionstart(session):
    _START[0] = time.perf_counter()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not mark.args:
        return
    num, name = mark.args[0], mark.args[1]
    entry = _RESULTS.setdefault(num, {"name": name, "passed": True, "ran": False, "detail": ""})
    if rep.when == "call":
        entry["ran"] = True
        detail = dict(item.user_properties).get("detail")
        if detail:
            entry["detail"] = detail
    if rep.failed:
        entry["passed"] = False
        entry["ran"] = True


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_RESULTS):
        e = _RESULTS[num]
        status = "PASS" if e["passed"] and e["ran"] else ("SKIP" if not e["ran"] else "FAIL")
        line = f"criterion {num:>2} {status}  {e['name']}"
        if e["detail"]:
            line += f"  [{e['detail']}]"
        tr.write_line(line)
    tr.write_line(f"session wall time {time.perf_counter() - _START[0]:.1f} s")

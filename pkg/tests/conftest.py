"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_OUTCOMES = {}
_DETAILS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(k): acceptance criterion number k")


@pytest.fixture
def detail(request):
    """Record a one-line measurement summary for the running criterion."""
    marker = request.node.get_closest_marker("acceptance")

    def record(text):
        _DETAILS.setdefault(marker.args[0], []).append(text)

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call" and not rep.failed:
        return
    k = marker.args[0]
    ok = rep.passed if rep.when == "call" else False
    _OUTCOMES[k] = _OUTCOMES.get(k, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_OUTCOMES):
        status = "PASS" if _OUTCOMES[k] else "FAIL"
        info = "; ".join(_DETAILS.get(k, []))
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {info}")

"""Collects acceptance results and prints one PASS/FAIL line per criterion."""

import pytest

RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[RESULTS] = {}
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.fixture
def criterion(request):
    """``record(ok, detail)`` stores the outcome of this test's criterion."""
    marker = request.node.get_closest_marker("criterion")
    store = request.config.stash[RESULTS]

    def record(ok, detail):
        store[marker.args[0]] = (bool(ok), detail)
        return bool(ok)

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" or not rep.failed:
        return
    store = item.config.stash[RESULTS]
    n = marker.args[0]
    if n not in store:
        msg = str(call.excinfo.value).strip().splitlines()
        store[n] = (False, "error: " + (msg[0] if msg else call.excinfo.typename))


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(RESULTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        ok, detail = store[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")

import pytest

_CRITERIA: dict[int, tuple[bool, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or rep.failed:
        ok, _, elapsed = _CRITERIA.get(number, (True, title, 0.0))
        _CRITERIA[number] = (ok and rep.passed, title, elapsed + rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, title, elapsed = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {number:>2} {title} ({elapsed:.2f} s)")

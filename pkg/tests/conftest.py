import pytest

from chemoplan import default_patient

_ACCEPTANCE: list[tuple[str, str]] = []


@pytest.fixture
def patient():
    return default_patient()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _ACCEPTANCE.append((marker.args[0], "PASS" if rep.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status in _ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {criterion}")

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")
    config.addinivalue_line("markers", "slow: long-running training test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = dict(report.user_properties).get("acceptance")
    if marker is None:
        return
    number, title = marker
    _ACCEPTANCE[number] = (title, report.outcome.upper())


@pytest.fixture(autouse=True)
def _tag_acceptance(request):
    m = request.node.get_closest_marker("acceptance")
    if m is not None:
        request.node.user_properties.append(("acceptance", (m.args[0], m.args[1])))
    yield


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE, key=lambda k: int(k)):
        title, outcome = _ACCEPTANCE[number]
        verdict = "PASS" if outcome == "PASSED" else "FAIL"
        terminalreporter.write_line(f"AC{number:<3} {verdict}  {title}")

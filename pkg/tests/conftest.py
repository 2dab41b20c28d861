import json
from datetime import date
from pathlib import Path

import numpy as np
import pytest

from avianwatch.ingestion import WeeklySeries

FIXTURES = Path(__file__).parent / "fixtures"
MONDAY = date(2022, 1, 3)


def weekly(values, start=MONDAY) -> WeeklySeries:
    return WeeklySeries(start, np.asarray(values, dtype=float))


@pytest.fixture(scope="session")
def oracles():
    return json.loads((FIXTURES / "oracles.json").read_text())


_acceptance: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (report.when != "call" and not report.failed):
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if report.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else report.when
    _acceptance[number] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        status, title, detail = _acceptance[number]
        terminalreporter.write_line(f"AC {number:>2} {status} {title}: {detail}")

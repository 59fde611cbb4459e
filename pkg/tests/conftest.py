import re

import numpy as np
import pytest

_AC = re.compile(r"test_ac(\d+)_")
_results: dict[int, tuple[str, str, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    m = _AC.search(report.nodeid)
    if not m or "test_acceptance.py" not in report.nodeid:
        return
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    num = int(m.group(1))
    detail = dict(report.user_properties).get("detail", "")
    if hasattr(report, "wasxfail"):
        status = "FAIL (expected; see ledger)" if report.skipped else "PASS (unexpectedly)"
    else:
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
    _results[num] = (status, report.nodeid.split("::")[-1], detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        status, name, detail = _results[num]
        line = f"AC{num:<2} {status:<28} {name}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))

"""Shared fixtures and the acceptance summary printed after the run."""
import pytest

from imdp_plf.casestudies import load_bundle

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def robot():
    return load_bundle("recycling-robot")


@pytest.fixture(scope="session")
def imdp3():
    return load_bundle("imdp3")


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.failed:
        key = props["criterion"]
        prev = _ACCEPTANCE.get(key)
        ok = report.passed and (prev is None or prev[0])
        _ACCEPTANCE[key] = (ok, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")

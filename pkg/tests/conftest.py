import logging

import pytest

import oricf
from oricf.offload.worker import Worker


@pytest.fixture
def demo_text():
    return oricf.demo_spec_text()


@pytest.fixture
def demo_spec(demo_text):
    return oricf.parse_spec(demo_text)


@pytest.fixture
def worker():
    w = Worker("127.0.0.1", 0).start()
    yield w
    w.stop()


@pytest.fixture
def edge(worker):
    host, port = worker.address
    return f"edge://{host}:{port}"


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.WARNING)


# -- acceptance summary ---------------------------------------------------------

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in sorted(_acceptance.items(), key=lambda kv: _criterion_key(kv[0])):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {nodeid.split('::')[-1]}")


def _criterion_key(nodeid):
    name = nodeid.split("::")[-1]
    digits = "".join(ch for ch in name.split("_")[1] if ch.isdigit()) if name.count("_") else ""
    return (int(digits) if digits else 99, name)

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from printids.synthesis import SynthConfig, gen_corpus  # noqa: E402

_ACCEPTANCE = []
_NOTES: dict = {}


@pytest.fixture(scope="session")
def full_corpus():
    """Default calibrated config at the recorded dataset's size, seed 0."""
    return gen_corpus(SynthConfig(seed=0))


@pytest.fixture(scope="session")
def small_corpus():
    return gen_corpus(SynthConfig(seed=3, n_benign=600, n_malicious=400))


@pytest.fixture
def measured(request):
    """Attach measured values to an acceptance test's summary line."""
    def note(text):
        _NOTES[request.node.nodeid] = text
    return note


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE.append((report.nodeid, report.outcome.upper()))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in _ACCEPTANCE:
        verdict = "PASS" if outcome == "PASSED" else "FAIL"
        line = f"{verdict}  {nodeid.split('::')[-1]}"
        if nodeid in _NOTES:
            line += f"  [{_NOTES[nodeid]}]"
        terminalreporter.write_line(line)

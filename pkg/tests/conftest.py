import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    key = (marker.args[0], item.name)
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _ACCEPTANCE[key] = (marker.args[1], rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    by_n = {}
    for (n, name), (text, outcome) in sorted(_ACCEPTANCE.items()):
        entry = by_n.setdefault(n, [text, True, []])
        entry[1] = entry[1] and outcome == "passed"
        entry[2].append(name)
    terminalreporter.section("acceptance criteria")
    for n, (text, ok, names) in sorted(by_n.items()):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"AC{n:>2} {status}  {text}  [{', '.join(names)}]")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

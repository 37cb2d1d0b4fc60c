import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(1)

# criterion number -> summary line, filled by test_acceptance.record
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training checks")
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    n = marker.args[0]
    results = getattr(item.module, "RESULTS", {})
    if n in results:
        _CRITERIA[n] = results[n]
    else:
        # crashed before it could report
        _CRITERIA[n] = f"criterion {n:2d}: FAIL  error: {call.excinfo.value!r}" if call.excinfo else f"criterion {n:2d}: FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])

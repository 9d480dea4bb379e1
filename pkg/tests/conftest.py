import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import CRITERIA, RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        ok, dt, detail = RESULTS[k]
        terminalreporter.write_line(
            f"[{'PASS' if ok else 'FAIL'}] C{k} {CRITERIA[k][0]}: {detail} ({dt:.2f} s)"
        )

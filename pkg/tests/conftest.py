import os

# fixed kernel thread count: reductions are then bit-stable run to run
os.environ.setdefault("NUMBA_NUM_THREADS", "2")

import warnings

import pytest

warnings.filterwarnings("ignore", message=".*not in scope.*")

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

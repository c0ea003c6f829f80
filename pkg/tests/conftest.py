import random

import numpy as np
import pytest

from creams import lut, pre


@pytest.fixture(scope="session")
def params():
    return pre.setup(b"creams")


@pytest.fixture(scope="session")
def keys(params):
    rng = random.Random(2024)
    return {name: pre.keygen(params, rng) for name in ("owner", "user", "judge", "other")}


@pytest.fixture
def rng():
    return random.Random(7)


@pytest.fixture
def np_rng():
    return np.random.default_rng(7)


@pytest.fixture(scope="session")
def fp():
    return lut.FpParams()


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_addoption(parser):
    parser.addoption("--table3-k", type=int, default=100,
                     help="users per traitor-tracking cell in the acceptance run (500 for the long run)")

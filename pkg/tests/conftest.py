import math

import numpy as np
import pytest

from chdbc.grid import GridSpec
from chdbc.model import ModelParams

_ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    _ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])


@pytest.fixture
def acceptance():
    return record_acceptance


@pytest.fixture
def grid():
    return GridSpec(2 * math.pi, math.pi, 32, 17)


@pytest.fixture
def small_grid():
    return GridSpec(3.0, 2.0, 16, 9)


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

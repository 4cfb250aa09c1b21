from functools import lru_cache

import pytest

from stokes_biot.elements import build_spaces
from stokes_biot.forms import PhysicalParams
from stokes_biot.mesh import two_squares
from stokes_biot.system import build_block_system

ACCEPTANCE_LINES = []


@lru_cache(maxsize=None)
def spaces_for(n):
    return build_spaces(*two_squares(n))


@lru_cache(maxsize=None)
def system_for(n, params=PhysicalParams(), dt=0.01):
    return build_block_system(spaces_for(n), params, dt)


@pytest.fixture
def spaces2():
    return spaces_for(2)


@pytest.fixture
def system2():
    return system_for(2)


@pytest.fixture
def acceptance():
    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

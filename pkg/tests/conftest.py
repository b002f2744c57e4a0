import math

import numpy as np
import pytest

from cknlab.leray_solver import FluidParams, simulate
from cknlab.presets import beltrami_shell2
from cknlab.torus_field import make_grid, power_law_spectrum, sample_random_field

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"[{status}] criterion {number:2d}: {title} :: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16, 2 * math.pi)


@pytest.fixture(scope="session")
def grid32():
    return make_grid(32, 2 * math.pi)


@pytest.fixture(scope="session")
def random_field16(grid16):
    return sample_random_field(grid16, power_law_spectrum(0.5, 5.0 / 3.0, 4), 7)


@pytest.fixture(scope="session")
def random_field32(grid32):
    return sample_random_field(grid32, power_law_spectrum(0.5, 5.0 / 3.0, 4), 7)


@pytest.fixture(scope="session")
def beltrami_traj16(grid16):
    """Shell-2 Beltrami decay, nu = 0.1, T = 0.4."""
    u0 = beltrami_shell2(grid16, 0.5, 3)
    return simulate(u0, 0.4, 0.01, FluidParams(0.1, grid16), 4)


@pytest.fixture(scope="session")
def random_traj16(random_field16, grid16):
    return simulate(random_field16, 0.4, 0.01, FluidParams(0.05, grid16), 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

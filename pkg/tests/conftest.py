import numpy as np
import pytest

from saddlepress.geometry import survivor_cloud
from saddlepress.systems import make_system

VERDICTS = []


def record(criterion, passed, detail):
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cat():
    return make_system("cat_map")


@pytest.fixture(scope="session")
def linear():
    return make_system("linear_horseshoe")


@pytest.fixture(scope="session")
def nonlinear():
    return make_system("nonlinear_horseshoe")


@pytest.fixture(scope="session")
def henon():
    return make_system("henon")


@pytest.fixture(scope="session")
def sink():
    return make_system("horseshoe_sink")


@pytest.fixture(scope="session")
def product():
    return make_system("rotation_cat")


@pytest.fixture(scope="session")
def clouds(linear, nonlinear):
    return {"linear_horseshoe": survivor_cloud(linear, 20000, 10, 5),
            "nonlinear_horseshoe": survivor_cloud(nonlinear, 20000, 10, 5)}


@pytest.fixture(scope="session")
def henon_attractor(henon):
    P = np.column_stack([np.linspace(-0.5, 0.5, 400), np.zeros(400)])
    for _ in range(200):
        P = henon.forward(P)
    return P

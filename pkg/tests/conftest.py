import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from twistorbits.dynamics import HamiltonianSpec, PotentialTerm
from twistorbits.geometry import MetricField
from twistorbits.action import find_critical
from twistorbits.twist import decompose

settings.register_profile(
    "repo", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

PENDULUM_TERMS = (PotentialTerm((1,), 1.0),)
RESONANT_TERMS = (PotentialTerm((3,), 1.0, -1),)
TORUS2_TERMS = (PotentialTerm((1, 0), 1.0), PotentialTerm((0, 1), 1.0))


def pendulum(eps=0.1, bump="flat-top", C=0.45):
    return HamiltonianSpec(MetricField(1), C, eps, PENDULUM_TERMS, bump=bump)


@pytest.fixture(scope="session")
def flat1():
    return MetricField(1)


@pytest.fixture(scope="session")
def flat2():
    return MetricField(2)


@pytest.fixture(scope="session")
def conformal1():
    return MetricField(1, "conformal", (((1,), 0.1),), mode="lifted")


@pytest.fixture(scope="session")
def conformal2():
    return MetricField(2, "conformal", (((1, 0), 0.1), ((1, 1), 0.05)), mode="lifted")


@pytest.fixture(scope="session")
def pendulum_H():
    return pendulum()


@pytest.fixture(scope="session")
def pendulum_decomp(pendulum_H):
    return decompose(pendulum_H)


@pytest.fixture(scope="session")
def resonant_H():
    return HamiltonianSpec(MetricField(1), 0.45, 0.05, RESONANT_TERMS, bump="flat-top")


@pytest.fixture(scope="session")
def resonant_decomp(resonant_H):
    return decompose(resonant_H)


@pytest.fixture(scope="session")
def free_decomp(flat1):
    return decompose(HamiltonianSpec(flat1, 0.45), N=4)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pendulum_census(pendulum_decomp):
    return find_critical(pendulum_decomp, [0], 1)


@pytest.fixture(scope="session")
def resonant13(resonant_decomp):
    return find_critical(resonant_decomp, [1], 3)


VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)

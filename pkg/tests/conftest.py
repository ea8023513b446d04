import numpy as np
import pytest

from coopwalk.multibody import JointSpec, LinkSpec, MultibodyModel, PointSpec


def pendulum(m=1.0, l=1.0, g=9.81):
    """Fixed-pivot pendulum, point mass at the tip, q = 0 hanging."""
    return MultibodyModel(
        links=(LinkSpec("rod", m, (0.0, -l), 0.0, l),),
        joints=(JointSpec("pivot", "revolute", None),),
        gravity_vector=(0.0, -g),
        name="pendulum",
        points={"tip": PointSpec(0, (0.0, -l))},
    )


def double_pendulum(m1=1.0, m2=1.0, l1=1.0, l2=1.0, g=9.81):
    return MultibodyModel(
        links=(LinkSpec("l1", m1, (0.0, -l1), 0.0, l1), LinkSpec("l2", m2, (0.0, -l2), 0.0, l2)),
        joints=(JointSpec("j1", "revolute", None), JointSpec("j2", "revolute", 0, (0.0, -l1), actuated=True)),
        gravity_vector=(0.0, -g),
        name="double_pendulum",
        points={"tip": PointSpec(1, (0.0, -l2)), "elbow": PointSpec(0, (0.0, -l1))},
    )


def point_mass(m=2.0, g=9.81):
    return MultibodyModel(
        links=(LinkSpec("mass", m, (0.0, 0.0), 0.0),),
        joints=(JointSpec("base", "planar-translation", None),),
        gravity_vector=(0.0, -g),
        name="point_mass",
        points={"c": PointSpec(0)},
    )


@pytest.fixture(scope="session")
def dog():
    from coopwalk.walker import load_walker

    return load_walker("dog")


@pytest.fixture(scope="session")
def human():
    from coopwalk.walker import load_walker

    return load_walker("human")


@pytest.fixture(scope="session")
def pair(dog, human):
    from coopwalk.complex import LeashedPair

    return LeashedPair(dog, human)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ----------------------------------------------------------------- acceptance report

ACCEPTANCE_LINES: list = []


def acceptance_line(number: int, ok: bool, detail: str) -> str:
    line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

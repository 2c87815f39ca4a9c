"""Shared fixtures; the expensive kernel solves are session-scoped."""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))  # for oracles.py

from rdetc.kernels import gain_from_kernel, solve_inverse_kernel, solve_kernel
from rdetc.profiles import ReactionProfile

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "..", "scenarios")


def scenario_path(name):
    return os.path.abspath(os.path.join(SCENARIO_DIR, name))


@pytest.fixture(scope="session")
def sec6_profile():
    return ReactionProfile.chebyshev(50.0, 8.0)


@pytest.fixture(scope="session")
def const1_kernel():
    return solve_kernel(ReactionProfile.constant(1.0), 1.0, 101)


@pytest.fixture(scope="session")
def const5_kernel():
    return solve_kernel(ReactionProfile.constant(5.0), 1.0, 101)


@pytest.fixture(scope="session")
def const1_inverse(const1_kernel):
    return solve_inverse_kernel(const1_kernel)


@pytest.fixture(scope="session")
def sec6_kernel_101(sec6_profile):
    return solve_kernel(sec6_profile, 1.0, 101)


@pytest.fixture(scope="session")
def sec6_kernel_201(sec6_profile):
    return solve_kernel(sec6_profile, 1.0, 201)


@pytest.fixture(scope="session")
def sec6_gain_101(sec6_kernel_101, sec6_profile):
    return gain_from_kernel(sec6_kernel_101, 10.0, 1.0, sec6_profile)


@pytest.fixture(scope="session")
def sec6_prepared():
    """Fully prepared reference run (kernels, gain, trigger, theory)."""
    from rdetc.scenario import parse_scenario, prepare_run
    scn = parse_scenario(scenario_path("paper_sec6.yaml"))
    return prepare_run(scn)


@pytest.fixture(scope="session")
def sec6_trace(sec6_prepared):
    from rdetc.scenario import run_prepared
    return run_prepared(sec6_prepared)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)

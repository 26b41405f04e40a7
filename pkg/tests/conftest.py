import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=40, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("stress", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from bnbtransfer.model import (  # noqa: E402
    CloudRanScenario, cloudran_instance, gen_cloudran_instance, gen_toy_milp,
)
from bnbtransfer.relax import SolveCache  # noqa: E402


@pytest.fixture
def cache():
    return SolveCache()


@pytest.fixture(scope="session")
def small_cloudran():
    """A 4-RRH, 2-user network that is feasible with every RRH on."""
    return gen_cloudran_instance(7, 4, 2, 1, 4.0)


@pytest.fixture(scope="session")
def toy_instances():
    return [gen_toy_milp(s, 3, 3) for s in range(6)]


def single_link_scenario(h=1.0, gamma=1.0, cap=2.0, eta=1.0, fronthaul=6.0):
    """One RRH with one antenna serving one user through a scalar channel ``h``."""
    return CloudRanScenario(
        L=1, K=1, N=1, rrh_positions=np.zeros((1, 2)), mu_positions=np.ones((1, 2)),
        H=np.array([[h]], dtype=complex), noise_power=1.0, sinr_target=gamma,
        fronthaul_powers=np.array([fronthaul]), per_rrh_power_cap=cap, amp_efficiency=eta,
        region_halfwidth=10.0,
    )


def single_link_instance(**kw):
    return cloudran_instance(single_link_scenario(**kw), "single-link")


# one (number, verdict, detail) entry per acceptance criterion, filled by test_acceptance
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

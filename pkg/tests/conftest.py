import numpy as np
import pytest
from hypothesis import settings

from hubats.hub import ArmDistribution, HubInstance, QueryProfile, Teacher, UtilityFunction

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_hub(utility=(8.0, 2.0, 0.0), arms=((0.5, 0.3, 0.2), (0.25, 0.5, 0.25), (0.2, 0.2, 0.6)),
             betas=(0.0, 0.01, 50.0), costs=None, gamma=0.99, u_range=(0.0, 10.0)):
    n = len(utility)
    costs = costs or (0.0,) * len(betas)
    return HubInstance(
        tuple("ABCDEFG"[:n]),
        UtilityFunction(utility, *u_range),
        tuple(ArmDistribution(p) for p in arms),
        tuple(Teacher(b, c) for b, c in zip(betas, costs)),
        QueryProfile.uniform(n),
        gamma,
    )


@pytest.fixture
def hub():
    return make_hub()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

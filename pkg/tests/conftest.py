import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from trajopt.core import ControlProblem  # noqa: E402
from trajopt.costs import QuadraticCost, ZeroCost  # noqa: E402
from trajopt.dynamics import Dynamics, LinearDynamics  # noqa: E402

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


class AdditiveDynamics(Dynamics):
    """``x + u (+ w)``; state and control share a dimension."""

    def __init__(self, d, noisy=False):
        self.state_dim = self.control_dim = d
        self.noise_dim = d if noisy else 0

    def step(self, x, u, w=None):
        out = np.asarray(x, dtype=float) + u
        return out if w is None or not self.noise_dim else out + w


def identity_problem(tau, d=1, final=None, control=None, noisy=False, x0=None):
    dyn = AdditiveDynamics(d, noisy)
    final = final if final is not None else QuadraticCost(np.eye(d))
    control = control if control is not None else ZeroCost(d)
    x0 = np.zeros(d) if x0 is None else x0
    return ControlProblem.time_invariant(x0, dyn, tau, final_cost=final, control_cost=control)


def linear_problem(A, B, tau, Q, R, x0, E=None, N=None, running=True):
    dyn = LinearDynamics(A, B, E=E, N=N)
    cost = QuadraticCost(Q)
    return ControlProblem.time_invariant(x0, dyn, tau, final_cost=cost,
                                         control_cost=QuadraticCost(R),
                                         running_cost=cost if running else None)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

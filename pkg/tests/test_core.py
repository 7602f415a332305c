import math

import numpy as np
import pytest
from conftest import AdditiveDynamics, identity_problem, linear_problem
from hypothesis import given
from hypothesis import strategies as st

from trajopt.core import (
    ControlProblem,
    as_command,
    batch_objective,
    monte_carlo_objective,
    noisy_rollout,
    objective,
    rollout,
)
from trajopt.costs import QuadraticCost, ZeroCost, pseudo_huber
from trajopt.dynamics import Dynamics, LinearDynamics
from trajopt.envs import PendulumParams, pendulum_problem
from trajopt.errors import DeterministicProblemError, DimensionError, DivergedTrajectoryError


def test_rollout_additive_chain():
    P = identity_problem(2)
    np.testing.assert_array_equal(rollout(P, [[1.0], [1.0]]), [[1.0], [2.0]])


def test_rollout_pendulum_equilibrium():
    P = pendulum_problem()
    assert np.all(rollout(P, P.zero_command()) == 0.0)


def test_rollout_pendulum_matches_hand_stepped_recursion():
    prm = PendulumParams(horizon=5)
    P = pendulum_problem(prm)
    dl = prm.delta
    th, om = 0.0, 0.0
    expected = []
    for _ in range(5):
        acc = -prm.g_acc / prm.length * math.sin(th) - prm.friction / (prm.mass * prm.length**2) * om \
            + 1.0 / (prm.mass * prm.length**2)
        th, om = th + dl * om, om + dl * acc
        expected.append((th, om))
    np.testing.assert_allclose(rollout(P, np.ones((5, 1))), expected, rtol=0, atol=1e-14)


class _Blowup(Dynamics):
    state_dim = control_dim = 1

    def step(self, x, u, w=None):
        with np.errstate(over="ignore"):
            return x * 1e200 + u


def test_rollout_reports_diverged_step():
    P = ControlProblem.time_invariant([1.0], _Blowup(), 4, final_cost=QuadraticCost(np.eye(1)),
                                      control_cost=ZeroCost(1))
    with pytest.raises(DivergedTrajectoryError) as exc:
        rollout(P, P.zero_command())
    assert exc.value.t == 2


def test_rollout_is_repeatable(rng):
    P = pendulum_problem()
    u = rng.standard_normal((100, 1))
    np.testing.assert_array_equal(rollout(P, u), rollout(P, u))


def test_command_shape_checked():
    P = identity_problem(3)
    with pytest.raises(DimensionError):
        rollout(P, np.zeros(4))
    assert as_command(P, np.zeros(3)).shape == (3, 1)


def test_problem_dimension_validation():
    with pytest.raises(DimensionError):
        ControlProblem([0.0, 0.0], [AdditiveDynamics(1)], [QuadraticCost(np.eye(1))], [ZeroCost(1)])
    with pytest.raises(DimensionError):
        ControlProblem([0.0], [AdditiveDynamics(1)] * 2, [QuadraticCost(np.eye(1))], [ZeroCost(1)] * 2)
    with pytest.raises(DimensionError):
        ControlProblem([0.0], [], [], [])


def test_noisy_rollout_zero_noise_equals_rollout(rng):
    A = 0.9 * np.eye(2)
    P = linear_problem(A, np.ones((2, 1)), 6, np.eye(2), np.eye(1), [1.0, -1.0], E=np.eye(2))
    u = rng.standard_normal((6, 1))
    np.testing.assert_array_equal(noisy_rollout(P, u, np.zeros((6, 2))), rollout(P, u))


def test_noisy_rollout_additive_scalar():
    P = identity_problem(1, noisy=True)
    np.testing.assert_array_equal(noisy_rollout(P, [[1.0]], [[2.0]]), [[3.0]])


def test_noisy_rollout_matches_dense_recursion(rng):
    d, p, q, tau = 3, 2, 2, 5
    A = rng.standard_normal((d, d)) * 0.5
    B = rng.standard_normal((d, p))
    E = rng.standard_normal((d, q))
    x0 = rng.standard_normal(d)
    P = linear_problem(A, B, tau, np.eye(d), np.eye(p), x0, E=E)
    u = rng.standard_normal((tau, p))
    w = rng.standard_normal((tau, q))
    # x = M x0 + L_u u + L_w w with block lower-triangular matrices
    Lu = np.zeros((tau * d, tau * p))
    Lw = np.zeros((tau * d, tau * q))
    M = np.zeros((tau * d, d))
    for t in range(tau):
        M[t * d:(t + 1) * d] = np.linalg.matrix_power(A, t + 1)
        for s in range(t + 1):
            Ap = np.linalg.matrix_power(A, t - s)
            Lu[t * d:(t + 1) * d, s * p:(s + 1) * p] = Ap @ B
            Lw[t * d:(t + 1) * d, s * q:(s + 1) * q] = Ap @ E
    dense = (M @ x0 + Lu @ u.ravel() + Lw @ w.ravel()).reshape(tau, d)
    np.testing.assert_allclose(noisy_rollout(P, u, w), dense, atol=1e-12)


def test_objective_zero_costs(rng):
    P = identity_problem(3, final=ZeroCost(1))
    assert objective(P, rng.standard_normal((3, 1))) == 0.0


def test_objective_arithmetic():
    P = identity_problem(1, final=QuadraticCost(np.eye(1)), control=QuadraticCost(np.eye(1)))
    assert objective(P, [[2.0]]) == 4.0


def test_objective_pendulum_zero_command_is_pi_squared():
    P = pendulum_problem()
    assert objective(P, P.zero_command()) == pytest.approx(math.pi**2, rel=1e-14)


def test_batch_objective_matches_loop(rng):
    for P in (pendulum_problem(horizon=20), identity_problem(4, d=2)):
        U = rng.standard_normal((5, P.horizon, P.control_dim))
        np.testing.assert_allclose(batch_objective(P, U), [objective(P, u) for u in U], rtol=1e-13)


def test_batch_objective_flags_divergence():
    P = ControlProblem.time_invariant([1.0], _Blowup(), 4, final_cost=QuadraticCost(np.eye(1)),
                                      control_cost=ZeroCost(1))
    assert batch_objective(P, np.zeros((2, 4, 1)))[0] == np.inf


def _scalar_noise_problem(gain):
    dyn = LinearDynamics([[0.0]], [[1.0]], E=[[gain]])
    return ControlProblem([0.0], [dyn], [QuadraticCost(np.zeros((1, 1)), linear=[1.0])], [ZeroCost(1)])


def test_monte_carlo_zero_gain():
    P = _scalar_noise_problem(0.0)
    mean, err = monte_carlo_objective(P, [[0.7]], 50, seed=1)
    assert mean == pytest.approx(objective(P, [[0.7]]), abs=1e-15)
    assert err == 0.0


def test_monte_carlo_clt_bound():
    P = _scalar_noise_problem(1.0)
    mean, err = monte_carlo_objective(P, [[0.3]], 100_000, seed=3)
    assert abs(mean - 0.3) <= 4 * 10**-2.5
    assert err == pytest.approx(1 / math.sqrt(100_000), rel=0.05)


def test_monte_carlo_reproducible_and_validated():
    P = _scalar_noise_problem(1.0)
    assert monte_carlo_objective(P, [[0.1]], 100, seed=9) == monte_carlo_objective(P, [[0.1]], 100, seed=9)
    with pytest.raises(ValueError):
        monte_carlo_objective(P, [[0.1]], 0)
    with pytest.raises(DeterministicProblemError):
        monte_carlo_objective(identity_problem(1), [[0.1]], 10)


def test_time_invariant_builder():
    P = identity_problem(4)
    assert P.horizon == 4 and P.final_state_only and P.is_quadratic
    assert P.zero_command().shape == (4, 1)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_cost_hessians_psd(x):
    x = np.array(x)
    for c in (QuadraticCost(np.diag([1.0, 0.0, 2.0]), target=[1, 2, 3]), pseudo_huber(3, 0.5)):
        H = c.hessian(x)
        np.testing.assert_allclose(H, H.T)
        assert np.linalg.eigvalsh(H).min() >= -1e-12
        e = 1e-6
        fd = [(c.value(x + e * np.eye(3)[i]) - c.value(x - e * np.eye(3)[i])) / (2 * e) for i in range(3)]
        np.testing.assert_allclose(c.gradient(x), fd, atol=1e-6)


def test_quadratic_cost_value():
    c = QuadraticCost(2 * np.eye(2), target=[1.0, 0.0], linear=[0.0, 1.0], constant=3.0)
    assert c.value(np.array([2.0, 1.0])) == pytest.approx(1.0 + 1.0 + 1.0 + 3.0)
    assert c.value_batch(np.array([[2.0, 1.0], [1.0, 0.0]])).tolist() == pytest.approx([6.0, 3.0])
    with pytest.raises(ValueError):
        QuadraticCost(np.ones((2, 3)))

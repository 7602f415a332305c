import math

import numpy as np
import pytest
from conftest import identity_problem
from hypothesis import given
from hypothesis import strategies as st
from oracles import dense_gn_step, lq_optimum

from trajopt.autodiff import OracleCounter, gradient, record
from trajopt.core import ControlProblem, objective
from trajopt.costs import QuadraticCost
from trajopt.dynamics import Dynamics, LinearDynamics
from trajopt.envs import pendulum_problem, random_lq_problem, two_link_arm_problem
from trajopt.errors import UnsupportedStructureError
from trajopt.steps import (
    StepReport,
    ddp_step,
    gn_step_dual,
    ilqg_step,
    ilqr_step,
    model_step,
    tassa_ilqg_step,
)


@pytest.fixture(scope="module")
def pendulum():
    return pendulum_problem()


def swing_command(problem, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal((problem.horizon, problem.control_dim))


class NoCurvature(Dynamics):
    """Wraps a system and reports zero second derivatives."""

    has_hessians = True

    def __init__(self, base):
        self.base = base
        self.state_dim, self.control_dim, self.noise_dim = base.state_dim, base.control_dim, 0

    def step(self, x, u, w=None):
        return self.base.step(x, u)

    def jacobians(self, x, u):
        return self.base.jacobians(x, u)

    def hessians(self, x, u):
        d, p = self.state_dim, self.control_dim
        return np.zeros((d, d, d)), np.zeros((p, p, d)), np.zeros((p, d, d))


# ----------------------------------------------------------------- ilqr_step


@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("which", ["pendulum", "random_lq"])
def test_ilqr_step_equals_dense_gauss_newton(gamma, which, pendulum):
    if which == "pendulum":
        problem, u = pendulum, swing_command(pendulum)
    else:
        problem = random_lq_problem(10, 4, 3, seed=3)
        u = swing_command(problem, 1)
    tape = record(problem, u)
    v = ilqr_step(problem, u, gamma)
    np.testing.assert_allclose(v, dense_gn_step(tape, problem, gamma), atol=1e-8)


def test_ilqr_step_on_lq_problem_is_one_shot():
    problem = random_lq_problem(8, 3, 2, seed=11)
    u = swing_command(problem, 2)
    u_star, f_star = lq_optimum(problem)
    np.testing.assert_allclose(u + ilqr_step(problem, u), u_star, atol=1e-9)
    assert objective(problem, u + ilqr_step(problem, u)) == pytest.approx(f_star, rel=1e-10)


def test_tiny_gamma_gives_gradient_step(pendulum):
    u = swing_command(pendulum, 4)
    gamma = 1e-8
    g = gradient(pendulum, u)
    v = ilqr_step(pendulum, u, gamma)
    assert np.linalg.norm(v + gamma * g) <= 1e-6 * gamma * np.linalg.norm(g)


@given(seed=st.integers(0, 10_000), gamma=st.sampled_from([1e-2, 1.0, 1e2, 1e4]))
def test_regularized_step_is_descent_direction(seed, gamma):
    problem = pendulum_problem(horizon=30)
    u = swing_command(problem, seed)
    v = ilqr_step(problem, u, gamma)
    g = gradient(problem, u)
    assert float(np.sum(v * g)) < 0


def test_model_step_reports_predicted_decrease(pendulum):
    u = swing_command(pendulum, 5)
    tape = record(pendulum, u)
    rep = model_step(pendulum, tape, 10.0)
    assert isinstance(rep, StepReport)
    assert rep.step_size == 10.0
    assert rep.model_decrease > 0
    assert rep.model_value == pytest.approx(rep.objective_before - rep.model_decrease)
    np.testing.assert_array_equal(rep.command, u + rep.direction)


# ----------------------------------------------------------------- ilqg_step


@pytest.mark.parametrize("gamma", [math.inf, 1.0])
def test_ilqg_without_noise_is_ilqr_bit_for_bit(gamma, pendulum):
    u = swing_command(pendulum, 6)
    np.testing.assert_array_equal(ilqg_step(pendulum, u, gamma), ilqr_step(pendulum, u, gamma))


def test_ilqg_with_zero_noise_maps_is_ilqr(rng):
    A, B = rng.standard_normal((3, 3)) / 2, rng.standard_normal((3, 2))
    noisy = LinearDynamics(A, B, E=np.zeros((3, 2)), N=np.zeros((2, 3, 2)))
    plain = LinearDynamics(A, B)
    kw = dict(final_cost=QuadraticCost(np.eye(3)), control_cost=QuadraticCost(np.eye(2)))
    P_noisy = ControlProblem.time_invariant(np.ones(3), noisy, 6, **kw)
    P_plain = ControlProblem.time_invariant(np.ones(3), plain, 6, **kw)
    u = rng.standard_normal((6, 2))
    np.testing.assert_array_equal(ilqg_step(P_noisy, u), ilqr_step(P_plain, u))


def test_additive_noise_keeps_the_direction(rng):
    dyn = LinearDynamics(np.eye(2), np.eye(2), E=np.eye(2))
    problem = ControlProblem.time_invariant([1.0, -2.0], dyn, 5, final_cost=QuadraticCost(np.eye(2)),
                                            control_cost=QuadraticCost(0.3 * np.eye(2)))
    u = rng.standard_normal((5, 2))
    np.testing.assert_allclose(ilqg_step(problem, u, 2.0), ilqr_step(problem, u, 2.0), atol=1e-12)


def test_ilqg_scalar_bilinear_noise():
    """x1 = u0 (1 + w0), x2 = x1 + u1 (1 + w1): E f = (u0 + u1)^2/2 + u0^2 + u1^2, minimized at 0.

    Without the noise model the step lands on the deterministic optimum
    instead, which is different.
    """
    dyn = LinearDynamics([[1.0]], [[1.0]], E=[[0.0]], N=[[[1.0]]])
    from trajopt.costs import ZeroCost

    P = ControlProblem([0.0], [dyn, dyn], [ZeroCost(1), QuadraticCost([[1.0]])],
                       [QuadraticCost([[1.0]])] * 2)
    u = np.array([[0.7], [-1.3]])
    np.testing.assert_allclose(u + ilqg_step(P, u), 0.0, atol=1e-14)
    # deterministic model: (u0 + u1)^2/2 + (u0^2 + u1^2)/2 also minimized at 0, but through a
    # different Newton system; a non-zero offset separates the two
    v = ilqg_step(P, u, gamma=1.0)
    w = ilqr_step(P, u, gamma=1.0)
    assert np.max(np.abs(v - w)) > 1e-3


# -------------------------------------------------------- feedback steps


def test_tassa_step_decreases_pendulum(pendulum):
    u = pendulum.zero_command()
    rep = tassa_ilqg_step(pendulum, u, report=True)
    assert rep.objective_after < objective(pendulum, u)
    assert objective(pendulum, rep.command) == pytest.approx(rep.objective_after, rel=1e-14)


def test_ddp_step_decreases_pendulum(pendulum):
    u = pendulum.zero_command()
    u1 = ddp_step(pendulum, u)
    assert objective(pendulum, u1) < objective(pendulum, u)


@pytest.mark.parametrize("seed", [0, 1])
def test_ddp_equals_tassa_when_curvature_is_removed(seed, pendulum):
    flat = ControlProblem(pendulum.x0, [NoCurvature(phi) for phi in pendulum.dynamics],
                          pendulum.state_costs, pendulum.control_costs)
    u = swing_command(flat, seed, 0.5)
    np.testing.assert_allclose(ddp_step(flat, u), tassa_ilqg_step(flat, u), atol=1e-12, rtol=1e-12)


def test_ddp_step_on_lq_reaches_optimum():
    problem = random_lq_problem(8, 3, 2, seed=5)
    u = swing_command(problem, 3)
    u_star, _ = lq_optimum(problem)
    rep = ddp_step(problem, u, report=True)
    assert rep.step_size == 1.0
    np.testing.assert_allclose(rep.command, u_star, atol=1e-9)


def test_tassa_step_on_lq_equals_ilqr_update():
    problem = random_lq_problem(8, 3, 2, seed=9)
    u = swing_command(problem, 8)
    rep = tassa_ilqg_step(problem, u, report=True)
    assert rep.step_size == 1.0
    np.testing.assert_allclose(rep.command, u + ilqr_step(problem, u), atol=1e-10)


def test_feedback_steps_fix_stationary_lq_point():
    problem = random_lq_problem(6, 2, 2, seed=2)
    u_star, _ = lq_optimum(problem)
    np.testing.assert_allclose(tassa_ilqg_step(problem, u_star), u_star, atol=1e-10)
    np.testing.assert_allclose(ddp_step(problem, u_star), u_star, atol=1e-10)


def test_ddp_shifted_variant_runs(pendulum):
    u = swing_command(pendulum, 1, 0.5)
    assert objective(pendulum, ddp_step(pendulum, u, shifted=True)) <= objective(pendulum, u)


# ----------------------------------------------------------- gn_step_dual


@pytest.mark.parametrize("gamma", [0.1, 1.0, 100.0])
def test_dual_step_matches_primal_on_pendulum(gamma, pendulum):
    u = swing_command(pendulum, 7)
    counter = OracleCounter()
    rep = gn_step_dual(pendulum, u, gamma, counter=counter, report=True)
    np.testing.assert_allclose(rep.direction, ilqr_step(pendulum, u, gamma), atol=1e-6)
    assert rep.oracle_calls == counter.autodiff_calls <= 5
    assert rep.inner_iterations <= 2


@given(seed=st.integers(0, 10_000), d=st.integers(1, 4), rank=st.booleans())
def test_dual_step_call_bound(seed, d, rank):
    problem = random_lq_problem(7, d, 2, seed=seed, final_only=True)
    if rank and d > 1:
        # singular final Hessian exercises the active-subspace path
        L = np.random.default_rng(seed).standard_normal((d, d - 1))
        h = list(problem.state_costs)
        h[-1] = QuadraticCost(L @ L.T, linear=np.ones(d))
        problem = ControlProblem(problem.x0, problem.dynamics, h, problem.control_costs)
    u = swing_command(problem, seed)
    counter = OracleCounter()
    v = gn_step_dual(problem, u, 0.5, counter=counter)
    assert counter.autodiff_calls <= 2 * d + 1
    np.testing.assert_allclose(v, ilqr_step(problem, u, 0.5), atol=1e-6)


def test_dual_step_scalar_state_needs_three_calls():
    problem = random_lq_problem(9, 1, 2, seed=4, final_only=True)
    counter = OracleCounter()
    rep = gn_step_dual(problem, swing_command(problem), 1.0, counter=counter, report=True)
    assert rep.inner_iterations == 1
    assert counter.autodiff_calls <= 3


def test_dual_step_is_zero_at_stationary_point():
    problem = identity_problem(6, d=2)
    v = gn_step_dual(problem, problem.zero_command(), 1.0)
    assert np.all(v == 0)


def test_dual_step_rejects_running_costs():
    problem = random_lq_problem(5, 2, 1, seed=0)
    with pytest.raises(UnsupportedStructureError):
        gn_step_dual(problem, problem.zero_command(), 1.0)


def test_dual_step_needs_finite_gamma(pendulum):
    with pytest.raises(ValueError):
        gn_step_dual(pendulum, pendulum.zero_command(), math.inf)


def test_dual_step_on_arm_matches_primal():
    problem = two_link_arm_problem(horizon=40)
    u = swing_command(problem, 3, 0.1)
    counter = OracleCounter()
    v = gn_step_dual(problem, u, 10.0, counter=counter)
    np.testing.assert_allclose(v, ilqr_step(problem, u, 10.0), atol=1e-6)
    assert counter.autodiff_calls <= 9

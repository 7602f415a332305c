import math

import numpy as np
import pytest
from conftest import linear_problem
from hypothesis import given
from hypothesis import strategies as st
from oracles import best_affine_policy, closed_loop_expected_cost, dense_kkt, expected_objective

from trajopt.autodiff import record
from trajopt.errors import DimensionError, IllConditionedSubproblemError
from trajopt.lqr import LqSubproblem, lq_backward, lq_rollout, lq_solve, lqg_backward, riccati
from trajopt.steps import build_subproblem


def random_sub(rng, tau, d, p, gamma=math.inf, rank_deficient=True, noise_q=0, bilinear=True):
    phi_x = rng.standard_normal((tau, d, d)) / math.sqrt(d)
    phi_u = rng.standard_normal((tau, p, d))
    H = []
    for t in range(tau):
        r = max(1, d - 1) if rank_deficient and t % 2 else d
        L = rng.standard_normal((d, r))
        H.append(L @ L.T)
    G = []
    for _ in range(tau):
        L = rng.standard_normal((p, p))
        G.append(L @ L.T + 0.1 * np.eye(p))
    kw = {}
    if noise_q:
        kw["phi_w"] = rng.standard_normal((tau, noise_q, d))
        kw["psi"] = rng.standard_normal((tau, noise_q, d, p)) if bilinear else None
    return LqSubproblem(phi_x, phi_u, rng.standard_normal((tau, d)), np.array(H),
                        rng.standard_normal((tau, p)), np.array(G), gamma, **kw)


def test_one_step_bellman_example():
    sub = LqSubproblem([[[1.0]]], [[[1.0]]], [[1.0]], [[[0.0]]], [[0.0]], [[[1.0]]])
    policy, ctg = lq_backward(sub)
    assert policy.K[0, 0, 0] == 0.0 and policy.k[0, 0] == -1.0
    v, y = lq_rollout(sub, policy)
    assert v[0, 0] == -1.0 and y[0, 0] == -1.0
    assert ctg.c_x[1, 0] == 1.0


def test_zero_linear_terms_give_zero_solution(rng):
    sub = random_sub(rng, 6, 3, 2)
    sub = LqSubproblem(sub.phi_x, sub.phi_u, 0 * sub.h_x, sub.H_xx, 0 * sub.g_u, sub.G_uu)
    policy, _ = lq_backward(sub)
    assert np.all(policy.k == 0)
    v, y = lq_rollout(sub, policy)
    assert np.all(v == 0) and np.all(y == 0)


def test_random_instance_matches_dense_kkt(rng):
    sub = random_sub(rng, 8, 3, 2)
    policy, _ = lq_backward(sub)
    v, y = lq_rollout(sub, policy)
    v_ref, y_ref, val_ref = dense_kkt(sub)
    np.testing.assert_allclose(v, v_ref, atol=1e-8)
    np.testing.assert_allclose(y, y_ref, atol=1e-8)
    # feasibility of the roll-out
    y_prev = np.zeros(3)
    for t in range(8):
        np.testing.assert_allclose(y[t], sub.phi_x[t].T @ y_prev + sub.phi_u[t].T @ v[t], atol=1e-12)
        y_prev = y[t]
    assert sub.model_value(v, y) == pytest.approx(val_ref, rel=1e-8, abs=1e-12)


@given(seed=st.integers(0, 2**32 - 1), tau=st.integers(1, 10), d=st.integers(1, 4), p=st.integers(1, 3),
       gamma=st.sampled_from([math.inf, 0.1, 1.0, 10.0]))
def test_dp_matches_kkt_and_cost_to_go_psd(seed, tau, d, p, gamma):
    rng = np.random.default_rng(seed)
    sub = random_sub(rng, tau, d, p, gamma)
    policy, ctg, _ = riccati(sub)
    v, y = lq_rollout(sub, policy)
    v_ref, _, val_ref = dense_kkt(sub)
    np.testing.assert_allclose(v, v_ref, atol=1e-8 * max(1.0, np.abs(v_ref).max()))
    value = sub.model_value(v, y) + 0.5 * sub.inv_gamma * np.sum(v**2)
    assert value == pytest.approx(val_ref, rel=1e-8, abs=1e-10)
    for C in ctg.C_xx:
        np.testing.assert_array_equal(C, C.T)
        assert np.linalg.eigvalsh(C).min() >= -1e-10 * max(1.0, np.abs(C).max())


@given(seed=st.integers(0, 2**32 - 1), g1=st.floats(1e-3, 1e3), ratio=st.floats(1.0, 1e3))
def test_regularization_shrinks_step(seed, g1, ratio):
    rng = np.random.default_rng(seed)
    base = random_sub(rng, 5, 3, 2)
    norms = []
    for gamma in (g1, g1 * ratio):
        sub = LqSubproblem(base.phi_x, base.phi_u, base.h_x, base.H_xx, base.g_u, base.G_uu, gamma)
        norms.append(np.linalg.norm(lq_solve(sub)))
    assert norms[0] <= norms[1] + 1e-10


def test_not_pd_reports_time(rng):
    sub = random_sub(rng, 5, 2, 2)
    G = sub.G_uu.copy()
    G[3] = -np.eye(2) * 1e3
    bad = LqSubproblem(sub.phi_x, sub.phi_u, sub.h_x, sub.H_xx, sub.g_u, G)
    with pytest.raises(IllConditionedSubproblemError) as exc:
        lq_backward(bad)
    assert exc.value.t == 3


def test_subproblem_validation(rng):
    sub = random_sub(rng, 3, 2, 1)
    with pytest.raises(DimensionError):
        LqSubproblem(sub.phi_x, sub.phi_u, sub.h_x[:2], sub.H_xx, sub.g_u, sub.G_uu)
    with pytest.raises(ValueError):
        LqSubproblem(sub.phi_x, sub.phi_u, sub.h_x, sub.H_xx, sub.g_u, sub.G_uu, gamma=0.0)
    with pytest.raises(DimensionError):
        lqg_backward(sub)
    assert sub.horizon == 3 and sub.state_dim == 2 and sub.control_dim == 1
    assert sub.inv_gamma == 0.0


def test_lqg_without_noise_maps_equals_deterministic(rng):
    sub = random_sub(rng, 6, 3, 2, gamma=2.0)
    quiet = LqSubproblem(sub.phi_x, sub.phi_u, sub.h_x, sub.H_xx, sub.g_u, sub.G_uu, 2.0,
                         phi_w=np.zeros((6, 2, 3)), psi=np.zeros((6, 2, 3, 2)))
    p1, c1 = lq_backward(sub)
    p2, c2 = lqg_backward(quiet)
    np.testing.assert_array_equal(p1.K, p2.K)
    np.testing.assert_array_equal(p1.k, p2.k)
    np.testing.assert_array_equal(c1.C_xx, c2.C_xx)


def test_lqg_additive_noise_keeps_policy(rng):
    sub = random_sub(rng, 6, 3, 2, noise_q=2, bilinear=False)
    p1, _ = lq_backward(sub)
    p2, _ = lqg_backward(sub)
    np.testing.assert_allclose(p1.K, p2.K, atol=1e-13)
    np.testing.assert_allclose(p1.k, p2.k, atol=1e-13)


def test_lqg_bilinear_noise_changes_policy(rng):
    sub = random_sub(rng, 4, 2, 2, noise_q=1)
    p1, _ = lq_backward(sub)
    p2, c2 = lqg_backward(sub)
    assert np.abs(p1.k - p2.k).max() > 1e-6
    for C in c2.C_xx:
        assert np.linalg.eigvalsh(C).min() >= -1e-10


def _noisy_linear(rng, tau, d, p, q):
    A = rng.standard_normal((d, d)) * 0.8
    B = rng.standard_normal((d, p))
    E = rng.standard_normal((d, q))
    N = rng.standard_normal((p, q, d))
    return linear_problem(A, B, tau, np.eye(d), np.eye(p) * 0.5, rng.standard_normal(d), E=E, N=N)


@pytest.mark.parametrize("tau,d,p,q", [(2, 1, 1, 1), (3, 1, 1, 1), (2, 2, 1, 1)])
def test_lqg_policy_matches_expectation_oracle(tau, d, p, q, rng):
    """Bilinear-noise linear dynamics: the DP policy is the best affine feedback policy."""
    P = _noisy_linear(rng, tau, d, p, q)
    u = rng.standard_normal((tau, p))
    tape = record(P, u, noise=True)
    sub = build_subproblem(P, tape, noise=True)
    policy, _ = lqg_backward(sub)
    K_ref, k_ref, best = best_affine_policy(P, tape.states, u)
    if d == 1:
        # for d > q the random part of y_t spans a subspace and the policy is not unique
        np.testing.assert_allclose(policy.k, k_ref, atol=1e-6)
        np.testing.assert_allclose(policy.K[1:], K_ref[1:], atol=1e-6)
    value = closed_loop_expected_cost(P, tape.states, u, policy.K, policy.k)
    assert value == pytest.approx(best, rel=1e-10, abs=1e-12)


def test_lqg_differs_from_open_loop_optimum(rng):
    """With control-dependent noise, feedback matters: the open-loop optimum is worse."""
    from oracles import quadratic_minimizer

    P = _noisy_linear(rng, 2, 1, 1, 1)
    u = rng.standard_normal((2, 1))
    tape = record(P, u, noise=True)
    sub = build_subproblem(P, tape, noise=True)
    policy, _ = lqg_backward(sub)
    dp_value = closed_loop_expected_cost(P, tape.states, u, policy.K, policy.k)
    u_open = quadratic_minimizer(lambda c: expected_objective(P, c.reshape(2, 1)), 2, center=u)
    assert dp_value <= expected_objective(P, u_open.reshape(2, 1)) + 1e-12


def test_lqg_scalar_hand_computed():
    """tau=2, d=p=q=1: x1 = u0 (1 + w0), x2 = x1 + u1 (1 + w1), h_2 = x^2/2, g = u^2/2."""
    from trajopt.core import ControlProblem
    from trajopt.costs import QuadraticCost, ZeroCost
    from trajopt.dynamics import LinearDynamics

    dyn = LinearDynamics([[1.0]], [[1.0]], E=[[0.0]], N=[[[1.0]]])
    P = ControlProblem([0.0], [dyn, dyn], [ZeroCost(1), QuadraticCost([[1.0]])],
                       [QuadraticCost([[1.0]])] * 2)
    # E f = 1/2 E (u0 (1+w0) + u1 (1+w1))^2 + (u0^2 + u1^2)/2 = (u0 + u1)^2/2 + u0^2 + u1^2
    # which is minimized at zero; start elsewhere and check one ILQG step lands there.
    u = np.array([[0.7], [-1.3]])
    tape = record(P, u, noise=True)
    sub = build_subproblem(P, tape, noise=True)
    v = lq_solve_noise(sub)
    np.testing.assert_allclose(u + v, 0.0, atol=1e-14)
    expected = 0.5 * (0.7 - 1.3) ** 2 + 0.7**2 + 1.3**2
    assert expected_objective(P, u) == pytest.approx(expected, rel=1e-14)


def lq_solve_noise(sub):
    policy, _ = lqg_backward(sub)
    return lq_rollout(sub, policy)[0]

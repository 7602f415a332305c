"""Single-iteration step oracles on nonlinear control problems."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ForwardTape,
    OracleCounter,
    adjoint_product,
    control_cost_gradients,
    record,
    state_cost_gradients,
    tangent_product,
)
from .core import ControlProblem, as_command, control_cost, state_cost
from .errors import NoDecreaseError, UnsupportedStructureError
from .lqr import FeedbackPolicy, LqSubproblem, lq_rollout, riccati


@dataclass
class StepReport:
    """Outcome of one step.

    ``direction`` is ``command - u``. ``model_decrease`` is the decrease of the
    quadratic model predicted at the step (proximal term excluded), or
    ``f(u) - f(command)`` for steps that roll out on the true dynamics.
    ``step_size`` is the line-search ``alpha`` or the regularization ``gamma``.
    """

    direction: np.ndarray
    command: np.ndarray
    model_decrease: float
    step_size: float
    inner_iterations: int = 0
    oracle_calls: int = 0
    objective_before: float = math.nan
    objective_after: float = math.nan
    model_value: float = math.nan
    lam_max: float = 0.0


def tape_objective(problem: ControlProblem, tape: ForwardTape) -> float:
    """``f(u)`` from the states already stored on the tape."""
    return state_cost(problem, tape.states[1:]) + control_cost(problem, tape.command)


def expand_costs(problem: ControlProblem, tape: ForwardTape):
    """Gradients and Hessians of ``h_t`` and ``g_t`` along the tape."""
    tau, d, p = problem.horizon, problem.state_dim, problem.control_dim
    h_x = state_cost_gradients(problem, tape.states)
    g_u = control_cost_gradients(problem, tape.command)
    H_xx = np.zeros((tau, d, d))
    G_uu = np.zeros((tau, p, p))
    for t, h in enumerate(problem.state_costs):
        if not h.is_zero:
            H_xx[t] = h.hessian(tape.states[t + 1])
    for t, g in enumerate(problem.control_costs):
        if not g.is_zero:
            G_uu[t] = g.hessian(tape.command[t])
    return h_x, H_xx, g_u, G_uu


def build_subproblem(problem: ControlProblem, tape: ForwardTape, gamma: float = math.inf,
                     noise: bool = False) -> LqSubproblem:
    """Linear-quadratic model of the problem around the tape."""
    h_x, H_xx, g_u, G_uu = expand_costs(problem, tape)
    kw = dict(phi_w=tape.phi_w, psi=tape.psi) if noise else {}
    return LqSubproblem(tape.phi_x, tape.phi_u, h_x, H_xx, g_u, G_uu, gamma, **kw)


def _count_lq(counter: OracleCounter | None):
    if counter is not None:
        counter.lq_solves += 1


def model_step(problem: ControlProblem, tape: ForwardTape, gamma: float = math.inf,
               noise: bool = False, f_u: float | None = None) -> StepReport:
    """Minimize the (regularized) quadratic model around ``tape``.

    With ``noise=True`` the expected model under Gaussian noise is used. The
    report carries ``model_value = c_f(u + v; u)``, the model objective
    without the proximal term.
    """
    sub = build_subproblem(problem, tape, gamma, noise)
    policy, _, _ = riccati(sub, noise=noise)
    _count_lq(tape.counter)
    v, y = lq_rollout(sub, policy)
    f_u = tape_objective(problem, tape) if f_u is None else f_u
    delta = sub.model_value(v, y)
    return StepReport(v, tape.command + v, -delta, gamma, objective_before=f_u,
                      model_value=f_u + delta)


def ilqr_step(problem: ControlProblem, u, gamma: float = math.inf,
              counter: OracleCounter | None = None) -> np.ndarray:
    """Direction ``v`` minimizing the linearized model plus ``|v|^2 / (2 gamma)``.

    ``gamma = inf`` gives the plain ILQR (Gauss-Newton) direction.
    """
    tape = record(problem, u, counter=counter)
    return model_step(problem, tape, gamma).direction


def ilqg_step(problem: ControlProblem, u, gamma: float = math.inf,
              counter: OracleCounter | None = None) -> np.ndarray:
    """Like :func:`ilqr_step` on the expected model under ``w ~ N(0, I)``.

    Assumes ``d2 phi / dx2``, ``d2 phi / dx dw`` and ``d2 phi / du dx`` vanish;
    the caller is responsible for that.
    """
    tape = record(problem, u, noise=True, counter=counter)
    return model_step(problem, tape, gamma, noise=True).direction


def _feedback_rollout(problem: ControlProblem, tape: ForwardTape, policy: FeedbackPolicy,
                      f_u: float, rho_minus: float, max_trials: int):
    """``u+_t = u_t + K_t (x+_t - x_t) + alpha k_t`` on the true dynamics.

    ``alpha`` starts at 1 and shrinks by ``rho_minus`` until ``f(u+) <= f(u)``.
    """
    u, xs = tape.command, tape.states
    K, k = policy.K, policy.k
    alpha = 1.0
    for trial in range(1, max_trials + 1):
        if alpha < 1e-12:
            break
        u_new = np.empty_like(u)
        x = xs[0]
        x_new = np.empty_like(xs)
        x_new[0] = x
        ok = True
        for t, phi in enumerate(problem.dynamics):
            u_new[t] = u[t] + K[t] @ (x - xs[t]) + alpha * k[t]
            x = np.asarray(phi.step(x, u_new[t]), dtype=float)
            if not np.all(np.isfinite(x)):
                ok = False
                break
            x_new[t + 1] = x
        if ok:
            f_new = state_cost(problem, x_new[1:]) + control_cost(problem, u_new)
            if f_new <= f_u:
                return u_new, f_new, alpha, trial
        alpha *= rho_minus
    raise NoDecreaseError(f"no decrease after {trial} trials (alpha={alpha:.3g})")


def feedback_step(problem: ControlProblem, tape: ForwardTape, second_order: bool = False,
                  lam0: float = 1e-6, rho_plus: float = 10.0, rho_minus: float = 0.5,
                  max_trials: int = 50, shifted: bool = False, f_u: float | None = None) -> StepReport:
    """Backward pass on ``tape`` followed by a feedback roll-out on the true dynamics.

    ``second_order=False`` is the Tassa-style iLQG step (first-order dynamics
    model). ``second_order=True`` is the DDP step: dynamics curvature is
    contracted with ``c_{t+1}`` (or ``c_{t+1} + C_{t+1} x_{t+1}`` when
    ``shifted``) and ``W_uu`` is regularized by ``lam0 * rho_plus^j`` until it
    factors.
    """
    sub = build_subproblem(problem, tape)
    if second_order:
        if tape.order < 2:
            raise ValueError("DDP needs a tape recorded with order=2")
        shift = tape.states[1:] if shifted else None
        policy, _, lam = riccati(sub, second_order=(tape.fxx, tape.fux, tape.fuu), shift=shift,
                                 lam0=lam0, rho_plus=rho_plus)
    else:
        policy, _, lam = riccati(sub)
    _count_lq(tape.counter)
    f_u = tape_objective(problem, tape) if f_u is None else f_u
    u_new, f_new, alpha, trials = _feedback_rollout(problem, tape, policy, f_u, rho_minus, max_trials)
    return StepReport(u_new - tape.command, u_new, f_u - f_new, alpha, trials,
                      objective_before=f_u, objective_after=f_new,
                      lam_max=float(np.max(lam, initial=0.0)))


def tassa_ilqg_step(problem: ControlProblem, u, rho_minus: float = 0.5, max_trials: int = 50,
                    counter: OracleCounter | None = None, report: bool = False):
    """First-order backward pass, then a feedback roll-out on the true dynamics."""
    tape = record(problem, u, counter=counter)
    rep = feedback_step(problem, tape, rho_minus=rho_minus, max_trials=max_trials)
    return rep if report else rep.command


def ddp_step(problem: ControlProblem, u, lam0: float = 1e-6, rho_plus: float = 10.0,
             rho_minus: float = 0.5, max_trials: int = 50, shifted: bool = False,
             counter: OracleCounter | None = None, report: bool = False):
    """Differential dynamic programming step; see :func:`feedback_step`."""
    tape = record(problem, u, order=2, counter=counter)
    rep = feedback_step(problem, tape, second_order=True, lam0=lam0, rho_plus=rho_plus,
                        rho_minus=rho_minus, max_trials=max_trials, shifted=shifted)
    return rep if report else rep.command


def gn_step_dual(problem: ControlProblem, u, gamma: float, counter: OracleCounter | None = None,
                 report: bool = False, tol: float = 1e-12):
    """Regularized Gauss-Newton step for a final-state problem, solved in the dual.

    With ``A = grad x_tau(u)`` (``tau*p x d``), ``S = G + I/gamma`` block-diagonal
    and the model ``r(y) = h^T y + 1/2 y^T H y`` of the final cost, the step is
    ``v = -S^{-1}(g + A z)`` where ``z`` solves a ``d``-dimensional SPD system
    by conjugate gradient. Each CG iteration costs one adjoint and one tangent
    product; ``A z`` is accumulated along the iterations so recovering ``v``
    costs nothing more. At most ``2d + 1`` products are used.
    """
    if not problem.final_state_only:
        raise UnsupportedStructureError("gn_step_dual needs a problem with a final-state cost only")
    if not gamma > 0 or math.isinf(gamma):
        raise ValueError("gn_step_dual needs a finite positive gamma")
    u = as_command(problem, u)
    tau, d, p = problem.horizon, problem.state_dim, problem.control_dim
    before = counter.snapshot() if counter is not None else None
    tape = record(problem, u, counter=counter)
    x_tau = tape.states[-1]
    hT = problem.state_costs[-1]
    h = hT.gradient(x_tau)
    H = hT.hessian(x_tau)
    g = control_cost_gradients(problem, u)
    S = np.array([gt.hessian(ut) if not gt.is_zero else np.zeros((p, p))
                  for gt, ut in zip(problem.control_costs, u)]) + np.eye(p) / gamma
    S_inv = np.linalg.inv(S)

    def A(zl):
        zz = np.zeros((tau, d))
        zz[-1] = zl
        return adjoint_product(tape, zz)

    def At_Sinv(w):
        return tangent_product(tape, np.einsum("tab,tb->ta", S_inv, w))[-1]

    evals, U = np.linalg.eigh(0.5 * (H + H.T))
    keep = evals > 1e-12 * max(1.0, float(np.max(np.abs(evals), initial=0.0)))
    # z = z0 + B xi with B = H^{1/2} on its range; the CG operator I + B^T M B
    # has eigenvalues >= 1 whatever the conditioning of H.
    B = U[:, keep] * np.sqrt(evals[keep])
    if np.all(keep):
        z0 = np.zeros(d)
        Az0 = np.zeros((tau, p))
        rhs = (U.T @ h) / np.sqrt(evals) - B.T @ At_Sinv(g)
    else:
        z0 = h
        Az0 = A(h)
        rhs = -B.T @ At_Sinv(g + Az0)

    n = B.shape[1]
    xi = np.zeros(n)
    Az = Az0.copy()
    r = rhs.copy()
    pdir = r.copy()
    rr = float(r @ r)
    scale = max(1.0, math.sqrt(rr))
    it = 0
    while it < n and math.sqrt(rr) > tol * scale:
        A_p = A(B @ pdir)
        q = pdir + B.T @ At_Sinv(A_p)
        step = rr / float(pdir @ q)
        xi += step * pdir
        Az += step * A_p
        r -= step * q
        rr_new = float(r @ r)
        pdir = r + (rr_new / rr) * pdir
        rr = rr_new
        it += 1
    v = -np.einsum("tab,tb->ta", S_inv, g + Az)
    if not report:
        return v
    calls = counter.since(before).autodiff_calls if counter is not None else 0
    return StepReport(v, u + v, math.nan, gamma, it, calls)


__all__ = [
    "StepReport",
    "build_subproblem",
    "expand_costs",
    "model_step",
    "feedback_step",
    "ilqr_step",
    "ilqg_step",
    "tassa_ilqg_step",
    "ddp_step",
    "gn_step_dual",
]

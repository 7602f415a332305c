"""Forward tapes and the automatic-differentiation oracle for trajectory functions.

A tape stores the step-map gradients along one roll-out. Products with the
trajectory Jacobian then cost one linear recursion each and never build the
``tau*p x tau*d`` matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import ControlProblem, as_command, batch_objective, rollout
from .dynamics import fd_step
from .errors import CapabilityError, DimensionError, DivergedTrajectoryError


@dataclass
class OracleCounter:
    """Calls made during one solver run."""

    adjoint_calls: int = 0
    tangent_calls: int = 0
    tape_recordings: int = 0
    lq_solves: int = 0

    @property
    def autodiff_calls(self) -> int:
        return self.adjoint_calls + self.tangent_calls

    @property
    def total(self) -> int:
        return self.adjoint_calls + self.tangent_calls + self.tape_recordings + self.lq_solves

    def snapshot(self) -> "OracleCounter":
        return OracleCounter(self.adjoint_calls, self.tangent_calls, self.tape_recordings, self.lq_solves)

    def since(self, earlier: "OracleCounter") -> "OracleCounter":
        return OracleCounter(
            self.adjoint_calls - earlier.adjoint_calls,
            self.tangent_calls - earlier.tangent_calls,
            self.tape_recordings - earlier.tape_recordings,
            self.lq_solves - earlier.lq_solves,
        )


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ForwardTape:
    """Roll-out of ``command`` with step-map gradients in the gradient convention.

    ``states[0]`` is the initial state, ``states[t]`` is ``x_t``.
    ``phi_x[t]`` is ``grad_x phi_t(x_t, u_t)`` (``d x d``) and ``phi_u[t]``
    is ``grad_u phi_t`` (``p x d``). Second-order tensors (``order == 2``) and
    noise derivatives are ``None`` unless requested.
    """

    problem: ControlProblem
    command: np.ndarray
    states: np.ndarray
    phi_x: np.ndarray
    phi_u: np.ndarray
    order: int = 1
    fxx: np.ndarray | None = None
    fuu: np.ndarray | None = None
    fux: np.ndarray | None = None
    phi_w: np.ndarray | None = None
    psi: np.ndarray | None = None
    counter: OracleCounter | None = field(default=None, compare=False)

    @property
    def trajectory(self) -> np.ndarray:
        return self.states[1:]

    @property
    def horizon(self) -> int:
        return self.command.shape[0]


def record(problem: ControlProblem, u, order: int = 1, noise: bool = False,
           counter: OracleCounter | None = None) -> ForwardTape:
    """Roll out ``u`` and store the dynamics derivatives along the way.

    ``order=2`` also stores ``fxx, fuu, fux``. ``noise=True`` stores
    ``grad_w phi`` and the cross derivative ``d2 phi / du dw`` at ``w = 0``,
    rearranged so that ``psi[t, i]`` is the ``d x p`` matrix ``Psi_i``.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    u = as_command(problem, u)
    tau, d, p, q = problem.horizon, problem.state_dim, problem.control_dim, problem.noise_dim
    if order == 2 and not all(phi.has_hessians for phi in problem.dynamics):
        raise CapabilityError("second-order tape requested but dynamics expose no Hessians")
    xs = np.empty((tau + 1, d))
    xs[0] = problem.x0
    xs[1:] = rollout(problem, u)
    phi_x = np.empty((tau, d, d))
    phi_u = np.empty((tau, p, d))
    fxx = fuu = fux = phi_w = psi = None
    if order == 2:
        fxx = np.empty((tau, d, d, d))
        fuu = np.empty((tau, p, p, d))
        fux = np.empty((tau, p, d, d))
    if noise:
        phi_w = np.empty((tau, q, d))
        psi = np.empty((tau, q, d, p))
    for t, phi in enumerate(problem.dynamics):
        jx, ju = phi.jacobians(xs[t], u[t])
        phi_x[t] = jx
        phi_u[t] = ju
        if order == 2:
            fxx[t], fuu[t], fux[t] = phi.hessians(xs[t], u[t])
        if noise:
            phi_w[t] = phi.noise_jacobian(xs[t], u[t])
            psi[t] = np.transpose(phi.uw_hessian(xs[t], u[t]), (1, 2, 0))
    if not (np.all(np.isfinite(phi_x)) and np.all(np.isfinite(phi_u))):
        bad = int(np.argmax(~(np.isfinite(phi_x).all(axis=(1, 2)) & np.isfinite(phi_u).all(axis=(1, 2)))))
        raise DivergedTrajectoryError(bad)
    if counter is not None:
        counter.tape_recordings += 1
    opt = lambda a: None if a is None else _frozen(a)  # noqa: E731
    return ForwardTape(problem, _frozen(u), _frozen(xs), _frozen(phi_x), _frozen(phi_u), order,
                       opt(fxx), opt(fuu), opt(fux), opt(phi_w), opt(psi), counter)


def _blocks(a, n: int, m: int, what: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.size != n * m:
        raise DimensionError(f"{what} has {arr.size} entries, expected {n}x{m}")
    return np.ascontiguousarray(arr.reshape(n, m))


def adjoint_product(tape: ForwardTape, z) -> np.ndarray:
    """``grad x(u) z`` for ``z`` with ``tau`` blocks of length ``d``; returns ``(tau, p)``."""
    tau, p, d = tape.phi_u.shape
    z = _blocks(z, tau, d, "adjoint input")
    if tape.counter is not None:
        tape.counter.adjoint_calls += 1
    return _kernels.adjoint(tape.phi_x, tape.phi_u, z)


def tangent_product(tape: ForwardTape, v) -> np.ndarray:
    """``grad x(u)^T v`` for ``v`` with ``tau`` blocks of length ``p``; returns ``(tau, d)``."""
    tau, p, d = tape.phi_u.shape
    v = _blocks(v, tau, p, "tangent input")
    if tape.counter is not None:
        tape.counter.tangent_calls += 1
    return _kernels.tangent(tape.phi_x, tape.phi_u, v)


def state_cost_gradients(problem: ControlProblem, states: np.ndarray) -> np.ndarray:
    """``(tau, d)`` stack of ``grad h_t(x_t)``; ``states`` includes ``x_0``."""
    out = np.zeros((problem.horizon, problem.state_dim))
    for t, h in enumerate(problem.state_costs):
        if not h.is_zero:
            out[t] = h.gradient(states[t + 1])
    return out


def control_cost_gradients(problem: ControlProblem, u: np.ndarray) -> np.ndarray:
    out = np.zeros((problem.horizon, problem.control_dim))
    for t, g in enumerate(problem.control_costs):
        if not g.is_zero:
            out[t] = g.gradient(u[t])
    return out


def objective_gradient(problem: ControlProblem, tape: ForwardTape) -> np.ndarray:
    """``grad f(u) = grad x(u) grad h(x) + grad g(u)`` as a ``(tau, p)`` array."""
    if tape.states.shape != (problem.horizon + 1, problem.state_dim) or \
            tape.command.shape != (problem.horizon, problem.control_dim):
        raise DimensionError("tape was recorded on a different problem")
    z = state_cost_gradients(problem, tape.states)
    return adjoint_product(tape, z) + control_cost_gradients(problem, tape.command)


def gradient(problem: ControlProblem, u, counter: OracleCounter | None = None) -> np.ndarray:
    """Record a tape at ``u`` and return ``grad f(u)``."""
    return objective_gradient(problem, record(problem, u, counter=counter))


def fd_gradient(problem: ControlProblem, u) -> np.ndarray:
    """Central finite differences of ``f`` in every coordinate of ``u``."""
    u = as_command(problem, u)
    h = fd_step(u)
    n = u.size
    E = np.eye(n).reshape(n, *u.shape) * h
    vals = batch_objective(problem, np.concatenate([u + E, u - E]))
    return ((vals[:n] - vals[n:]) / (2 * h)).reshape(u.shape)


def check_gradient(problem: ControlProblem, n_commands: int = 20, seed=None,
                   scale: float = 1.0) -> float:
    """Largest relative error ``|grad - fd| / max(|fd|, 1e-12)`` over random commands.

    Norms are Euclidean over the whole command; commands are ``scale * N(0, I)``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_commands):
        u = scale * rng.standard_normal((problem.horizon, problem.control_dim))
        g = gradient(problem, u)
        fd = fd_gradient(problem, u)
        err = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, float(err))
    return worst


__all__ = [
    "fd_gradient",
    "check_gradient",
    "OracleCounter",
    "ForwardTape",
    "record",
    "adjoint_product",
    "tangent_product",
    "objective_gradient",
    "gradient",
]

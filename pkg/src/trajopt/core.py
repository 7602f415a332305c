"""Control problem definition, roll-outs and objective evaluation.

Commands are ``(tau, p)`` arrays ``(u_0; ...; u_{tau-1})`` and trajectories
``(tau, d)`` arrays ``(x_1; ...; x_tau)``; the initial state lives on the
problem. Flat vectors of the right length are accepted wherever a command is.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import CostFunction, ZeroCost
from .dynamics import Dynamics
from .errors import DeterministicProblemError, DimensionError, DivergedTrajectoryError


@dataclass(frozen=True)
class ControlProblem:
    """``min sum_{t=1}^tau h_t(x_t) + sum_{t=0}^{tau-1} g_t(u_t)`` s.t. ``x_{t+1} = phi_t(x_t, u_t)``.

    ``state_costs[t - 1]`` is ``h_t`` and ``control_costs[t]`` is ``g_t``.
    """

    x0: np.ndarray
    dynamics: tuple[Dynamics, ...]
    state_costs: tuple[CostFunction, ...]
    control_costs: tuple[CostFunction, ...]
    name: str = "problem"
    horizon: int = field(init=False)
    state_dim: int = field(init=False)
    control_dim: int = field(init=False)
    noise_dim: int = field(init=False)

    def __post_init__(self):
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        for name in ("dynamics", "state_costs", "control_costs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        tau = len(self.dynamics)
        if tau < 1:
            raise DimensionError("horizon must be positive")
        if len(self.state_costs) != tau or len(self.control_costs) != tau:
            raise DimensionError(
                f"expected {tau} state costs and control penalties, got "
                f"{len(self.state_costs)} and {len(self.control_costs)}"
            )
        d, p, q = x0.size, self.dynamics[0].control_dim, self.dynamics[0].noise_dim
        for t, phi in enumerate(self.dynamics):
            if (phi.state_dim, phi.control_dim, phi.noise_dim) != (d, p, q):
                raise DimensionError(f"dynamics at t={t} have dims "
                                     f"{(phi.state_dim, phi.control_dim, phi.noise_dim)}, expected {(d, p, q)}")
        for t, h in enumerate(self.state_costs, start=1):
            if h.dim != d:
                raise DimensionError(f"state cost h_{t} has dim {h.dim}, expected {d}")
        for t, g in enumerate(self.control_costs):
            if g.dim != p:
                raise DimensionError(f"control penalty g_{t} has dim {g.dim}, expected {p}")
        object.__setattr__(self, "horizon", tau)
        object.__setattr__(self, "state_dim", d)
        object.__setattr__(self, "control_dim", p)
        object.__setattr__(self, "noise_dim", q)

    @classmethod
    def time_invariant(cls, x0, dynamics: Dynamics, horizon: int, *, final_cost: CostFunction,
                       control_cost: CostFunction, running_cost: CostFunction | None = None,
                       name: str = "problem") -> "ControlProblem":
        """Same map and penalty at every step; ``running_cost`` on ``x_1..x_{tau-1}``."""
        d = dynamics.state_dim
        running = running_cost if running_cost is not None else ZeroCost(d)
        return cls(
            x0=x0,
            dynamics=(dynamics,) * horizon,
            state_costs=(running,) * (horizon - 1) + (final_cost,),
            control_costs=(control_cost,) * horizon,
            name=name,
        )

    @property
    def final_state_only(self) -> bool:
        return all(h.is_zero for h in self.state_costs[:-1])

    @property
    def is_quadratic(self) -> bool:
        return all(c.is_quadratic for c in self.state_costs + self.control_costs)

    def zero_command(self) -> np.ndarray:
        return np.zeros((self.horizon, self.control_dim))


def as_command(problem: ControlProblem, u) -> np.ndarray:
    """Copy ``u`` into a ``(tau, p)`` float array, validating its size."""
    arr = np.array(u, dtype=float)
    shape = (problem.horizon, problem.control_dim)
    if arr.size != shape[0] * shape[1]:
        raise DimensionError(f"command has {arr.size} entries, expected {shape[0]}x{shape[1]}")
    return arr.reshape(shape)


def _as_noise(problem: ControlProblem, w) -> np.ndarray:
    arr = np.array(w, dtype=float)
    shape = (problem.horizon, problem.noise_dim)
    if arr.size != shape[0] * shape[1]:
        raise DimensionError(f"noise sequence has {arr.size} entries, expected {shape[0]}x{shape[1]}")
    return arr.reshape(shape)


def rollout(problem: ControlProblem, u) -> np.ndarray:
    """States ``x_1..x_tau`` produced by the exact dynamics."""
    u = as_command(problem, u)
    xs = np.empty((problem.horizon, problem.state_dim))
    x = problem.x0
    for t, phi in enumerate(problem.dynamics):
        x = np.asarray(phi.step(x, u[t]), dtype=float)
        if not np.all(np.isfinite(x)):
            raise DivergedTrajectoryError(t + 1)
        xs[t] = x
    return xs


def noisy_rollout(problem: ControlProblem, u, w) -> np.ndarray:
    """States under ``x_{t+1} = phi_t(x_t, u_t, w_t)``."""
    u = as_command(problem, u)
    w = _as_noise(problem, w)
    if problem.noise_dim == 0:
        return rollout(problem, u)
    xs = np.empty((problem.horizon, problem.state_dim))
    x = problem.x0
    for t, phi in enumerate(problem.dynamics):
        x = np.asarray(phi.step(x, u[t], w[t]), dtype=float)
        if not np.all(np.isfinite(x)):
            raise DivergedTrajectoryError(t + 1)
        xs[t] = x
    return xs


def state_cost(problem: ControlProblem, xs: np.ndarray) -> float:
    return float(sum(h.value(x) for h, x in zip(problem.state_costs, xs) if not h.is_zero))


def control_cost(problem: ControlProblem, u: np.ndarray) -> float:
    return float(sum(g.value(ut) for g, ut in zip(problem.control_costs, u) if not g.is_zero))


def objective(problem: ControlProblem, u) -> float:
    """``f(u) = h(x(u)) + g(u)``."""
    u = as_command(problem, u)
    return state_cost(problem, rollout(problem, u)) + control_cost(problem, u)


def batch_objective(problem: ControlProblem, commands) -> np.ndarray:
    """``f`` at each of ``n`` commands (``n x tau x p``); diverged roll-outs give ``inf``."""
    U = np.asarray(commands, dtype=float)
    if U.ndim != 3 or U.shape[1:] != (problem.horizon, problem.control_dim):
        raise DimensionError(f"commands have shape {U.shape}, expected (n, {problem.horizon}, "
                             f"{problem.control_dim})")
    n = U.shape[0]
    X = np.tile(problem.x0, (n, 1))
    total = np.zeros(n)
    with np.errstate(all="ignore"):
        for t, phi in enumerate(problem.dynamics):
            X = np.asarray(phi.step_batch(X, U[:, t]), dtype=float)
            h, g = problem.state_costs[t], problem.control_costs[t]
            if not h.is_zero:
                total += h.value_batch(X)
            if not g.is_zero:
                total += g.value_batch(U[:, t])
    total[~np.isfinite(total)] = np.inf
    return total


def monte_carlo_objective(problem: ControlProblem, u, n_samples: int, seed=None) -> tuple[float, float]:
    """Sample mean and standard error of ``h(x(u, w)) + g(u)`` with ``w ~ N(0, I)``."""
    if problem.noise_dim == 0:
        raise DeterministicProblemError("problem has no noise inputs (q = 0)")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    u = as_command(problem, u)
    rng = np.random.default_rng(seed)
    ws = rng.standard_normal((n_samples, problem.horizon, problem.noise_dim))
    samples = np.array([state_cost(problem, noisy_rollout(problem, u, w)) for w in ws])
    mean = float(samples.mean()) + control_cost(problem, u)
    # Centering on one sample keeps the spread exactly zero for constant samples.
    spread = samples - samples[0]
    std_err = float(spread.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return mean, std_err


def command_norm(v) -> float:
    return float(np.linalg.norm(np.ravel(v)))


__all__ = [
    "ControlProblem",
    "as_command",
    "rollout",
    "noisy_rollout",
    "objective",
    "batch_objective",
    "monte_carlo_objective",
    "state_cost",
    "control_cost",
]


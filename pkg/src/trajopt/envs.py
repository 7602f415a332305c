"""Benchmark environments: pendulum swing-up, two-link arm, random LQ instances.

Both physical systems use the explicit Euler step
``x1+ = x1 + delta x2``, ``x2+ = x2 + delta * acc(x1, x2, u)``, a final-state
cost and the control penalty ``lambda2 * delta * |u|^2`` (the Riemann sum of
``lambda2 * int |u|^2 dt``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ControlProblem
from .costs import QuadraticCost, ZeroCost
from .dynamics import Dynamics, FiniteDifferenceDynamics, LinearDynamics, fd_hessians


@dataclass(frozen=True)
class PendulumParams:
    mass: float = 1.0
    length: float = 1.0
    friction: float = 0.01
    g_acc: float = 9.81
    T: float = 5.0
    horizon: int = 100
    lambda1: float = 0.1
    lambda2: float = 0.01
    x0: tuple = (0.0, 0.0)
    target: float = math.pi

    @property
    def delta(self) -> float:
        return self.T / self.horizon

    def __post_init__(self):
        for name in ("mass", "length", "g_acc", "T", "lambda1", "lambda2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.friction < 0:
            raise ValueError("friction must be nonnegative")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")


class PendulumDynamics(Dynamics):
    """``theta'' = -(g/l) sin theta - mu/(m l^2) theta' + u/(m l^2)``, Euler step ``delta``."""

    has_hessians = True

    def __init__(self, params: PendulumParams):
        self.params = params
        self.state_dim, self.control_dim = 2, 1
        self.delta = params.delta
        self._a = params.g_acc / params.length
        inertia = params.mass * params.length**2
        self._b = params.friction / inertia
        self._c = 1.0 / inertia

    def acceleration(self, x, u):
        return -self._a * math.sin(x[0]) - self._b * x[1] + self._c * u[0]

    def step(self, x, u, w=None):
        return np.array([x[0] + self.delta * x[1], x[1] + self.delta * self.acceleration(x, u)])

    def step_batch(self, X, U):
        th, om = X[:, 0], X[:, 1]
        acc = -self._a * np.sin(th) - self._b * om + self._c * U[:, 0]
        return np.stack([th + self.delta * om, om + self.delta * acc], axis=1)

    def jacobians(self, x, u):
        dl = self.delta
        fx = np.array([[1.0, -dl * self._a * math.cos(x[0])],
                       [dl, 1.0 - dl * self._b]])
        fu = np.array([[0.0, dl * self._c]])
        return fx, fu

    def hessians(self, x, u):
        fxx = np.zeros((2, 2, 2))
        fxx[0, 0, 1] = self.delta * self._a * math.sin(x[0])
        return fxx, np.zeros((1, 1, 2)), np.zeros((1, 2, 2))


def pendulum_problem(params: PendulumParams | None = None, finite_differences: bool = False,
                     **overrides) -> ControlProblem:
    """Swing-up: reach angle ``pi`` with zero speed at time ``T``."""
    params = replace(params or PendulumParams(), **overrides)
    dyn: Dynamics = PendulumDynamics(params)
    if finite_differences:
        dyn = FiniteDifferenceDynamics(dyn)
    final = QuadraticCost(np.diag([2.0, 2.0 * params.lambda1]), target=[params.target, 0.0])
    penalty = QuadraticCost(np.array([[2.0 * params.lambda2 * params.delta]]))
    return ControlProblem.time_invariant(params.x0, dyn, params.horizon, final_cost=final,
                                         control_cost=penalty, name="pendulum")


@dataclass(frozen=True)
class TwoLinkArmParams:
    l1: float = 0.30
    l2: float = 0.33
    k1: float = 0.025
    k2: float = 0.045
    m2: float = 1.0
    d2: float = 0.16
    B: tuple = ((0.05, 0.025), (0.025, 0.05))
    target: tuple = (1.0, 1.0)
    lambda1: float = 0.1
    lambda2: float = 0.01
    T: float = 5.0
    horizon: int = 100
    x0: tuple = (0.0, 0.0, 0.0, 0.0)

    @property
    def delta(self) -> float:
        return self.T / self.horizon

    @property
    def a1(self) -> float:
        return self.k1 + self.k2 + self.m2 * self.l1**2

    @property
    def a2(self) -> float:
        return self.m2 * self.l1 * self.d2

    @property
    def a3(self) -> float:
        return self.k2

    def __post_init__(self):
        if min(self.a1, self.a2, self.a3) <= 0:
            raise ValueError("a1, a2, a3 must be positive")
        # det M = a1 a3 - a3^2 - a2^2 cos^2 theta2 must stay positive.
        if self.a1 * self.a3 - self.a3**2 - self.a2**2 <= 0:
            raise ValueError("inertia matrix M(theta) is not positive definite for all theta")


class TwoLinkArmDynamics(Dynamics):
    """``M(theta) theta'' + C(theta, theta') + B theta' = u`` in the horizontal plane."""

    has_hessians = True

    def __init__(self, params: TwoLinkArmParams):
        self.params = params
        self.state_dim, self.control_dim = 4, 2
        self.delta = params.delta
        self.a1, self.a2, self.a3 = params.a1, params.a2, params.a3
        self.B = np.array(params.B, dtype=float)

    def inertia(self, theta2: float) -> np.ndarray:
        c = self.a2 * math.cos(theta2)
        return np.array([[self.a1 + 2 * c, self.a3 + c], [self.a3 + c, self.a3]])

    def coriolis(self, x) -> np.ndarray:
        _, th2, w1, w2 = x
        return np.array([-w2 * (2 * w1 + w2), w1**2]) * self.a2 * math.sin(th2)

    def acceleration(self, x, u) -> np.ndarray:
        return np.array(self._acc(x, u))

    def _acc(self, x, u):
        # Scalar 2x2 solve; this sits on the roll-out hot path.
        th2, w1, w2 = float(x[1]), float(x[2]), float(x[3])
        if not math.isfinite(th2):
            return math.nan, math.nan
        c = self.a2 * math.cos(th2)
        s = self.a2 * math.sin(th2)
        m11, m12, m22 = self.a1 + 2 * c, self.a3 + c, self.a3
        (b11, b12), (b21, b22) = self.B
        r1 = u[0] + w2 * (2 * w1 + w2) * s - b11 * w1 - b12 * w2
        r2 = u[1] - w1 * w1 * s - b21 * w1 - b22 * w2
        det = m11 * m22 - m12 * m12
        return (m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det

    def step_batch(self, X, U):
        th2, w1, w2 = X[:, 1], X[:, 2], X[:, 3]
        c = self.a2 * np.cos(th2)
        s = self.a2 * np.sin(th2)
        m11, m12, m22 = self.a1 + 2 * c, self.a3 + c, self.a3
        (b11, b12), (b21, b22) = self.B
        r1 = U[:, 0] + w2 * (2 * w1 + w2) * s - b11 * w1 - b12 * w2
        r2 = U[:, 1] - w1 * w1 * s - b21 * w1 - b22 * w2
        det = m11 * m22 - m12 * m12
        acc = np.stack([(m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det], axis=1)
        return np.concatenate([X[:, :2] + self.delta * X[:, 2:], X[:, 2:] + self.delta * acc], axis=1)

    def step(self, x, u, w=None):
        a1, a2 = self._acc(x, u)
        dl = self.delta
        return np.array([x[0] + dl * x[2], x[1] + dl * x[3], x[2] + dl * a1, x[3] + dl * a2])

    def jacobians(self, x, u):
        x = np.asarray(x, dtype=float)
        _, th2, w1, w2 = x
        dl = self.delta
        M_inv = np.linalg.inv(self.inertia(th2))
        acc = M_inv @ (np.asarray(u) - self.coriolis(x) - self.B @ x[2:])
        s, c = math.sin(th2), math.cos(th2)
        dM = -self.a2 * s * np.array([[2.0, 1.0], [1.0, 0.0]])
        dC_dth2 = np.array([-w2 * (2 * w1 + w2), w1**2]) * self.a2 * c
        # Forward Jacobian of acc (rows: acc components, cols: th1, th2, w1, w2).
        J_acc = np.zeros((2, 4))
        J_acc[:, 1] = -M_inv @ (dM @ acc + dC_dth2)
        dC_dw = self.a2 * s * np.array([[-2 * w2, -2 * w1 - 2 * w2], [2 * w1, 0.0]])
        J_acc[:, 2:] = -M_inv @ (dC_dw + self.B)
        F = np.zeros((4, 4))
        F[:2, :2] = np.eye(2)
        F[:2, 2:] = dl * np.eye(2)
        F[2:, 2:] = np.eye(2)
        F[2:, :] += dl * J_acc
        Fu = np.zeros((4, 2))
        Fu[2:, :] = dl * M_inv
        return F.T, Fu.T

    def hessians(self, x, u):
        return fd_hessians(self.jacobians, x, u)


def two_link_arm_problem(params: TwoLinkArmParams | None = None, finite_differences: bool = False,
                         **overrides) -> ControlProblem:
    """Reach ``target`` joint angles and stop at time ``T``."""
    params = replace(params or TwoLinkArmParams(), **overrides)
    dyn: Dynamics = TwoLinkArmDynamics(params)
    if finite_differences:
        dyn = FiniteDifferenceDynamics(dyn)
    l1 = params.lambda1
    final = QuadraticCost(np.diag([2.0, 2.0, 2.0 * l1, 2.0 * l1]),
                          target=[params.target[0], params.target[1], 0.0, 0.0])
    penalty = QuadraticCost(2.0 * params.lambda2 * params.delta * np.eye(2))
    return ControlProblem.time_invariant(params.x0, dyn, params.horizon, final_cost=final,
                                         control_cost=penalty, name="two_link_arm")


def random_lq_problem(tau: int = 8, d: int = 3, p: int = 2, seed=0, spectral_cap: float = 1.0,
                      state_cost_scale: float = 1.0, linear_terms: bool = True,
                      final_only: bool = False) -> ControlProblem:
    """Random time-varying linear dynamics with convex quadratic costs.

    ``||A_t||_2 <= spectral_cap``, ``Q_t`` PSD (rank-deficient half of the
    time), ``R_t`` PD. Same ``seed`` gives the same problem.
    """
    if not spectral_cap < 1.2:
        raise ValueError("spectral_cap must be < 1.2")
    rng = np.random.default_rng(seed)
    dyn, h, g = [], [], []
    x0 = rng.standard_normal(d)
    for t in range(tau):
        A = rng.standard_normal((d, d))
        A *= spectral_cap / max(np.linalg.norm(A, 2), 1e-12) * rng.uniform(0.5, 1.0)
        Bm = rng.standard_normal((d, p))
        dyn.append(LinearDynamics(A, Bm))
        r = d if t % 2 == 0 or t == tau - 1 else max(1, d - 1)
        Lq = rng.standard_normal((d, r))
        Q = state_cost_scale * Lq @ Lq.T / r
        Lr = rng.standard_normal((p, p))
        R = Lr @ Lr.T / p + 0.5 * np.eye(p)
        q_lin = rng.standard_normal(d) if linear_terms else None
        r_lin = rng.standard_normal(p) if linear_terms else None
        if final_only and t < tau - 1:
            h.append(ZeroCost(d))
        else:
            h.append(QuadraticCost(Q, linear=q_lin))
        g.append(QuadraticCost(R, linear=r_lin))
    return ControlProblem(x0=x0, dynamics=dyn, state_costs=h, control_costs=g, name="random_lq")


@dataclass
class EnvSpec:
    """Registry entry. ``horizon_arg``/``seed_arg`` name the builder keywords
    that receive the CLI's ``--tau`` and ``--seed`` (``None`` ignores them).
    ``gamma0`` is a suggested initial step for the regularized solvers and
    ``command_scale`` the standard deviation of random test commands."""

    build: object
    description: str = ""
    horizon_arg: str | None = "horizon"
    seed_arg: str | None = None
    options: dict = field(default_factory=dict)
    gamma0: float | None = None
    command_scale: float = 1.0


# The control penalties of both physical systems have curvature 2*lambda2*delta
# = 1e-3, so a proximal weight 1/gamma of order 1 swamps the model; start the
# regularized solvers at the matching scale instead.
_PHYSICAL_GAMMA0 = 1e3


ENVIRONMENTS: dict[str, EnvSpec] = {
    "pendulum": EnvSpec(pendulum_problem, "pendulum swing-up (d=2, p=1)", gamma0=_PHYSICAL_GAMMA0),
    # Unit torques spin the light arm up by ~40 rad/s per step; sample at 0.1 N m.
    "two_link_arm": EnvSpec(two_link_arm_problem, "two-link arm reaching (d=4, p=2)",
                            gamma0=_PHYSICAL_GAMMA0, command_scale=0.1),
    "random_lq": EnvSpec(random_lq_problem, "random linear-quadratic instance", "tau", "seed"),
}


def make_env(name: str, tau: int | None = None, seed=None, **options) -> ControlProblem:
    """Build a registered environment by name."""
    try:
        spec = ENVIRONMENTS[name]
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    kw = dict(spec.options)
    kw.update(options)
    if tau is not None and spec.horizon_arg:
        kw[spec.horizon_arg] = tau
    if seed is not None and spec.seed_arg:
        kw[spec.seed_arg] = seed
    return spec.build(**kw)


def recommended_gamma0(name: str) -> float | None:
    """Registry hint for the initial step size of the regularized solvers."""
    spec = ENVIRONMENTS.get(name)
    return None if spec is None else spec.gamma0


__all__ = [
    "recommended_gamma0",
    "EnvSpec",
    "PendulumParams",
    "PendulumDynamics",
    "pendulum_problem",
    "TwoLinkArmParams",
    "TwoLinkArmDynamics",
    "two_link_arm_problem",
    "random_lq_problem",
    "ENVIRONMENTS",
    "make_env",
]

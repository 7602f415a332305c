"""Dynamic programming for linear dynamics with convex quadratic costs.

The subproblem in the deviations ``(y, v)`` reads::

    min  sum_{t=1}^tau  h_t^T y_t + 1/2 y_t^T H_t y_t
       + sum_{t=0}^{tau-1} g_t^T v_t + 1/2 v_t^T G_t v_t + |v_t|^2 / (2 gamma)
    s.t. y_{t+1} = Phi_{t,x}^T y_t + Phi_{t,u}^T v_t,   y_0 = 0

and, for the Gaussian variant, the transition picks up
``sum_i w_i (psi_i + Psi_i v_t)`` with ``w ~ N(0, I_q)`` and the expectation
of the cost is minimized. Constant terms of the cost-to-go are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError, IllConditionedSubproblemError, IndefiniteModelError


def _arr(a, shape, what):
    out = np.ascontiguousarray(a, dtype=float)
    if out.shape != shape:
        raise DimensionError(f"{what} has shape {out.shape}, expected {shape}")
    return out


@dataclass(frozen=True)
class LqSubproblem:
    """Linearized dynamics with quadratic models of the costs.

    ``h_x[t - 1]``, ``H_xx[t - 1]`` model ``h_t`` for ``t = 1..tau``; ``g_u[t]``,
    ``G_uu[t]`` model ``g_t`` for ``t = 0..tau-1``. ``gamma = inf`` means no
    proximal term. ``phi_w`` (``tau x q x d``) and ``psi`` (``tau x q x d x p``)
    are only used by :func:`lqg_backward`.
    """

    phi_x: np.ndarray
    phi_u: np.ndarray
    h_x: np.ndarray
    H_xx: np.ndarray
    g_u: np.ndarray
    G_uu: np.ndarray
    gamma: float = math.inf
    phi_w: np.ndarray | None = None
    psi: np.ndarray | None = None

    def __post_init__(self):
        phi_u = np.ascontiguousarray(self.phi_u, dtype=float)
        if phi_u.ndim != 3:
            raise DimensionError("phi_u must have shape (tau, p, d)")
        tau, p, d = phi_u.shape
        object.__setattr__(self, "phi_u", phi_u)
        object.__setattr__(self, "phi_x", _arr(self.phi_x, (tau, d, d), "phi_x"))
        object.__setattr__(self, "h_x", _arr(self.h_x, (tau, d), "h_x"))
        object.__setattr__(self, "H_xx", _arr(self.H_xx, (tau, d, d), "H_xx"))
        object.__setattr__(self, "g_u", _arr(self.g_u, (tau, p), "g_u"))
        object.__setattr__(self, "G_uu", _arr(self.G_uu, (tau, p, p), "G_uu"))
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.phi_w is not None:
            phi_w = np.ascontiguousarray(self.phi_w, dtype=float)
            q = phi_w.shape[1] if phi_w.ndim == 3 else -1
            object.__setattr__(self, "phi_w", _arr(phi_w, (tau, q, d), "phi_w"))
            psi = np.zeros((tau, q, d, p)) if self.psi is None else self.psi
            object.__setattr__(self, "psi", _arr(psi, (tau, q, d, p), "psi"))

    @property
    def horizon(self) -> int:
        return self.phi_u.shape[0]

    @property
    def state_dim(self) -> int:
        return self.phi_u.shape[2]

    @property
    def control_dim(self) -> int:
        return self.phi_u.shape[1]

    @property
    def inv_gamma(self) -> float:
        return 0.0 if math.isinf(self.gamma) else 1.0 / self.gamma

    def padded_state_terms(self):
        """``h_x`` and ``H_xx`` with a zero row for ``t = 0`` prepended."""
        d = self.state_dim
        h_x = np.concatenate([np.zeros((1, d)), self.h_x])
        H_xx = np.concatenate([np.zeros((1, d, d)), self.H_xx])
        return h_x, H_xx

    def model_value(self, v, y) -> float:
        """Quadratic model (without constants or proximal term) at a feasible ``(v, y)``."""
        v = np.asarray(v, dtype=float).reshape(self.g_u.shape)
        y = np.asarray(y, dtype=float).reshape(self.h_x.shape)
        val = np.sum(self.h_x * y) + 0.5 * np.einsum("ti,tij,tj->", y, self.H_xx, y)
        val += np.sum(self.g_u * v) + 0.5 * np.einsum("ti,tij,tj->", v, self.G_uu, v)
        return float(val)


@dataclass(frozen=True)
class FeedbackPolicy:
    """Affine policy ``v_t = K_t y_t + k_t``."""

    K: np.ndarray
    k: np.ndarray


@dataclass(frozen=True)
class CostToGo:
    """``c_t(y) = 1/2 y^T C_xx[t] y + c_x[t]^T y`` for ``t = 0..tau``."""

    C_xx: np.ndarray
    c_x: np.ndarray


def riccati(sub: LqSubproblem, *, second_order=None, shift=None, noise: bool = False,
            lam0: float = 0.0, rho_plus: float = 10.0, lam_max: float = 1e12):
    """Shared backward pass. Returns ``(policy, cost_to_go, lam)``.

    ``second_order = (fxx, fux, fuu)`` adds the dynamics curvature contracted
    with ``c_{t+1}``. ``shift`` replaces ``c_{t+1}`` by ``c_{t+1} + C_{t+1} shift[t]``
    in every first-order term. With ``lam0 > 0`` a failed factorization is
    retried on ``W_uu + lam I`` for ``lam = lam0 * rho_plus^j``.
    """
    h_x, H_xx = sub.padded_state_terms()
    kw = {}
    if second_order is not None:
        fxx, fux, fuu = (np.ascontiguousarray(a, dtype=float) for a in second_order)
        kw.update(fxx=fxx, fux=fux, fuu=fuu)
    if shift is not None:
        kw["shift"] = np.ascontiguousarray(shift, dtype=float)
    if noise:
        if sub.phi_w is None:
            raise DimensionError("subproblem carries no noise terms")
        kw.update(phi_w=sub.phi_w, psi=sub.psi)
    K, k, C, c, lam, status, t_fail = _kernels.lq_backward(
        sub.phi_x, sub.phi_u, h_x, H_xx, sub.g_u, sub.G_uu, sub.inv_gamma,
        lam0=lam0, rho_plus=rho_plus, lam_max=lam_max, **kw)
    if status == _kernels.NOT_PD:
        raise IllConditionedSubproblemError(int(t_fail))
    if status == _kernels.LAMBDA_OVERFLOW:
        raise IndefiniteModelError(int(t_fail), lam_max)
    policy = FeedbackPolicy(np.asarray(K), np.asarray(k))
    return policy, CostToGo(np.asarray(C), np.asarray(c)), np.asarray(lam)


def lq_backward(sub: LqSubproblem) -> tuple[FeedbackPolicy, CostToGo]:
    """Backward Riccati recursion; raises if some ``W_uu`` is not positive definite."""
    policy, ctg, _ = riccati(sub)
    return policy, ctg


def lqg_backward(sub: LqSubproblem) -> tuple[FeedbackPolicy, CostToGo]:
    """Backward recursion for the expected cost under Gaussian noise."""
    policy, ctg, _ = riccati(sub, noise=True)
    return policy, ctg


def lq_rollout(sub: LqSubproblem, policy: FeedbackPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Apply the policy to the linearized dynamics from ``y_0 = 0``; returns ``(v, y)``."""
    v, y = _kernels.lq_rollout(sub.phi_x, sub.phi_u,
                               np.ascontiguousarray(policy.K), np.ascontiguousarray(policy.k))
    return np.asarray(v), np.asarray(y)


def lq_solve(sub: LqSubproblem) -> np.ndarray:
    """Minimizing ``v`` of the subproblem."""
    policy, _ = lq_backward(sub)
    return lq_rollout(sub, policy)[0]


__all__ = [
    "LqSubproblem",
    "FeedbackPolicy",
    "CostToGo",
    "lq_backward",
    "lqg_backward",
    "lq_rollout",
    "lq_solve",
    "riccati",
]

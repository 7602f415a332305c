"""Step maps ``x_{t+1} = phi_t(x_t, u_t[, w_t])`` and their derivatives.

Derivatives use the *gradient* convention throughout: ``jacobians`` returns
``(grad_x phi, grad_u phi)`` of shapes ``(d, d)`` and ``(p, d)``, i.e. the
transposes of the usual forward Jacobians. Second-order tensors keep the
output coordinate last, e.g. ``fxx[i, j, k] = d2 phi_k / dx_i dx_j``.
"""

from __future__ import annotations

import numpy as np

from .errors import CapabilityError


def fd_step(point: np.ndarray) -> float:
    """Central-difference step scaled to the query point."""
    return 1e-6 * (1.0 + float(np.max(np.abs(point), initial=0.0)))


class Dynamics:
    """Base class for a (possibly noisy) discrete-time step map."""

    state_dim: int
    control_dim: int
    noise_dim: int = 0
    has_hessians = False

    def step(self, x, u, w=None) -> np.ndarray:
        raise NotImplementedError

    def step_batch(self, X, U) -> np.ndarray:
        """Noise-free step applied row-wise to ``X`` (``n x d``) and ``U`` (``n x p``)."""
        return np.array([self.step(x, u) for x, u in zip(X, U)])

    def jacobians(self, x, u):
        """``(grad_x phi, grad_u phi)`` at ``(x, u, w=0)``."""
        return fd_jacobians(self.step, x, u)

    def noise_jacobian(self, x, u) -> np.ndarray:
        """``grad_w phi`` at ``w = 0``, shape ``(q, d)``."""
        if self.noise_dim == 0:
            return np.zeros((0, self.state_dim))
        raise CapabilityError(f"{type(self).__name__} does not expose noise derivatives")

    def hessians(self, x, u):
        """``(fxx, fuu, fux)`` with shapes ``(d,d,d)``, ``(p,p,d)``, ``(p,d,d)``."""
        raise CapabilityError(f"{type(self).__name__} does not expose second derivatives")

    def uw_hessian(self, x, u) -> np.ndarray:
        """``d2 phi / du dw`` at ``w = 0``, shape ``(p, q, d)``."""
        if self.noise_dim == 0:
            return np.zeros((self.control_dim, 0, self.state_dim))
        raise CapabilityError(f"{type(self).__name__} does not expose noise derivatives")


def fd_jacobians(step, x, u):
    """Central finite-difference gradients of ``step(x, u)``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    h = fd_step(np.concatenate([x, u]))
    d, p = x.size, u.size
    fx = np.empty((d, d))
    fu = np.empty((p, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        fx[i] = (step(x + e, u) - step(x - e, u)) / (2 * h)
    for a in range(p):
        e = np.zeros(p)
        e[a] = h
        fu[a] = (step(x, u + e) - step(x, u - e)) / (2 * h)
    return fx, fu


def fd_hessians(jacobians, x, u):
    """Second derivatives by central differences of analytic gradients."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    h = fd_step(np.concatenate([x, u]))
    d, p = x.size, u.size
    fxx = np.empty((d, d, d))
    fux = np.empty((p, d, d))
    fuu = np.empty((p, p, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        jp, _ = jacobians(x + e, u)
        jm, _ = jacobians(x - e, u)
        fxx[i] = (jp - jm) / (2 * h)
    for a in range(p):
        e = np.zeros(p)
        e[a] = h
        jxp, jup = jacobians(x, u + e)
        jxm, jum = jacobians(x, u - e)
        fux[a] = (jxp - jxm) / (2 * h)
        fuu[a] = (jup - jum) / (2 * h)
    fxx = 0.5 * (fxx + fxx.transpose(1, 0, 2))
    fuu = 0.5 * (fuu + fuu.transpose(1, 0, 2))
    return fxx, fuu, fux


class LinearDynamics(Dynamics):
    """``x+ = A x + B u + offset + E w + sum_{a,i} N[a, i] u_a w_i``.

    The bilinear ``N`` term (shape ``(p, q, d)``) is the only source of
    control-dependent noise; all other second derivatives vanish.
    """

    has_hessians = True

    def __init__(self, A, B, E=None, N=None, offset=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.asarray(B, dtype=float).reshape(self.A.shape[0], -1)
        self.state_dim, self.control_dim = self.B.shape
        d, p = self.state_dim, self.control_dim
        if E is None:
            self.E = np.zeros((d, 0))
        else:
            self.E = np.asarray(E, dtype=float).reshape(d, -1)
        self.noise_dim = self.E.shape[1]
        q = self.noise_dim
        self.N = np.zeros((p, q, d)) if N is None else np.asarray(N, dtype=float).reshape(p, q, d)
        self.offset = np.zeros(d) if offset is None else np.asarray(offset, dtype=float).reshape(d)

    def step(self, x, u, w=None):
        x_next = self.A @ x + self.B @ u + self.offset
        if w is not None and self.noise_dim:
            x_next = x_next + self.E @ w + np.einsum("aik,a,i->k", self.N, u, w)
        return x_next

    def step_batch(self, X, U):
        return X @ self.A.T + U @ self.B.T + self.offset

    def jacobians(self, x, u):
        return self.A.T.copy(), self.B.T.copy()

    def noise_jacobian(self, x, u):
        return self.E.T + np.einsum("aik,a->ik", self.N, np.asarray(u, dtype=float))

    def hessians(self, x, u):
        d, p = self.state_dim, self.control_dim
        return np.zeros((d, d, d)), np.zeros((p, p, d)), np.zeros((p, d, d))

    def uw_hessian(self, x, u):
        return self.N.copy()


class FiniteDifferenceDynamics(Dynamics):
    """Wraps another map and replaces its analytic derivatives by finite differences."""

    def __init__(self, base: Dynamics):
        self.base = base
        self.state_dim = base.state_dim
        self.control_dim = base.control_dim
        self.noise_dim = 0
        self.has_hessians = True

    def step(self, x, u, w=None):
        return self.base.step(x, u)

    def step_batch(self, X, U):
        return self.base.step_batch(X, U)

    def jacobians(self, x, u):
        return fd_jacobians(self.base.step, x, u)

    def hessians(self, x, u):
        return fd_hessians(self.jacobians, x, u)

"""Convex per-step costs ``h_t`` (on states) and penalties ``g_t`` (on controls)."""

from __future__ import annotations

import numpy as np


class CostFunction:
    """A convex, twice differentiable function of one state or control vector.

    Subclasses implement :meth:`value`, :meth:`gradient` and :meth:`hessian`.
    ``is_quadratic`` lets the steps know that the second-order model is exact.
    """

    is_quadratic = False
    is_zero = False

    def __init__(self, dim: int):
        self.dim = int(dim)

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        """Values at the rows of ``X``."""
        return np.array([self.value(x) for x in X])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class QuadraticCost(CostFunction):
    """``0.5 (x - target)^T Q (x - target) + linear^T x + constant``."""

    is_quadratic = True

    def __init__(self, weight, target=None, linear=None, constant: float = 0.0):
        Q = np.atleast_2d(np.asarray(weight, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError(f"weight must be square, got {Q.shape}")
        super().__init__(Q.shape[0])
        self.weight = 0.5 * (Q + Q.T)
        self.target = np.zeros(self.dim) if target is None else np.asarray(target, dtype=float).reshape(self.dim)
        self.linear = np.zeros(self.dim) if linear is None else np.asarray(linear, dtype=float).reshape(self.dim)
        self.constant = float(constant)
        self.is_zero = not (self.weight.any() or self.linear.any() or self.constant)

    def value(self, x):
        r = np.asarray(x, dtype=float) - self.target
        return float(0.5 * r @ self.weight @ r + self.linear @ x + self.constant)

    def value_batch(self, X):
        X = np.asarray(X, dtype=float)
        R = X - self.target
        return 0.5 * np.einsum("ni,ij,nj->n", R, self.weight, R) + X @ self.linear + self.constant

    def gradient(self, x):
        return self.weight @ (np.asarray(x, dtype=float) - self.target) + self.linear

    def hessian(self, x):
        return self.weight.copy()

    def __repr__(self):
        return f"QuadraticCost(dim={self.dim})"


class ZeroCost(QuadraticCost):
    def __init__(self, dim: int):
        super().__init__(np.zeros((dim, dim)))


class SmoothCost(CostFunction):
    """Cost given by user callables; the caller vouches for convexity."""

    def __init__(self, dim, value, gradient, hessian):
        super().__init__(dim)
        self._value = value
        self._gradient = gradient
        self._hessian = hessian

    def value(self, x):
        return float(self._value(np.asarray(x, dtype=float)))

    def gradient(self, x):
        return np.asarray(self._gradient(np.asarray(x, dtype=float)), dtype=float).reshape(self.dim)

    def hessian(self, x):
        return np.asarray(self._hessian(np.asarray(x, dtype=float)), dtype=float).reshape(self.dim, self.dim)


def pseudo_huber(dim: int, scale: float = 1.0, weight: float = 1.0) -> SmoothCost:
    """Separable ``weight * scale^2 * (sqrt(1 + (x/scale)^2) - 1)``; convex, not quadratic."""

    def value(x):
        return weight * scale**2 * np.sum(np.sqrt(1.0 + (x / scale) ** 2) - 1.0)

    def gradient(x):
        return weight * x / np.sqrt(1.0 + (x / scale) ** 2)

    def hessian(x):
        return np.diag(weight * (1.0 + (x / scale) ** 2) ** -1.5)

    return SmoothCost(dim, value, gradient, hessian)

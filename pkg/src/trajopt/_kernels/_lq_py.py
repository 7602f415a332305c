"""Pure numpy reference kernels for the linear-quadratic recursions.

Array conventions (shared with the compiled backend):

* ``phi_x[t]`` is ``d x d`` and ``phi_u[t]`` is ``p x d``; both are gradients
  of the step map, so the linearized dynamics read
  ``y[t+1] = phi_x[t].T @ y[t] + phi_u[t].T @ v[t]``.
* ``h_x``/``h_xx`` carry ``tau + 1`` entries, index 0 being the (ignored)
  cost on the initial state.
* second-order tensors keep the output coordinate last:
  ``fxx[t, i, j, k] = d2 phi_k / dx_i dx_j``, ``fux[t, a, i, k]``,
  ``fuu[t, a, b, k]``.
* noise terms: ``phi_w[t]`` is ``q x d`` (row ``i`` is ``psi_i``) and
  ``psi[t, i]`` is the ``d x p`` matrix ``Psi_i``.
"""

import numpy as np
from scipy.linalg import cho_solve

BACKEND = "python"

OK = 0
NOT_PD = 1
LAMBDA_OVERFLOW = 2


def _cholesky(a):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None


def lq_backward(phi_x, phi_u, h_x, h_xx, g_u, g_uu, inv_gamma,
                fxx=None, fux=None, fuu=None, phi_w=None, psi=None,
                shift=None, lam0=0.0, rho_plus=10.0, lam_max=1e12):
    """Backward Riccati pass.

    Returns ``(K, k, C, c, lam, status, t_fail)``. ``status`` is ``OK`` or the
    failure code for time ``t_fail``; outputs past a failure are undefined.
    """
    tau, p, d = phi_u.shape
    K = np.zeros((tau, p, d))
    k = np.zeros((tau, p))
    C = np.zeros((tau + 1, d, d))
    c = np.zeros((tau + 1, d))
    lam = np.zeros(tau)
    C[tau] = h_xx[tau]
    c[tau] = h_x[tau]
    eye = np.eye(p)
    for t in range(tau - 1, -1, -1):
        Cn = C[t + 1]
        cn = c[t + 1]
        if shift is not None:
            cn = cn + Cn @ shift[t]
        fx = phi_x[t]
        fu = phi_u[t]
        w_x = h_x[t] + fx @ cn
        w_u = g_u[t] + fu @ cn
        CPx = Cn @ fx.T
        W_xx = h_xx[t] + fx @ CPx
        W_ux = fu @ CPx
        W_uu = g_uu[t] + fu @ Cn @ fu.T + inv_gamma * eye
        if fxx is not None:
            W_xx = W_xx + fxx[t] @ cn
            W_ux = W_ux + fux[t] @ cn
            W_uu = W_uu + fuu[t] @ cn
        if phi_w is not None:
            for i in range(phi_w.shape[1]):
                Ps = psi[t, i]
                CPs = Cn @ Ps
                w_u = w_u + CPs.T @ phi_w[t, i]
                W_uu = W_uu + Ps.T @ CPs
        L = _cholesky(W_uu)
        if L is None:
            if lam0 <= 0.0:
                return K, k, C, c, lam, NOT_PD, t
            W0 = W_uu
            lt = lam0
            while L is None:
                if lt > lam_max:
                    return K, k, C, c, lam, LAMBDA_OVERFLOW, t
                W_uu = W0 + lt * eye
                lam[t] = lt
                lt *= rho_plus
                L = _cholesky(W_uu)
        Kt = -cho_solve((L, True), W_ux)
        kt = -cho_solve((L, True), w_u)
        K[t] = Kt
        k[t] = kt
        Ct = W_xx + W_ux.T @ Kt
        C[t] = 0.5 * (Ct + Ct.T)
        c[t] = w_x + W_ux.T @ kt
    return K, k, C, c, lam, OK, -1


def lq_rollout(phi_x, phi_u, K, k):
    """Roll the affine policy through the linearized dynamics from ``y0 = 0``."""
    tau, p, d = phi_u.shape
    v = np.zeros((tau, p))
    y = np.zeros((tau, d))
    yt = np.zeros(d)
    for t in range(tau):
        vt = K[t] @ yt + k[t]
        yt = phi_x[t].T @ yt + phi_u[t].T @ vt
        v[t] = vt
        y[t] = yt
    return v, y


def adjoint(phi_x, phi_u, z):
    """``grad x(u) @ z``: backward recursion over the stored Jacobians."""
    tau, p, d = phi_u.shape
    out = np.zeros((tau, p))
    lam = z[tau - 1].copy()
    for t in range(tau - 1, -1, -1):
        out[t] = phi_u[t] @ lam
        if t > 0:
            lam = phi_x[t] @ lam + z[t - 1]
    return out


def tangent(phi_x, phi_u, v):
    """``grad x(u).T @ v``: forward linearized recursion from ``y0 = 0``."""
    tau, p, d = phi_u.shape
    out = np.zeros((tau, d))
    y = np.zeros(d)
    for t in range(tau):
        y = phi_x[t].T @ y + phi_u[t].T @ v[t]
        out[t] = y
    return out

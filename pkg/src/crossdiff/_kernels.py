"""Compiled inner loops for the P1 cross-diffusion scheme.

Nodal fields are stored interleaved as ``U[j, i]`` (node ``j``, species
``i``). The linear system of one fixed-point iterate is block tridiagonal
with 2x2 blocks and is solved by block Thomas elimination.

Status codes returned by :func:`run_steps`: ``OK``, ``SINGULAR`` (the
offending block row is returned as well), ``FP_DIVERGED``, ``NONFINITE``
and ``STATIONARY``.
"""

import numpy as np
from numba import njit

OK = 0
STATIONARY = 1
SINGULAR = 2
FP_DIVERGED = 3
NONFINITE = 4


@njit(cache=True)
def diffusion_at(dm, u1, u2, out):
    """``out[i, j] = d_ij^{delta 1} u1 + d_ij^{delta 2} u2``."""
    for i in range(2):
        for j in range(2):
            out[i, j] = dm[i, j, 0] * u1 + dm[i, j, 1] * u2


@njit(cache=True)
def assemble(Uprev, Ufrozen, w, h, tau, alpha, beta, dm, Ad, Al, Au, rhs):
    """Blocks and right-hand side of one linearized step in increment form.

    The unknown is ``U - Uprev``. Lumped mass, reaction
    ``u_i (alpha_i - sum_m beta_im u_m^frozen)`` implicit in ``u_i``, stiffness
    with elementwise-averaged frozen coefficients. The right-hand side is
    the frozen spatial operator applied to ``Uprev``; it is built from flux
    differences so it vanishes to rounding at a steady state.
    """
    n = Uprev.shape[0]
    De = np.empty((2, 2))
    for j in range(n):
        for a in range(2):
            r = alpha[a] - beta[a, 0] * Ufrozen[j, 0] - beta[a, 1] * Ufrozen[j, 1]
            for c in range(2):
                Ad[j, a, c] = 0.0
                Al[j, a, c] = 0.0
                Au[j, a, c] = 0.0
            Ad[j, a, a] = w[j] * (1.0 / tau - r)
            rhs[j, a] = w[j] * r * Uprev[j, a]
    for e in range(n - 1):
        # D is linear in u, so the element average of D equals D at the average
        diffusion_at(dm, 0.5 * (Ufrozen[e, 0] + Ufrozen[e + 1, 0]),
                     0.5 * (Ufrozen[e, 1] + Ufrozen[e + 1, 1]), De)
        g0 = (Uprev[e + 1, 0] - Uprev[e, 0]) / h
        g1 = (Uprev[e + 1, 1] - Uprev[e, 1]) / h
        for a in range(2):
            flux = De[a, 0] * g0 + De[a, 1] * g1
            rhs[e, a] += flux
            rhs[e + 1, a] -= flux
            for c in range(2):
                s = De[a, c] / h
                Ad[e, a, c] += s
                Ad[e + 1, a, c] += s
                Au[e, a, c] = -s
                Al[e + 1, a, c] = -s


@njit(cache=True)
def _inv2(M, out, scale):
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if not abs(det) > 1e-300 + 1e-14 * scale * scale:
        return False
    out[0, 0] = M[1, 1] / det
    out[1, 1] = M[0, 0] / det
    out[0, 1] = -M[0, 1] / det
    out[1, 0] = -M[1, 0] / det
    return True


@njit(cache=True)
def block_thomas(Ad, Al, Au, rhs, X):
    """Solve the block tridiagonal system; returns -1 or the singular block row."""
    n = rhs.shape[0]
    Cp = np.empty((n, 2, 2))
    Dp = np.empty((n, 2))
    M = np.empty((2, 2))
    Mi = np.empty((2, 2))
    v = np.empty(2)
    for j in range(n):
        for a in range(2):
            v[a] = rhs[j, a]
            for c in range(2):
                M[a, c] = Ad[j, a, c]
        if j > 0:
            for a in range(2):
                for c in range(2):
                    M[a, c] -= Al[j, a, 0] * Cp[j - 1, 0, c] + Al[j, a, 1] * Cp[j - 1, 1, c]
                v[a] -= Al[j, a, 0] * Dp[j - 1, 0] + Al[j, a, 1] * Dp[j - 1, 1]
        scale = abs(M[0, 0]) + abs(M[0, 1]) + abs(M[1, 0]) + abs(M[1, 1])
        if not _inv2(M, Mi, scale):
            return j
        for a in range(2):
            Dp[j, a] = Mi[a, 0] * v[0] + Mi[a, 1] * v[1]
            for c in range(2):
                Cp[j, a, c] = Mi[a, 0] * Au[j, 0, c] + Mi[a, 1] * Au[j, 1, c]
    for a in range(2):
        X[n - 1, a] = Dp[n - 1, a]
    for j in range(n - 2, -1, -1):
        for a in range(2):
            X[j, a] = Dp[j, a] - Cp[j, a, 0] * X[j + 1, 0] - Cp[j, a, 1] * X[j + 1, 1]
    return -1


@njit(cache=True)
def diff_norm(X, Y, w, use_l2):
    """Largest per-species norm of ``X - Y`` (lumped L2 or Euclidean)."""
    best = 0.0
    for a in range(2):
        s = 0.0
        for j in range(X.shape[0]):
            d = X[j, a] - Y[j, a]
            s += (w[j] if use_l2 else 1.0) * d * d
        s = np.sqrt(s)
        if not s <= best:
            best = s
    return best


@njit(cache=True)
def run_steps(U, nsteps, w, h, tau, alpha, beta, dm, tol_fp, tol_s, max_fp, use_l2, blowup, fp_counts):
    """Advance ``U`` in place by up to ``nsteps`` steps.

    Returns ``(status, steps_done, pivot, first_update_norm)`` where the
    norm is that of the first fixed-point iterate of the last step, i.e. the
    stationarity indicator. ``fp_counts[n]`` receives the iteration count of
    step ``n`` of this call.
    """
    n = U.shape[0]
    Ad = np.empty((n, 2, 2))
    Al = np.empty((n, 2, 2))
    Au = np.empty((n, 2, 2))
    rhs = np.empty((n, 2))
    Uk = np.empty((n, 2))
    dU = np.empty((n, 2))
    dUold = np.empty((n, 2))
    first = np.nan
    for step in range(nsteps):
        Uk[:, :] = U
        dUold[:, :] = 0.0
        converged = False
        for it in range(max_fp):
            assemble(U, Uk, w, h, tau, alpha, beta, dm, Ad, Al, Au, rhs)
            piv = block_thomas(Ad, Al, Au, rhs, dU)
            if piv >= 0:
                return SINGULAR, step, piv, first
            dn = diff_norm(dU, dUold, w, use_l2)
            if not np.isfinite(dn):
                return NONFINITE, step, -1, first
            if dn > blowup:
                return FP_DIVERGED, step, -1, first
            if it == 0:
                first = dn
            dUold[:, :] = dU
            for j in range(n):
                for a in range(2):
                    Uk[j, a] = U[j, a] + dU[j, a]
            if dn < tol_fp:
                converged = True
                fp_counts[step] = it + 1
                break
        if not converged:
            return FP_DIVERGED, step, -1, first
        U[:, :] = Uk
        if first < tol_s:
            return STATIONARY, step + 1, -1, first
    return OK, nsteps, -1, first

"""Weakly nonlinear (multiple-scales) analysis near the Turing threshold.

Writing ``u = u* + eps v1 + eps^2 v2 + ...`` with ``eps^2 = (delta_c - delta)/delta_c``
and ``v1 = A rho cos(k x)``, solvability at third order gives the
Stuart-Landau equation ``dA/dt = sigma A - ell A^3``. When both
coefficients are positive the pattern saturates at ``A_inf = sqrt(sigma/ell)``
and the stationary profile is::

    v(x) = u* + eps rho A_inf cos(k x) + eps^2 A_inf^2 (v20 + v22 cos(2 k x))

All vectors are normalized with a unit first component, ``rho = (1, M)``
and ``eta = (1, M*)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field
from typing import Callable, Sequence

import numpy as np

from .model import (
    ModelParams,
    builtin_example,
    coexistence_equilibrium,
    competition_matrix,
    diffusion_blocks,
    diffusion_split,
)
from .stability import StabilityReport, critical_pair, dispersion

__all__ = [
    "NonCriticalError",
    "KernelDimensionError",
    "SingularOperatorError",
    "DegenerateProjectionError",
    "SubcriticalError",
    "WnaExpansion",
    "LimitDiagnostics",
    "kernel_vectors",
    "q_k",
    "q_d",
    "quadratic_forms",
    "d_vector",
    "second_order_coeffs",
    "cubic_coefficients",
    "landau_coefficients",
    "expand",
    "amplitude_at",
    "stationary_profile",
    "order2_rhs",
    "order3_rhs",
    "linear_operator",
    "cos_projection",
    "r1_form",
    "r1_form_dxx",
    "r3_form",
    "e1_closed_forms",
    "limit_diagnostics",
]


class NonCriticalError(ValueError):
    """``K - k^2 D`` is not (numerically) singular at the requested point."""


class KernelDimensionError(ValueError):
    """The kernel is two-dimensional (zero matrix)."""


class SingularOperatorError(ValueError):
    """``L_j = K - j^2 k^2 D`` is singular: resonance with mode ``j k``."""

    def __init__(self, j: int, det: float):
        super().__init__(f"L_{j} is singular (det = {det:g}); mode {j}k resonates")
        self.j = j


class DegenerateProjectionError(ValueError):
    """``<rho, eta> <= 0``."""


class SubcriticalError(ValueError):
    """No saturated pattern is predicted (sigma <= 0 or ell <= 0)."""


def _K(params: ModelParams) -> np.ndarray:
    us = coexistence_equilibrium(params)
    return -params.B * us[:, None]


def _D(params: ModelParams, delta: float) -> np.ndarray:
    d0, d1 = diffusion_split(params, coexistence_equilibrium(params))
    return d0 + delta * d1


def kernel_vectors(params: ModelParams, delta_c: float, k: float, *, tol: float = 1e-6):
    """Normalized kernel vectors of ``A = K - k^2 D^{delta_c}(u*)`` and its transpose.

    ``k`` is normally the integer critical wave number; a real value is
    accepted for the exact-critical algebra. The point counts as critical
    when ``|det A| <= tol * ||A||_F^2`` (an inverse condition number).
    ``rho`` is read off the first row and ``eta`` off the first column,
    falling back to the second when the first vanishes.
    """
    A = _K(params) - k * k * _D(params, delta_c)
    scale = float(np.sum(A * A))
    if scale == 0.0:
        raise KernelDimensionError("K - k^2 D vanishes; kernel is two-dimensional")
    det = dispersion(params, delta_c, k * k)
    if abs(det) > tol * scale:
        raise NonCriticalError(
            f"|det(K - k^2 D)| / ||.||^2 = {abs(det) / scale:.3g} exceeds {tol:g}"
        )
    row = A[0] if np.any(A[0] != 0) else A[1]
    col = A[:, 0] if np.any(A[:, 0] != 0) else A[:, 1]
    if row[1] == 0 or col[1] == 0:
        raise KernelDimensionError("kernel vector has a zero first component; cannot normalize")
    rho = np.array([1.0, -row[0] / row[1]])
    eta = np.array([1.0, -col[0] / col[1]])
    return rho, eta


# ---------------------------------------------------------------------------
# quadratic interaction forms; vectors may carry trailing axes (shape (2, ...))

def q_k(params: ModelParams, x, y) -> np.ndarray:
    """Symmetric bilinear form of the quadratic reaction terms."""
    (b11, b12), (b21, b22) = params.beta
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cross = x[0] * y[1] + x[1] * y[0]
    return -np.array([2.0 * b11 * x[0] * y[0] + b12 * cross, 2.0 * b22 * x[1] * y[1] + b21 * cross])


def q_d(params: ModelParams, delta: float, x, y) -> np.ndarray:
    """Bilinear form of the self-gradient diffusion terms."""
    D1, D2 = diffusion_blocks(params, delta)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.array([
        D1[0, 0] * x[0] * y[0] + D2[0, 1] * x[1] * y[1],
        D1[1, 0] * x[0] * y[0] + D2[1, 1] * x[1] * y[1],
    ])


def quadratic_forms(params: ModelParams, delta: float, j: int, k: float, x, y) -> np.ndarray:
    """``M_j(x, y) = Q_K(x, y) - j^2 k^2 Q_D(x, y)``."""
    return q_k(params, x, y) - (j * k) ** 2 * q_d(params, delta, x, y)


def d_vector(params: ModelParams, delta: float) -> np.ndarray:
    """Cross-gradient coefficients ``(d11^{d2} + d12^{d1}, d21^{d2} + d22^{d1})``."""
    D1, D2 = diffusion_blocks(params, delta)
    return np.array([D2[0, 0] + D1[0, 1], D2[1, 0] + D1[1, 1]])


def _solve_L(params: ModelParams, delta_c: float, j: int, k: float, rhs: np.ndarray) -> np.ndarray:
    L = _K(params) - (j * k) ** 2 * _D(params, delta_c)
    det = dispersion(params, delta_c, (j * k) ** 2)
    if abs(det) <= 1e-13 * float(np.sum(L * L)):
        raise SingularOperatorError(j, det)
    return np.linalg.solve(L, rhs)


def second_order_coeffs(params: ModelParams, delta_c: float, k: float, rho) -> tuple[np.ndarray, np.ndarray]:
    """Mean and second-harmonic corrections ``(v20, v22)``.

    Solves ``L0 v20 = -M0(rho, rho)/4`` and
    ``L2 v22 = k^2 rho1 rho2 d - M2(rho, rho)/4``.
    """
    rho = np.asarray(rho, dtype=float)
    v20 = _solve_L(params, delta_c, 0, k, -0.25 * quadratic_forms(params, delta_c, 0, k, rho, rho))
    rhs2 = k * k * rho[0] * rho[1] * d_vector(params, delta_c) - 0.25 * quadratic_forms(params, delta_c, 2, k, rho, rho)
    v22 = _solve_L(params, delta_c, 2, k, rhs2)
    return v20, v22


def _r_vectors(params: ModelParams, delta_c: float, rho, v20, v22) -> tuple[np.ndarray, np.ndarray]:
    """cos(k x) and cos(3 k x) coefficients (over ``k^2``) of the mixed cross-gradient term."""
    D1, D2 = diffusion_blocks(params, delta_c)
    r1 = np.empty(2)
    r3 = np.empty(2)
    for i in range(2):
        a, c = D2[i, 0], D1[i, 1]
        r1[i] = (a * (rho[0] * (0.5 * v22[1] - v20[1]) - rho[1] * v22[0])
                 + c * (rho[1] * (0.5 * v22[0] - v20[0]) - rho[0] * v22[1]))
        r3[i] = -3.0 * (a * (rho[1] * v22[0] + 0.5 * rho[0] * v22[1])
                        + c * (rho[0] * v22[1] + 0.5 * rho[1] * v22[0]))
    return r1, r3


def cubic_coefficients(params: ModelParams, delta_c: float, k: float, rho, v20, v22, delta2: float):
    """Vectors ``(G1, G2, G3)`` of the third-order right-hand side.

    With ``A = 1`` the cos(k x) part is ``rho dA/dt - G1 - G2`` and the
    cos(3 k x) part is ``-G3``. ``G3`` is orthogonal to the adjoint mode and
    does not enter the amplitude equation.
    """
    rho = np.asarray(rho, dtype=float)
    _, D1u = diffusion_split(params, coexistence_equilibrium(params))
    r1, r3 = _r_vectors(params, delta_c, rho, v20, v22)
    g1 = k * k * delta2 * (D1u @ rho)
    g2 = (quadratic_forms(params, delta_c, 1, k, rho, v20)
          + 0.5 * quadratic_forms(params, delta_c, 1, k, rho, v22) + k * k * r1)
    g3 = 0.5 * quadratic_forms(params, delta_c, 3, k, rho, v22) + k * k * r3
    return g1, g2, g3


def landau_coefficients(params: ModelParams, delta_c: float, k: float, rho, eta, v20, v22, delta2: float):
    """Stuart-Landau coefficients ``(sigma, ell)``.

    Only the order-eps^2 regularization shift ``delta2`` enters; the
    order-eps shift and fast time are suppressed (they would produce
    secular terms).
    """
    eta = np.asarray(eta, dtype=float)
    proj = float(np.dot(rho, eta))
    if proj <= 0:
        raise DegenerateProjectionError(f"<rho, eta> = {proj:g} <= 0")
    g1, g2, _ = cubic_coefficients(params, delta_c, k, rho, v20, v22, delta2)
    return float(g1 @ eta) / proj, -float(g2 @ eta) / proj


@dataclass(frozen=True, eq=False)
class WnaExpansion:
    params: ModelParams
    delta: float
    delta_c: float
    k_c: int
    kc_sq: float
    u_star: np.ndarray
    rho: np.ndarray
    eta: np.ndarray
    eps: float
    delta2: float
    v20: np.ndarray
    v22: np.ndarray
    sigma: float
    ell: float
    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    kc_mode: str = "integer"

    @property
    def M(self) -> float:
        return float(self.rho[1])

    @property
    def Mstar(self) -> float:
        return float(self.eta[1])

    @property
    def wave_number(self) -> float:
        return math.sqrt(self.kc_sq)

    @property
    def A_inf_sq(self) -> float:
        return self.sigma / self.ell

    @property
    def A_inf(self) -> float:
        """Saturated amplitude ``sqrt(sigma/ell)`` (nan when not saturating)."""
        r = self.A_inf_sq
        return math.sqrt(r) if r > 0 else math.nan

    @property
    def rho_eta(self) -> float:
        return float(self.rho @ self.eta)

    def as_dict(self) -> dict:
        out = {
            "family": self.params.family,
            "b": self.params.b,
            "delta": self.delta,
            "delta_c": self.delta_c,
            "k_c": self.k_c,
            "kc_sq": self.kc_sq,
            "kc_mode": self.kc_mode,
            "eps": self.eps,
            "delta2": self.delta2,
            "M": self.M,
            "Mstar": self.Mstar,
            "sigma": self.sigma,
            "ell": self.ell,
            "A_inf_sq": self.A_inf_sq,
            "A_inf": self.A_inf,
        }
        for name in ("u_star", "rho", "eta", "v20", "v22", "G1", "G2", "G3"):
            out[name] = [float(v) for v in getattr(self, name)]
        return out


def expand(
    params: ModelParams,
    delta: float | None = None,
    *,
    report: StabilityReport | None = None,
    convention: str = "marginal-nearest-integer",
    kc_mode: str = "integer",
    delta2: float | None = None,
    kernel_tol: float = 1e-6,
) -> WnaExpansion:
    """Build the weakly nonlinear expansion at ``delta`` (default ``params.delta``).

    ``kc_mode="integer"`` does the algebra with the integer critical wave
    number (Neumann-compatible); ``"exact"`` uses the continuous minimizer
    ``k_m^2(delta_c)``, where the kernel is exact.
    """
    delta = params.delta if delta is None else float(delta)
    if report is None:
        report = critical_pair(params, convention)
    dc = report.delta_c
    if kc_mode == "integer":
        k = float(report.k_c)
    elif kc_mode == "exact":
        k = math.sqrt(report.kc_sq_marginal)
    else:
        raise ValueError("kc_mode must be 'integer' or 'exact'")
    if delta > dc:
        raise ValueError(f"delta = {delta:g} exceeds delta_c = {dc:g}; no pattern expansion")
    eps = math.sqrt((dc - delta) / dc)
    delta2 = dc if delta2 is None else float(delta2)
    rho, eta = kernel_vectors(params, dc, k, tol=kernel_tol)
    v20, v22 = second_order_coeffs(params, dc, k, rho)
    sigma, ell = landau_coefficients(params, dc, k, rho, eta, v20, v22, delta2)
    g1, g2, g3 = cubic_coefficients(params, dc, k, rho, v20, v22, delta2)
    return WnaExpansion(
        params=params, delta=delta, delta_c=dc, k_c=report.k_c, kc_sq=k * k,
        u_star=coexistence_equilibrium(params), rho=rho, eta=eta, eps=eps, delta2=delta2,
        v20=v20, v22=v22, sigma=sigma, ell=ell, G1=g1, G2=g2, G3=g3, kc_mode=kc_mode,
    )


def amplitude_at(sigma: float, ell: float, A0: float, t):
    """Exact solution of ``dA/dt = sigma A - ell A^3`` with ``A(0) = A0 > 0``."""
    if A0 <= 0:
        raise ValueError("A0 must be positive")
    if ell <= 0:
        raise ValueError("ell must be positive")
    t = np.asarray(t, dtype=float)
    decay = np.exp(-2.0 * sigma * t)
    # -expm1(-2 sigma t) / sigma, continuous at sigma = 0
    growth = 2.0 * t if sigma == 0 else -np.expm1(-2.0 * sigma * t) / sigma
    a = A0 / np.sqrt(decay + ell * A0 * A0 * growth)
    return float(a) if a.ndim == 0 else a


def stationary_profile(exp: WnaExpansion, x) -> np.ndarray:
    """Truncated stationary pattern at points ``x``; returns shape ``(2, len(x))``."""
    if exp.sigma <= 0 or exp.ell <= 0:
        raise SubcriticalError(f"sigma = {exp.sigma:g}, ell = {exp.ell:g}: no saturated pattern")
    x = np.asarray(x, dtype=float)
    k = exp.wave_number
    amp = exp.A_inf
    c1 = np.cos(k * x)
    c2 = np.cos(2.0 * k * x)
    return (exp.u_star[:, None]
            + exp.eps * amp * exp.rho[:, None] * c1
            + exp.eps ** 2 * amp ** 2 * (exp.v20[:, None] + exp.v22[:, None] * c2))


# ---------------------------------------------------------------------------
# pointwise residuals (independent of the coefficient algebra above)

def _harmonic(vec, j: float, k: float, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value, first and second derivative of ``vec cos(j k x)``."""
    vec = np.asarray(vec, dtype=float)[:, None]
    w = j * k
    c, s = np.cos(w * x), np.sin(w * x)
    return vec * c, -w * vec * s, -w * w * vec * c


def _add(*fields):
    return tuple(sum(parts) for parts in zip(*fields))


def _product_dxx(f, g):
    """Second derivative of the componentwise product ``f g`` (triplets)."""
    return f[2] * g[0] + 2.0 * f[1] * g[1] + f[0] * g[2]


def linear_operator(params: ModelParams, delta: float, v, vxx) -> np.ndarray:
    """``D^delta(u*) v_xx + K v`` on fields of shape ``(2, n)``."""
    return _D(params, delta) @ vxx + _K(params) @ v


def _qd_dxx(params, delta, f, g):
    D1, D2 = diffusion_blocks(params, delta)
    p1 = _product_dxx((f[0][0], f[1][0], f[2][0]), (g[0][0], g[1][0], g[2][0]))
    p2 = _product_dxx((f[0][1], f[1][1], f[2][1]), (g[0][1], g[1][1], g[2][1]))
    return np.array([D1[0, 0] * p1 + D2[0, 1] * p2, D1[1, 0] * p1 + D2[1, 1] * p2])


def _cross_flux_dx(params, delta, f, g):
    """``d/dx [d_i1^{d2} (f2 g1' + g2 f1') + d_i2^{d1} (f1 g2' + g1 f2')]``."""
    D1, D2 = diffusion_blocks(params, delta)
    a = f[1][1] * g[1][0] + f[0][1] * g[2][0] + g[1][1] * f[1][0] + g[0][1] * f[2][0]
    c = f[1][0] * g[1][1] + f[0][0] * g[2][1] + g[1][0] * f[1][1] + g[0][0] * f[2][1]
    return np.array([D2[0, 0] * a + D1[0, 1] * c, D2[1, 0] * a + D1[1, 1] * c])


def r1_form(params: ModelParams, v1) -> np.ndarray:
    """Order-eps^3 diffusion form multiplied by the suppressed shift ``delta1``."""
    d = params.d
    v = v1[0]
    return np.array([d[0, 0, 0, 1] * v[0] ** 2 + d[0, 1, 1, 1] * v[1] ** 2,
                     d[1, 0, 0, 1] * v[0] ** 2 + d[1, 1, 1, 1] * v[1] ** 2])


def r3_form(params: ModelParams, v1) -> np.ndarray:
    """Companion cross-gradient form, also multiplied by ``delta1``."""
    d = params.d
    f, fx, fxx = v1
    a = fx[1] * fx[0] + f[1] * fxx[0]
    c = fx[0] * fx[1] + f[0] * fxx[1]
    return np.array([d[0, 0, 1, 1] * a + d[0, 1, 0, 1] * c, d[1, 0, 1, 1] * a + d[1, 1, 0, 1] * c])


def order2_rhs(exp: WnaExpansion, x, *, dA_dt1: float = 0.0, delta1: float = 0.0) -> np.ndarray:
    """Second-order right-hand side ``F(x)`` for ``A = 1``, evaluated pointwise."""
    p, k, dc = exp.params, exp.wave_number, exp.delta_c
    x = np.asarray(x, dtype=float)
    v1 = _harmonic(exp.rho, 1, k, x)
    _, D1u = diffusion_split(p, exp.u_star)
    quad = 0.5 * (q_k(p, v1[0], v1[0]) + _qd_dxx(p, dc, v1, v1)) + 0.5 * _cross_flux_dx(p, dc, v1, v1)
    return dA_dt1 * v1[0] + delta1 * (D1u @ v1[2]) - quad


def order3_rhs(exp: WnaExpansion, x, *, delta1: float = 0.0) -> np.ndarray:
    """Third-order right-hand side ``G(x)`` for ``A = 1`` without the ``dA/dt`` term."""
    p, k, dc = exp.params, exp.wave_number, exp.delta_c
    x = np.asarray(x, dtype=float)
    v1 = _harmonic(exp.rho, 1, k, x)
    v2 = _add(_harmonic(exp.v20, 0, k, x), _harmonic(exp.v22, 2, k, x))
    _, D1u = diffusion_split(p, exp.u_star)
    g = (exp.delta2 * (D1u @ v1[2]) - q_k(p, v1[0], v2[0]) - _qd_dxx(p, dc, v1, v2)
         - _cross_flux_dx(p, dc, v1, v2))
    if delta1:
        g = g + delta1 * (D1u @ v2[2] + 0.5 * r1_form_dxx(p, v1) + r3_form(p, v1))
    return g


def r1_form_dxx(params: ModelParams, v1) -> np.ndarray:
    """Second derivative of :func:`r1_form`."""
    d = params.d
    p1 = _product_dxx((v1[0][0], v1[1][0], v1[2][0]), (v1[0][0], v1[1][0], v1[2][0]))
    p2 = _product_dxx((v1[0][1], v1[1][1], v1[2][1]), (v1[0][1], v1[1][1], v1[2][1]))
    return np.array([d[0, 0, 0, 1] * p1 + d[0, 1, 1, 1] * p2, d[1, 0, 0, 1] * p1 + d[1, 1, 1, 1] * p2])


def cos_projection(values, x, freq: float) -> np.ndarray:
    """``(2/pi) * int_0^pi values cos(freq x) dx`` by the trapezoid rule.

    Exact (to rounding) for cosine polynomials with integer frequencies
    below ``len(x) - 1`` on a uniform grid over ``[0, pi]``.
    """
    x = np.asarray(x, dtype=float)
    w = np.cos(freq * x)
    scale = 1.0 / np.pi if freq == 0 else 2.0 / np.pi
    return scale * np.trapezoid(np.asarray(values) * w, x, axis=-1)


# ---------------------------------------------------------------------------
# closed forms for alpha = (1, 4), B = [[1, b/2], [2, 1]], family E1

def e1_closed_forms(b: float, delta_c: float, kc_sq: float) -> dict:
    """Closed-form kernel, second-order and projection data for the E1 example.

    Valid at an exactly critical ``kc_sq``; ``det_L2`` in particular assumes
    ``kc_sq = (b - 4 delta_c) / (4 delta_c (2 + delta_c))``.
    """
    u1 = (1.0 - 2.0 * b) / (1.0 - b)
    u2 = 2.0 / (1.0 - b)
    d, k2 = delta_c, kc_sq
    M = -(1.0 + k2 * (1.0 + d)) / (0.5 * b + k2)
    Ms = -u1 * (1.0 + k2 * (1.0 + d)) / (u2 * (2.0 + k2))
    e = 1.0 + M
    v20 = np.array([-u2 * (2.0 + b * M) + b * u1 * M * (M + 2.0),
                    2.0 * u2 * (2.0 + b * M) - 2.0 * u1 * M * (M + 2.0)]) / (4.0 * u1 * u2 * (1.0 - b))
    w2 = 4.0 * np.array([-(1.0 + d) * u2 * (e + d) + u1 * M * (e + M * d),
                         u2 * (e + d) - (1.0 + d) * u1 * M * (e + M * d)])
    h = 0.5 + 0.25 * b * M
    g = M + 0.5 * M * M
    w1 = np.array([-4.0 * (1.0 + d) * u2 * h - u2 * (e + d) + 4.0 * u1 * g + 0.5 * b * u1 * M * (e + M * d),
                   4.0 * u2 * h + 2.0 * u2 * (e + d) - 4.0 * (1.0 + d) * u1 * g - u1 * M * (e + M * d)])
    w0 = np.array([-u2 * h + 0.5 * b * u1 * g, 2.0 * u2 * h - u1 * g])
    det_L2 = 9.0 * u1 * u2 * (2.0 + d) * k2 * k2 * d
    v22 = (w2 * k2 * k2 + w1 * k2 + w0) / det_L2
    S1 = 2.0 + 0.5 * M * b + 2.0 * M * Ms + k2 * (e + d)
    S2 = 0.5 * b + 2.0 * Ms * e + k2 * Ms * (e + M * d)
    T0 = np.array([0.5 * (2.0 + 0.5 * M * b + 2.0 * M * Ms), 0.25 * b + Ms * e])
    T1c = np.array([0.5 * (1.0 - M + 2.0 * M * Ms + d), 1.0 + 0.5 * Ms * (M - 1.0 + M * d)])
    T = T0 + T1c * k2
    G1_eta = k2 * d * (u1 + u2 * M * Ms)
    G2_eta = -(S1 * v20[0] + S2 * v20[1] + T[0] * v22[0] + T[1] * v22[1])
    return {
        "u_star": np.array([u1, u2]), "M": M, "Mstar": Ms, "eps_M": e,
        "v20": v20, "v22": v22, "det_L2": det_L2, "w0": w0, "w1": w1, "w2": w2,
        "S1": S1, "S2": S2, "T0": T0, "T1": T1c, "T": T,
        "G1_eta": G1_eta, "G2_eta": G2_eta,
    }


@dataclass(frozen=True)
class LimitDiagnostics:
    b: float
    delta_c: float
    kc_sq: float
    M: float = math.nan
    Mstar: float = math.nan
    eps_M: float = math.nan
    kc_sq_eps_M: float = math.nan
    kc_sq_one_plus_2Mstar: float = math.nan
    G1_eta: float = math.nan
    G2_eta: float = math.nan
    G2_scaled: float = math.nan
    T_combo: float = math.nan
    S1: float = math.nan
    S2: float = math.nan
    T1: float = math.nan
    T2: float = math.nan
    A_inf: float = math.nan
    delta_c_over_b2: float = math.nan
    error: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _is_e1_example(params: ModelParams) -> bool:
    ref = builtin_example("E1", params.b)
    return params.alpha == ref.alpha and params.beta == ref.beta and params.dtensor == ref.dtensor


def limit_diagnostics(
    b_values: Sequence[float],
    family: Callable[[float], ModelParams] | None = None,
) -> list[LimitDiagnostics]:
    """Track the small-``b`` behaviour of the critical data and amplitude.

    Each row uses the exactly critical wave number ``k_m^2(delta_c)`` so
    that the limits are not polluted by integer rounding. The ``S``/``T``
    coefficients and ``T_combo`` are only available for the E1 example
    family; for other families they are left as nan.
    """
    b_values = [float(b) for b in b_values]
    if any(not 0 < b < 0.5 for b in b_values):
        raise ValueError("b values must lie in (0, 1/2)")
    if any(b1 <= b2 for b1, b2 in zip(b_values, b_values[1:])):
        raise ValueError("b values must be strictly decreasing")
    family = family or (lambda b: builtin_example("E1", b))
    rows = []
    for b in b_values:
        try:
            params = family(b)
            exp = expand(params, delta=0.0, kc_mode="exact")
        except Exception as exc:  # row isolation
            rows.append(LimitDiagnostics(b=b, delta_c=math.nan, kc_sq=math.nan, error=f"{type(exc).__name__}: {exc}"))
            continue
        k2, dc = exp.kc_sq, exp.delta_c
        g1_eta = float(exp.G1 @ exp.eta)
        g2_eta = float(exp.G2 @ exp.eta)
        extra = {}
        if _is_e1_example(params):
            cf = e1_closed_forms(b, dc, k2)
            T = cf["T"]
            extra = dict(
                S1=float(cf["S1"]), S2=float(cf["S2"]), T1=float(T[0]), T2=float(T[1]),
                T_combo=float(k2 * dc * (T[0] * exp.v22[0] + T[1] * exp.v22[1])),
            )
        rows.append(LimitDiagnostics(
            b=b, delta_c=dc, kc_sq=k2, M=exp.M, Mstar=exp.Mstar, eps_M=1.0 + exp.M,
            kc_sq_eps_M=k2 * (1.0 + exp.M), kc_sq_one_plus_2Mstar=k2 * (1.0 + 2.0 * exp.Mstar),
            G1_eta=g1_eta, G2_eta=g2_eta, G2_scaled=k2 * dc * g2_eta,
            A_inf=exp.A_inf, delta_c_over_b2=dc / (b * b), **extra,
        ))
    return rows

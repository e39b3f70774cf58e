"""Linear stability of the coexistence equilibrium.

For a Neumann mode ``cos(k x)`` the linearized operator reduces to the
matrix ``A_k = K - k^2 D^delta(u*)`` whose determinant is the dispersion
polynomial ``h(k^2) = det(D) k^4 + q_delta k^2 + det(K)``. Since
``tr(A_k) < 0`` for every ``k``, a mode is unstable iff ``h(k^2) < 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Callable

import numpy as np

from .model import (
    ModelParams,
    coexistence_equilibrium,
    det_diffusion_coeffs,
    diffusion_split,
    signed_product_sum,
)

__all__ = [
    "NoBracketError",
    "EmptyBandError",
    "StabilityReport",
    "CONVENTIONS",
    "q_delta",
    "dispersion",
    "dispersion_coeffs",
    "km_sq",
    "marginal_function",
    "marginal_delta",
    "unstable_band",
    "critical_pair",
    "growth_rate",
    "bracketed_root",
]

CONVENTIONS = ("marginal-nearest-integer", "integer-entry")


class NoBracketError(RuntimeError):
    """The function keeps one sign over the whole search interval."""


class EmptyBandError(ValueError):
    """No wave number is unstable at the requested ``delta``."""


def bracketed_root(
    f: Callable[[float], float],
    fprime: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    bisect_rtol: float = 1e-3,
    rtol: float = 1e-14,
    max_newton: int = 50,
) -> float:
    """Root of ``f`` in ``[lo, hi]``: bisection to ``bisect_rtol``, then Newton.

    Newton steps that leave the current bracket fall back to bisection.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoBracketError(f"no sign change on [{lo:g}, {hi:g}]")
    while hi - lo > bisect_rtol * abs(hi):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    x = 0.5 * (lo + hi)
    for _ in range(max_newton):
        fx = f(x)
        if fx == 0:
            return x
        if np.sign(fx) == np.sign(flo):
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        dfx = fprime(x)
        step = fx / dfx if dfx != 0 else np.inf
        x_new = x - step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= rtol * abs(x_new) or hi - lo <= rtol * abs(hi):
            return x_new
        x = x_new
    return x


@dataclass(frozen=True)
class _Poly:
    """Equilibrium quantities as polynomials in delta."""

    det0: float
    det1: float
    det2: float
    q0: float
    q1: float
    detK: float

    def det_d(self, delta):
        return self.det0 + delta * (self.det1 + delta * self.det2)

    def det_d_prime(self, delta):
        return self.det1 + 2.0 * delta * self.det2

    def q(self, delta):
        return self.q0 + delta * self.q1


def _poly(params: ModelParams) -> _Poly:
    us = coexistence_equilibrium(params)
    B = params.B
    d0, d1 = diffusion_split(params, us)

    def q_of(d):
        return signed_product_sum([(1, d[0, 0], B[1, 1], us[1]), (1, d[1, 1], B[0, 0], us[0]),
                                   (-1, d[0, 1], B[1, 0], us[1]), (-1, d[1, 0], B[0, 1], us[0])])

    detK = signed_product_sum([(1, B[0, 0], B[1, 1], us[0], us[1]), (-1, B[0, 1], B[1, 0], us[0], us[1])])
    c0, c1, c2 = det_diffusion_coeffs(params, us)
    return _Poly(c0, c1, c2, q_of(d0), q_of(d1), detK)


def q_delta(params: ModelParams, delta: float | None = None) -> float:
    """Middle coefficient of the dispersion polynomial at the equilibrium."""
    delta = params.delta if delta is None else delta
    return _poly(params).q(delta)


def dispersion_coeffs(params: ModelParams, delta: float | None = None) -> tuple[float, float, float]:
    """``(det D^delta(u*), q_delta(u*), det K)``."""
    delta = params.delta if delta is None else delta
    p = _poly(params)
    return p.det_d(delta), p.q(delta), p.detK


def dispersion(params: ModelParams, delta: float | None, ksq):
    """``h(k^2) = det(K - k^2 D^delta(u*))``; vectorized over ``ksq``."""
    if np.any(np.asarray(ksq) < 0):
        raise ValueError("ksq must be non-negative")
    a, q, c = dispersion_coeffs(params, delta)
    ksq = np.asarray(ksq, dtype=float)
    out = (a * ksq + q) * ksq + c
    return float(out) if out.ndim == 0 else out


def km_sq(params: ModelParams, delta: float | None = None) -> float:
    """Minimizer ``-q / (2 det D)`` of the dispersion parabola."""
    a, q, _ = dispersion_coeffs(params, delta)
    return -q / (2.0 * a)


def marginal_function(params: ModelParams, delta: float) -> float:
    """``4 det(D) det(K) - q^2``; same sign as ``h(k_m^2)`` when ``det D > 0``."""
    p = _poly(params)
    return 4.0 * p.det_d(delta) * p.detK - p.q(delta) ** 2


def _search_grid(lo: float, hi: float, n: int = 241) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)


def marginal_delta(params: ModelParams, delta_max: float = 1.0, delta_min: float = 1e-16) -> float:
    """Largest-instability threshold: the root of ``h(k_m^2(delta)) = 0``.

    The search scans a log-spaced grid on ``[delta_min, delta_max]`` for the
    first sign change of :func:`marginal_function` and refines it with
    bisection and Newton.
    """
    p = _poly(params)

    def phi(s):
        return 4.0 * p.det_d(s) * p.detK - p.q(s) ** 2

    def dphi(s):
        return 4.0 * p.det_d_prime(s) * p.detK - 2.0 * p.q(s) * p.q1

    grid = _search_grid(delta_min, delta_max)
    vals = np.array([phi(s) for s in grid])
    for i in range(len(grid) - 1):
        # the unstable side has q < 0 and phi < 0
        if vals[i] < 0 <= vals[i + 1] and p.q(grid[i]) < 0:
            return bracketed_root(phi, dphi, grid[i], grid[i + 1])
    raise NoBracketError(
        f"h(k_m^2) keeps one sign on [{delta_min:g}, {delta_max:g}]; no Turing threshold"
    )


def unstable_band(params: ModelParams, delta: float) -> tuple[float, float]:
    """Squared wave numbers ``(k_-^2, k_+^2)`` bounding the unstable band."""
    if delta <= 0:
        raise ValueError("the band is undefined for delta <= 0 (det D = 0)")
    a, q, c = dispersion_coeffs(params, delta)
    disc = q * q - 4.0 * a * c
    if disc < 0:
        if disc < -1e-12 * q * q:
            raise EmptyBandError(f"no unstable wave numbers at delta = {delta:g}")
        disc = 0.0
    if q >= 0:
        raise EmptyBandError(f"q_delta = {q:g} >= 0: no unstable wave numbers")
    root = math.sqrt(disc)
    kp = (-q + root) / (2.0 * a)
    # product of roots is c / a; avoids cancellation in the small root
    km = c / (a * kp)
    return float(km), float(kp)


def growth_rate(params: ModelParams, delta: float | None, k: float) -> float:
    """Largest real part among the eigenvalues of ``A_k``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    delta = params.delta if delta is None else delta
    us = coexistence_equilibrium(params)
    d0, d1 = diffusion_split(params, us)
    A = -params.B * us[:, None] - k * k * (d0 + delta * d1)
    tr = A[0, 0] + A[1, 1]
    det = dispersion(params, delta, k * k)
    disc = 0.25 * tr * tr - det
    if disc < 0:
        return 0.5 * tr
    root = math.sqrt(disc)
    if tr < 0:
        # tr/2 + root cancels badly when |det| << tr^2; use the product of roots
        return det / (0.5 * tr - root)
    return 0.5 * tr + root


@dataclass(frozen=True)
class StabilityReport:
    delta_bar_c: float
    delta_c: float
    k_c: int
    band: tuple[float, float]
    kc_sq_marginal: float
    q_value: float
    h_min: float
    growth: float
    mode_convention: str

    def as_dict(self) -> dict:
        return asdict(self)


def _entry_delta(params: ModelParams, p: _Poly, k: int, upper: float, delta_min: float) -> float | None:
    """Largest delta <= upper at which the integer mode k becomes marginal."""
    k2 = float(k * k)

    def g(s):
        return p.det_d(s) * k2 * k2 + p.q(s) * k2 + p.detK

    def dg(s):
        return p.det_d_prime(s) * k2 * k2 + p.q1 * k2

    if g(upper) < 0:
        return upper
    grid = _search_grid(delta_min, upper)[::-1]
    vals = [g(s) for s in grid]
    for i in range(len(grid) - 1):
        if vals[i] >= 0 > vals[i + 1]:
            return bracketed_root(g, dg, grid[i + 1], grid[i])
    return None


def critical_pair(
    params: ModelParams,
    convention: str = "marginal-nearest-integer",
    *,
    delta_max: float = 1.0,
    delta_min: float = 1e-16,
) -> StabilityReport:
    """Critical bifurcation parameter and integer critical wave number.

    ``marginal-nearest-integer`` keeps ``delta_c`` at the marginal value and
    rounds ``sqrt(k_m^2)``; ``integer-entry`` takes the largest ``delta``
    at which some integer mode enters the unstable band.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    p = _poly(params)
    dbar = marginal_delta(params, delta_max=delta_max, delta_min=delta_min)
    kmsq = -p.q(dbar) / (2.0 * p.det_d(dbar))
    if convention == "marginal-nearest-integer":
        dc = dbar
        kc = max(1, int(round(math.sqrt(kmsq))))
    else:
        km = math.sqrt(kmsq)
        best = None
        for k in range(max(1, math.floor(km) - 3), math.ceil(km) + 4):
            s = _entry_delta(params, p, k, dbar, delta_min)
            if s is not None and (best is None or s > best[0]):
                best = (s, k)
        if best is None:
            raise NoBracketError("no integer mode enters the unstable band")
        dc, kc = best
    a, q = p.det_d(dc), p.q(dc)
    disc = max(q * q - 4.0 * a * p.detK, 0.0)
    kp = (-q + math.sqrt(disc)) / (2.0 * a)
    band = (float(p.detK / (a * kp)), float(kp))
    return StabilityReport(
        delta_bar_c=dbar,
        delta_c=dc,
        k_c=kc,
        band=band,
        kc_sq_marginal=kmsq,
        q_value=q,
        h_min=p.detK - q * q / (4.0 * a),
        growth=growth_rate(params, dc, kc),
        mode_convention=convention,
    )

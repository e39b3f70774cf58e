"""Problem data for regularized Busenberg-Travis systems.

A model is a competitive Lotka-Volterra reaction term plus a diffusion
matrix that is linear in the densities and affine in the regularization
parameter ``delta``::

    d_ij(u) = d_ij^{10} u1 + d_ij^{11} u1 delta + d_ij^{20} u2 + d_ij^{21} u2 delta

The sixteen coefficients are stored in a ``(2, 2, 2, 2)`` tensor indexed
``[i, j, m, n]`` (zero based, so ``d[0, 1, 1, 0]`` is ``d_12^{20}``).
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "HypothesisError",
    "ModelParams",
    "Clause",
    "ValidationReport",
    "builtin_example",
    "competition_matrix",
    "coexistence_equilibrium",
    "diffusion_matrix",
    "diffusion_split",
    "diffusion_blocks",
    "det_diffusion",
    "det_diffusion_coeffs",
    "reaction",
    "jacobian_K",
    "validate_hypotheses",
    "load_config",
    "save_config",
    "DEFAULT_DELTA_GRID",
    "DEFAULT_U_PROBES",
]


class HypothesisError(ValueError):
    """Raised when the data violate a structural assumption of the model."""


@dataclass(frozen=True)
class ModelParams:
    """Immutable coefficient set ``(alpha, beta, d, b, delta)``.

    ``beta`` is the competition matrix ``B^b`` as nested tuples and
    ``dtensor`` the 16 diffusion coefficients flattened in ``[i, j, m, n]``
    order. Use :func:`builtin_example` for the families of interest, or
    :meth:`from_arrays` for custom ones.
    """

    alpha: tuple[float, float]
    beta: tuple[tuple[float, float], tuple[float, float]]
    dtensor: tuple[float, ...]
    b: float = 0.0
    delta: float = 0.0
    family: str = "custom"

    def __post_init__(self):
        if len(self.dtensor) != 16:
            raise ValueError("dtensor must hold 16 coefficients")
        values = [*self.alpha, *self.beta[0], *self.beta[1], *self.dtensor, self.b, self.delta]
        if not all(np.isfinite(values)):
            raise ValueError("coefficients must be finite")
        if min(values) < 0:
            raise HypothesisError("all coefficients must be non-negative")

    @classmethod
    def from_arrays(cls, alpha, beta, d, b=0.0, delta=0.0, family="custom") -> "ModelParams":
        alpha = np.asarray(alpha, dtype=float).reshape(2)
        beta = np.asarray(beta, dtype=float).reshape(2, 2)
        d = np.asarray(d, dtype=float).reshape(2, 2, 2, 2)
        return cls(
            alpha=(float(alpha[0]), float(alpha[1])),
            beta=((float(beta[0, 0]), float(beta[0, 1])), (float(beta[1, 0]), float(beta[1, 1]))),
            dtensor=tuple(float(v) for v in d.ravel()),
            b=float(b),
            delta=float(delta),
            family=family,
        )

    @cached_property
    def alpha_vec(self) -> np.ndarray:
        a = np.array(self.alpha, dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def B(self) -> np.ndarray:
        m = np.array(self.beta, dtype=float)
        m.flags.writeable = False
        return m

    @cached_property
    def d(self) -> np.ndarray:
        t = np.array(self.dtensor, dtype=float).reshape(2, 2, 2, 2)
        t.flags.writeable = False
        return t

    def with_delta(self, delta: float) -> "ModelParams":
        return dataclasses.replace(self, delta=float(delta))


def competition_matrix(b: float) -> np.ndarray:
    """The example competition matrix ``[[1, b/2], [2, 1]]``."""
    return np.array([[1.0, 0.5 * b], [2.0, 1.0]])


def _family_tensor(which: str) -> np.ndarray:
    d = np.zeros((2, 2, 2, 2))
    if which == "E1":
        # D = [[(1+delta) u1, u1], [u2, (1+delta) u2]]
        d[0, 0, 0, 0] = d[0, 0, 0, 1] = 1.0
        d[0, 1, 0, 0] = 1.0
        d[1, 0, 1, 0] = 1.0
        d[1, 1, 1, 0] = d[1, 1, 1, 1] = 1.0
    elif which == "E2":
        # D = [[(1+delta) u1 + delta/2 u2, (1+delta/2) u1],
        #      [(1+delta/2) u2, delta/2 u1 + (1+delta) u2]]
        d[0, 0, 0, 0] = d[0, 0, 0, 1] = 1.0
        d[0, 0, 1, 1] = 0.5
        d[0, 1, 0, 0] = 1.0
        d[0, 1, 0, 1] = 0.5
        d[1, 0, 1, 0] = 1.0
        d[1, 0, 1, 1] = 0.5
        d[1, 1, 0, 1] = 0.5
        d[1, 1, 1, 0] = d[1, 1, 1, 1] = 1.0
    else:
        raise ValueError(f"unknown family {which!r}")
    return d


def builtin_example(which: str, b: float, delta: float = 0.0) -> ModelParams:
    """Return one of the built-in model families.

    ``which`` is ``"E1"``, ``"E2"`` or ``"BT-limit"`` (E1 with ``delta = 0``).
    Kinetics are ``alpha = (1, 4)`` with the competition matrix
    :func:`competition_matrix`, for which the coexistence equilibrium is
    ``(1 - 2b, 2) / (1 - b)``.
    """
    key = which.upper().replace("_", "-")
    if key == "BT-LIMIT":
        key, delta = "E1", 0.0
    if key not in ("E1", "E2"):
        raise ValueError(f"unknown family {which!r}")
    if not 0.0 <= b < 0.5:
        raise HypothesisError(f"b must lie in [0, 1/2), got {b}")
    if delta < 0:
        raise HypothesisError("delta must be non-negative")
    return ModelParams.from_arrays(
        alpha=(1.0, 4.0), beta=competition_matrix(b), d=_family_tensor(key),
        b=b, delta=delta, family=key.lower(),
    )


def coexistence_equilibrium(params: ModelParams) -> np.ndarray:
    """Positive steady state of the kinetics.

    Raises :class:`HypothesisError` when the competition data do not give a
    strictly positive equilibrium.
    """
    a1, a2 = params.alpha
    (b11, b12), (b21, b22) = params.beta
    det = b11 * b22 - b12 * b21
    n1 = b22 * a1 - b12 * a2
    n2 = b11 * a2 - b21 * a1
    if det <= 0 or n1 <= 0 or n2 <= 0:
        raise HypothesisError(
            f"no positive coexistence equilibrium (det B = {det:g}, numerators {n1:g}, {n2:g})"
        )
    return np.array([n1 / det, n2 / det])


def diffusion_blocks(params: ModelParams, delta: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Constant matrices ``(D^{delta 1}, D^{delta 2})`` with ``D(u) = D1 u1 + D2 u2``."""
    delta = params.delta if delta is None else delta
    d = params.d
    return d[:, :, 0, 0] + delta * d[:, :, 0, 1], d[:, :, 1, 0] + delta * d[:, :, 1, 1]


def diffusion_split(params: ModelParams, u) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(D^0(u), D^1(u))`` so that ``D^delta(u) = D^0(u) + delta D^1(u)``."""
    u1, u2 = np.asarray(u, dtype=float)
    d = params.d
    return d[:, :, 0, 0] * u1 + d[:, :, 1, 0] * u2, d[:, :, 0, 1] * u1 + d[:, :, 1, 1] * u2


def diffusion_matrix(params: ModelParams, u, delta: float | None = None) -> np.ndarray:
    delta = params.delta if delta is None else delta
    d0, d1 = diffusion_split(params, u)
    return d0 + delta * d1


def det_diffusion_coeffs(params: ModelParams, u) -> tuple[float, float, float]:
    """Coefficients ``(c0, c1, c2)`` of ``det D^delta(u) = c0 + c1 delta + c2 delta^2``.

    Expanding in ``delta`` avoids the cancellation of ``d11 d22 - d12 d21``
    for the nearly singular matrices met when ``delta`` is tiny.
    """
    a, c = diffusion_split(params, u)
    c0 = signed_product_sum([(1, a[0, 0], a[1, 1]), (-1, a[0, 1], a[1, 0])])
    c1 = signed_product_sum([(1, a[0, 0], c[1, 1]), (1, c[0, 0], a[1, 1]),
                             (-1, a[0, 1], c[1, 0]), (-1, c[0, 1], a[1, 0])])
    c2 = signed_product_sum([(1, c[0, 0], c[1, 1]), (-1, c[0, 1], c[1, 0])])
    return c0, c1, c2


def signed_product_sum(terms) -> float:
    """Correctly rounded ``sum(sign * x * y * ...)`` over float factors.

    Exact rational arithmetic; used where O(1) products cancel to a small
    remainder (``det D^0`` and the delta-free part of ``q``).
    """
    total = Fraction(0)
    for sign, *factors in terms:
        prod = Fraction(sign)
        for f in factors:
            prod *= Fraction(float(f))
        total += prod
    return float(total)


def det_diffusion(params: ModelParams, u, delta: float | None = None) -> float:
    delta = params.delta if delta is None else delta
    c0, c1, c2 = det_diffusion_coeffs(params, u)
    return c0 + delta * (c1 + delta * c2)


def reaction(params: ModelParams, u) -> np.ndarray:
    """Lotka-Volterra term ``f_i = u_i (alpha_i - beta_i1 u1 - beta_i2 u2)``.

    ``u`` may carry trailing axes (shape ``(2, ...)``).
    """
    u = np.asarray(u, dtype=float)
    B = params.B
    a = params.alpha_vec
    rate = a.reshape((2,) + (1,) * (u.ndim - 1)) - np.tensordot(B, u, axes=(1, 0))
    return u * rate


def jacobian_K(params: ModelParams) -> np.ndarray:
    """Jacobian of the reaction at the coexistence equilibrium."""
    us = coexistence_equilibrium(params)
    return -params.B * us[:, None]


# ---------------------------------------------------------------------------
# hypothesis checks

DEFAULT_DELTA_GRID = (0.0,) + tuple(float(v) for v in np.logspace(-6, 0, 7))
DEFAULT_U_PROBES = tuple((a, c) for a in (0.1, 0.5, 1.0, 2.0, 5.0) for c in (0.1, 0.5, 1.0, 2.0, 5.0))


@dataclass(frozen=True)
class Clause:
    name: str
    passed: bool
    margin: float
    note: str = ""


@dataclass(frozen=True)
class ValidationReport:
    clauses: tuple[Clause, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.clauses)

    def __getitem__(self, name: str) -> Clause:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[Clause]:
        return [c for c in self.clauses if not c.passed]

    def as_dict(self) -> dict:
        return {c.name: {"passed": c.passed, "margin": c.margin, "note": c.note} for c in self.clauses}


def validate_hypotheses(
    params: ModelParams,
    delta_grid: Sequence[float] = DEFAULT_DELTA_GRID,
    u_probe: Sequence[Sequence[float]] = DEFAULT_U_PROBES,
) -> ValidationReport:
    """Spot-check the structural hypotheses on finite probe sets.

    Positivity and monotonicity of the diffusion matrix are checked on
    ``delta_grid x u_probe``; the instability conditions are evaluated at
    the equilibrium for every grid value not exceeding ``params.delta``
    (plus ``params.delta`` itself). Failures are reported, not raised.
    """
    from .stability import q_delta

    if len(delta_grid) == 0 or len(u_probe) == 0:
        raise ValueError("probe grids must be non-empty")
    grid = np.unique(np.asarray(delta_grid, dtype=float))
    probes = [np.asarray(u, dtype=float) for u in u_probe]
    clauses = []

    a1, a2 = params.alpha
    (b11, b12), (b21, b22) = params.beta
    m1 = b22 * a1 - b12 * a2
    m2 = b11 * a2 - b21 * a1
    detB = b11 * b22 - b12 * b21
    trB = b11 + b22
    clauses += [
        Clause("B:equilibrium_u1", bool(m1 > 0), float(m1)),
        Clause("B:equilibrium_u2", bool(m2 > 0), float(m2)),
        Clause("B:det", bool(detB > 0), float(detB)),
        Clause("B:trace", bool(trB >= 0), float(trB)),
    ]

    positive = grid[grid > 0]
    diag_margin = min(
        (min(diffusion_matrix(params, u, s)[i, i] for i in range(2)) for s in positive for u in probes),
        default=np.inf,
    )
    det_margin = min((det_diffusion(params, u, s) for s in positive for u in probes), default=np.inf)
    mono_margin = np.inf
    if grid.size > 1:
        for u in probes:
            dets = np.array([det_diffusion(params, u, s) for s in grid])
            mono_margin = min(mono_margin, float(np.min(np.diff(dets) / np.diff(grid))))
    clauses += [
        Clause("HD:diag_positive", bool(diag_margin > 0), float(diag_margin)),
        Clause("HD:det_positive", bool(det_margin > 0), float(det_margin)),
        Clause("HD:det_increasing", bool(mono_margin > 0), float(mono_margin), "finite differences over delta grid"),
    ]

    try:
        us = coexistence_equilibrium(params)
    except HypothesisError as exc:
        clauses.append(Clause("inst:q_negative", False, np.nan, str(exc)))
        return ValidationReport(tuple(clauses))

    K = -params.B * us[:, None]
    detK = float(np.linalg.det(K))
    relevant = np.unique(np.append(grid[grid <= params.delta], params.delta))
    # tr(K^{-1} D) = -q / det K
    tr_margin = min(-q_delta(params, s) / detK for s in relevant)
    q = q_delta(params, params.delta)
    clauses += [
        Clause("inst2:trace_positive", bool(tr_margin > 0), float(tr_margin), f"delta in [0, {params.delta:g}]"),
        Clause("inst:q_negative", bool(q < 0), float(-q)),
    ]
    return ValidationReport(tuple(clauses))


# ---------------------------------------------------------------------------
# flat key = value configuration files

_SECTION = "model"
_D_KEYS = [f"d{i + 1}{j + 1}_{m + 1}{n}" for i in range(2) for j in range(2) for m in range(2) for n in range(2)]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_config(params: ModelParams, path: str | Path) -> None:
    """Write ``params`` as ``key = value`` lines (17 significant digits)."""
    lines = [f"family = {params.family}", f"b = {_fmt(params.b)}", f"delta = {_fmt(params.delta)}"]
    lines += [f"alpha{i + 1} = {_fmt(params.alpha[i])}" for i in range(2)]
    lines += [f"beta{i + 1}{j + 1} = {_fmt(params.beta[i][j])}" for i in range(2) for j in range(2)]
    lines += [f"{k} = {_fmt(v)}" for k, v in zip(_D_KEYS, params.dtensor)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_config(text: str) -> ModelParams:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(f"[{_SECTION}]\n" + text)
    sec = cp[_SECTION]
    family = sec.get("family", "custom").strip().lower()
    b = sec.getfloat("b", 0.0)
    delta = sec.getfloat("delta", 0.0)
    if family in ("e1", "e2", "bt-limit"):
        base = builtin_example(family.upper(), b, delta)
        alpha = [sec.getfloat(f"alpha{i + 1}", base.alpha[i]) for i in range(2)]
        beta = [[sec.getfloat(f"beta{i + 1}{j + 1}", base.beta[i][j]) for j in range(2)] for i in range(2)]
        d = base.d
        family = base.family
    elif family == "custom":
        alpha = [sec.getfloat(f"alpha{i + 1}", 0.0) for i in range(2)]
        beta = [[sec.getfloat(f"beta{i + 1}{j + 1}", 0.0) for j in range(2)] for i in range(2)]
        d = [sec.getfloat(k, 0.0) for k in _D_KEYS]
    else:
        raise ValueError(f"unknown family {family!r}")
    unknown = set(sec) - {"family", "b", "delta", "alpha1", "alpha2", *(f"beta{i}{j}" for i in (1, 2) for j in (1, 2)), *_D_KEYS}
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    return ModelParams.from_arrays(alpha, beta, d, b=b, delta=delta, family=family)


def load_config(path: str | Path) -> ModelParams:
    return parse_config(Path(path).read_text())

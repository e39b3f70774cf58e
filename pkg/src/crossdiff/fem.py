"""Finite element solver for the regularized cross-diffusion system on (0, pi).

Piecewise-linear elements on a uniform mesh, lumped mass, zero-flux
boundaries (natural), backward Euler in time with a fixed-point
linearization inside each step: at iterate ``k`` the diffusion matrix is
frozen at ``u^{n,k-1}`` and the reaction is taken as
``u_i^{n,k} (alpha_i - beta_i1 u_1^{n,k-1} - beta_i2 u_2^{n,k-1})``.
Steps are repeated until the first iterate of a step moves less than
``tol_s``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels as K
from .model import ModelParams, coexistence_equilibrium, diffusion_blocks

__all__ = [
    "SolverConfig",
    "Mesh",
    "FemState",
    "InitialCondition",
    "TrajectorySummary",
    "SingularSystemError",
    "FixedPointDivergence",
    "NonFiniteStateError",
    "MeshMismatchError",
    "lumped_inner_product",
    "lumped_norm",
    "assemble_system",
    "solve_block_system",
    "solve_banded_reference",
    "fixed_point_step",
    "advance",
    "run_to_stationary",
    "total_variation",
    "measure_amplitude",
    "cosine_spectrum",
    "dominant_mode",
]


class SingularSystemError(ArithmeticError):
    def __init__(self, pivot: int):
        super().__init__(f"singular linear system at block row {pivot}")
        self.pivot = pivot


class FixedPointDivergence(RuntimeError):
    """The fixed-point iteration did not meet ``tol_fp`` or blew up."""


class NonFiniteStateError(FloatingPointError):
    pass


class MeshMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    n_nodes: int = 128
    tau: float = 0.01
    tol_fp: float = 1e-7
    tol_s: float = 1e-12
    max_fp_iters: int = 50
    max_steps: int = 5_000_000
    snapshot_every: int = 1000
    norm: str = "l2"  # "l2" (lumped) or "euclid" (nodal vector)
    blowup: float = 1e12

    def __post_init__(self):
        if self.n_nodes < 3:
            raise ValueError("n_nodes must be at least 3")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not (self.tol_fp > 0 and self.tol_s > 0):
            raise ValueError("tolerances must be positive")
        if self.max_fp_iters < 1 or self.max_steps < 0 or self.snapshot_every < 1:
            raise ValueError("iteration and step limits must be positive")
        if self.norm not in ("l2", "euclid"):
            raise ValueError("norm must be 'l2' or 'euclid'")


@dataclass(frozen=True, eq=False)
class Mesh:
    n_nodes: int

    def __post_init__(self):
        if self.n_nodes < 3:
            raise ValueError("n_nodes must be at least 3")

    @property
    def h(self) -> float:
        return math.pi / (self.n_nodes - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, math.pi, self.n_nodes)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


@dataclass(eq=False)
class FemState:
    mesh: Mesh
    u1: np.ndarray
    u2: np.ndarray
    step: int = 0
    tau: float = 0.0
    fp_iters: int = 0

    @property
    def t(self) -> float:
        return self.step * self.tau

    @property
    def U(self) -> np.ndarray:
        """Interleaved copy, shape ``(N, 2)``."""
        return np.column_stack([self.u1, self.u2])

    @classmethod
    def from_interleaved(cls, mesh: Mesh, U: np.ndarray, **kw) -> "FemState":
        return cls(mesh, U[:, 0].copy(), U[:, 1].copy(), **kw)

    def min_density(self) -> float:
        return float(min(self.u1.min(), self.u2.min()))


@dataclass(frozen=True)
class InitialCondition:
    """Initial data ``u(0, x)``.

    kinds: ``cosine`` (``u* + amp * direction * cos(k x)``), ``noise``
    (``u* + amp * ||u*||_inf * xi``, ``xi`` uniform on [-1, 1]), ``bump``
    (Gaussian of width ``width`` at ``x = 0``), ``constant`` (``values``)
    and ``custom`` (nodal ``values`` of shape (2, N)).
    """

    kind: str = "noise"
    amp: float = 1e-3
    k: int = 1
    direction: tuple[float, float] = (1.0, 1.0)
    seed: int = 12345
    width: float = 0.2
    values: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("cosine", "noise", "bump", "constant", "custom"):
            raise ValueError(f"unknown initial-condition kind {self.kind!r}")
        if self.amp < 0:
            raise ValueError("amp must be non-negative")

    def build(self, params: ModelParams, mesh: Mesh) -> FemState:
        x = mesh.x
        if self.kind == "constant":
            c = np.asarray(self.values, dtype=float)
            U = np.broadcast_to(c[:, None], (2, mesh.n_nodes)).copy()
        elif self.kind == "custom":
            U = np.array(self.values, dtype=float)
            if U.shape != (2, mesh.n_nodes):
                raise MeshMismatchError(f"custom data has shape {U.shape}, mesh needs (2, {mesh.n_nodes})")
        else:
            us = coexistence_equilibrium(params)
            if self.kind == "cosine":
                pert = self.amp * np.asarray(self.direction, dtype=float)[:, None] * np.cos(self.k * x)
            elif self.kind == "noise":
                rng = np.random.default_rng(self.seed)
                pert = self.amp * np.abs(us).max() * rng.uniform(-1.0, 1.0, size=(2, mesh.n_nodes))
            else:
                pert = self.amp * np.asarray(self.direction, dtype=float)[:, None] * np.exp(-(x / self.width) ** 2)
            U = us[:, None] + pert
        if not np.all(np.isfinite(U)):
            raise NonFiniteStateError("initial data is not finite")
        if np.any(U <= 0):
            raise ValueError("initial densities must be positive")
        return FemState(mesh, U[0].copy(), U[1].copy())


def _check_mesh(mesh: Mesh, *fields):
    for f in fields:
        if np.shape(f)[-1] != mesh.n_nodes:
            raise MeshMismatchError(f"field of length {np.shape(f)[-1]} on a mesh with {mesh.n_nodes} nodes")


def lumped_inner_product(mesh: Mesh, f, g) -> float:
    """``sum_i w_i f_i g_i`` with trapezoidal weights."""
    _check_mesh(mesh, f, g)
    return float(np.sum(mesh.weights * np.asarray(f) * np.asarray(g)))


def lumped_norm(mesh: Mesh, f) -> float:
    return math.sqrt(lumped_inner_product(mesh, f, f))


def _kernel_args(params: ModelParams):
    D1, D2 = diffusion_blocks(params, params.delta)
    dm = np.ascontiguousarray(np.stack([D1, D2], axis=-1))
    return (np.ascontiguousarray(params.alpha_vec, dtype=float),
            np.ascontiguousarray(params.B, dtype=float), dm)


def assemble_system(state_prev: FemState, iterate_prev, params: ModelParams, cfg: SolverConfig):
    """Blocks and right-hand side of one linearized solve for the increment ``U - U_prev``."""
    mesh = state_prev.mesh
    Uk = np.ascontiguousarray(np.asarray(iterate_prev, dtype=float).T)
    _check_mesh(mesh, Uk.T)
    n = mesh.n_nodes
    Ad, Al, Au = (np.empty((n, 2, 2)) for _ in range(3))
    rhs = np.empty((n, 2))
    alpha, beta, dm = _kernel_args(params)
    K.assemble(np.ascontiguousarray(state_prev.U), Uk, mesh.weights, mesh.h, cfg.tau,
               alpha, beta, dm, Ad, Al, Au, rhs)
    return Ad, Al, Au, rhs


def solve_block_system(Ad, Al, Au, rhs) -> np.ndarray:
    X = np.empty_like(rhs)
    piv = K.block_thomas(Ad, Al, Au, rhs, X)
    if piv >= 0:
        raise SingularSystemError(int(piv))
    return X


def solve_banded_reference(Ad, Al, Au, rhs) -> np.ndarray:
    """Same system through LAPACK banded LU on the interleaved unknowns."""
    n = rhs.shape[0]
    m = 2 * n
    ab = np.zeros((7, m))  # 3 sub- and 3 super-diagonals
    for j in range(n):
        for a in range(2):
            r = 2 * j + a
            for c in range(2):
                entries = [(2 * j + c, Ad[j, a, c])]
                if j > 0:
                    entries.append((2 * (j - 1) + c, Al[j, a, c]))
                if j < n - 1:
                    entries.append((2 * (j + 1) + c, Au[j, a, c]))
                for col, val in entries:
                    ab[3 + r - col, col] = val
    x = solve_banded((3, 3), ab, rhs.reshape(-1))
    return x.reshape(n, 2)


def fixed_point_step(state_prev: FemState, iterate_prev, params: ModelParams, cfg: SolverConfig) -> np.ndarray:
    """One linearized solve; ``iterate_prev`` and the result have shape ``(2, N)``."""
    if not (np.all(np.isfinite(state_prev.u1)) and np.all(np.isfinite(state_prev.u2))
            and np.all(np.isfinite(iterate_prev))):
        raise NonFiniteStateError("non-finite input to fixed_point_step")
    dU = solve_block_system(*assemble_system(state_prev, iterate_prev, params, cfg))
    return np.vstack([state_prev.u1, state_prev.u2]) + dU.T


def _run(U, nsteps, params, cfg, mesh):
    alpha, beta, dm = _kernel_args(params)
    counts = np.zeros(max(nsteps, 1), dtype=np.int64)
    status, done, piv, first = K.run_steps(
        U, nsteps, mesh.weights, mesh.h, cfg.tau, alpha, beta, dm, cfg.tol_fp, cfg.tol_s,
        cfg.max_fp_iters, cfg.norm == "l2", cfg.blowup, counts)
    return int(status), int(done), int(piv), float(first), counts[:done]


def _raise_for(status: int, piv: int, step: int):
    if status == K.SINGULAR:
        raise SingularSystemError(piv)
    if status == K.FP_DIVERGED:
        raise FixedPointDivergence(f"fixed-point iteration failed at step {step}")
    if status == K.NONFINITE:
        raise NonFiniteStateError(f"non-finite iterate at step {step}")


def _require_finite(state: FemState):
    if not (np.all(np.isfinite(state.u1)) and np.all(np.isfinite(state.u2))):
        raise NonFiniteStateError("state has non-finite nodal values")


def advance(state: FemState, params: ModelParams, cfg: SolverConfig) -> FemState:
    """One time step (fixed-point iterated to ``tol_fp``)."""
    _require_finite(state)
    U = np.ascontiguousarray(state.U)
    tol_s_off = replace(cfg, tol_s=1e-300)
    status, done, piv, _, counts = _run(U, 1, params, tol_s_off, state.mesh)
    _raise_for(status, piv, state.step + 1)
    return FemState.from_interleaved(state.mesh, U, step=state.step + 1, tau=cfg.tau,
                                     fp_iters=int(counts[0]))


def total_variation(state_or_u1) -> float:
    """``sum |u1[i+1] - u1[i]|``, the exact total variation of the P1 interpolant."""
    u1 = state_or_u1.u1 if isinstance(state_or_u1, FemState) else np.asarray(state_or_u1)
    return float(np.sum(np.abs(np.diff(u1))))


def measure_amplitude(state: FemState, u_star, k: int) -> tuple[float, float]:
    """``(projection, half_range)`` of the first species about ``u_star[0]``.

    ``projection = (2/pi) (u1 - u1*, cos(k x))^h``; ``half_range = (max - min)/2``.
    """
    dev = state.u1 - u_star[0]
    proj = 2.0 / math.pi * lumped_inner_product(state.mesh, dev, np.cos(k * state.mesh.x))
    return float(proj), float(0.5 * (state.u1.max() - state.u1.min()))


def cosine_spectrum(state: FemState, k_max: int | None = None) -> np.ndarray:
    """``|(2/pi) (u1 - mean, cos(k x))^h|`` for ``k = 0 .. k_max``."""
    mesh = state.mesh
    k_max = (mesh.n_nodes - 1) // 2 if k_max is None else k_max
    dev = state.u1 - lumped_inner_product(mesh, state.u1, np.ones(mesh.n_nodes)) / math.pi
    basis = np.cos(np.outer(np.arange(k_max + 1), mesh.x))
    return np.abs(2.0 / math.pi * (basis * mesh.weights) @ dev)


def dominant_mode(state: FemState) -> int:
    """Wave number ``k >= 1`` carrying the largest cosine coefficient of ``u1``."""
    spec = cosine_spectrum(state)
    return int(np.argmax(spec[1:]) + 1)


@dataclass
class TrajectorySummary:
    final: FemState
    steps: int
    stationary: bool
    last_update: float
    times: np.ndarray
    amplitude: np.ndarray
    half_range: np.ndarray
    tv: np.ndarray
    min_density: np.ndarray
    update_norm: np.ndarray
    fp_mean: float
    fp_max: int
    wall_seconds: float
    k_track: int
    message: str = ""
    profiles: list = field(default_factory=list)  # (t, u1, u2) when requested

    def series_table(self) -> np.ndarray:
        return np.column_stack([self.times, self.amplitude, self.half_range, self.tv,
                                self.min_density, self.update_norm])

    def as_dict(self) -> dict:
        return {
            "steps": self.steps,
            "time": self.final.t,
            "stationary": self.stationary,
            "last_update": self.last_update,
            "fp_mean": self.fp_mean,
            "fp_max": self.fp_max,
            "wall_seconds": self.wall_seconds,
            "k_track": self.k_track,
            "final_amplitude": float(self.amplitude[-1]) if len(self.amplitude) else math.nan,
            "final_tv": float(self.tv[-1]) if len(self.tv) else math.nan,
            "min_density": float(self.min_density.min()) if len(self.min_density) else math.nan,
            "message": self.message,
        }


def run_to_stationary(
    ic: InitialCondition | FemState,
    params: ModelParams,
    cfg: SolverConfig,
    *,
    k_track: int | None = None,
    profile_every: int = 0,
) -> TrajectorySummary:
    """Integrate until the stationarity test passes or ``max_steps`` is reached.

    Diagnostics (cosine projection on mode ``k_track``, half range, TV,
    minimum density, last first-iterate update) are sampled every
    ``snapshot_every`` steps and at the end. With ``profile_every = m > 0``
    every ``m``-th snapshot also keeps the nodal profile.
    """
    mesh = Mesh(cfg.n_nodes)
    state = ic if isinstance(ic, FemState) else ic.build(params, mesh)
    if state.mesh.n_nodes != cfg.n_nodes:
        raise MeshMismatchError("initial state and config disagree on n_nodes")
    mesh = state.mesh
    _require_finite(state)
    us = coexistence_equilibrium(params)
    if k_track is None:
        k_track = ic.k if isinstance(ic, InitialCondition) else 1
    U = np.ascontiguousarray(state.U)
    step = state.step
    rows: list[tuple] = []
    profiles: list = []
    fp_total = 0
    fp_max = 0
    last = math.nan
    stationary = False
    message = ""
    t0 = time.perf_counter()

    def record():
        st = FemState.from_interleaved(mesh, U, step=step, tau=cfg.tau)
        proj, half = measure_amplitude(st, us, k_track)
        rows.append((step * cfg.tau, proj, half, total_variation(st), st.min_density(), last))
        if profile_every and (len(rows) - 1) % profile_every == 0:
            profiles.append((st.t, st.u1, st.u2))

    record()
    while step - state.step < cfg.max_steps:
        chunk = min(cfg.snapshot_every, cfg.max_steps - (step - state.step))
        status, done, piv, first, counts = _run(U, chunk, params, cfg, mesh)
        step += done
        if done:
            fp_total += int(counts.sum())
            fp_max = max(fp_max, int(counts.max()))
            last = first
        if status in (K.SINGULAR, K.FP_DIVERGED, K.NONFINITE):
            record()
            _raise_for(status, piv, step + 1)
        record()
        if status == K.STATIONARY:
            stationary = True
            break
    else:
        message = f"max_steps = {cfg.max_steps} reached before stationarity"
    taken = step - state.step
    final = FemState.from_interleaved(mesh, U, step=step, tau=cfg.tau)
    arr = np.array(rows, dtype=float).reshape(-1, 6)
    return TrajectorySummary(
        final=final, steps=taken, stationary=stationary, last_update=last,
        times=arr[:, 0], amplitude=arr[:, 1], half_range=arr[:, 2], tv=arr[:, 3],
        min_density=arr[:, 4], update_norm=arr[:, 5],
        fp_mean=fp_total / taken if taken else 0.0, fp_max=fp_max,
        wall_seconds=time.perf_counter() - t0, k_track=k_track, message=message,
        profiles=profiles,
    )

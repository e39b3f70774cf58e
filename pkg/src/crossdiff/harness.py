"""Experiment drivers: analytic thresholds, WNA prediction and FEM run per row.

A row is one ``(family, b, delta, N)`` setting. Each row is computed by
:func:`run_row`, written to its own directory (``summary.json``,
``profile.csv``, ``series.csv``) and summarized in ``report.csv``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import fem, wna
from .model import builtin_example, coexistence_equilibrium
from .stability import critical_pair, growth_rate

log = logging.getLogger(__name__)

__all__ = [
    "REFERENCE_ROWS",
    "REFERENCE_FAMILY_COMPARISON",
    "ZeroNormError",
    "HarnessConfig",
    "RowSpec",
    "RowResult",
    "ExperimentReport",
    "relative_difference",
    "run_row",
    "experiment1",
    "experiment2",
    "sweep",
    "check_experiment1",
    "check_experiment2",
    "write_report",
]

# reference rows: b, 0.95 delta_c, k_c, A_inf, nodes, steps to stationary
REFERENCE_ROWS = {
    1: dict(b=3.85e-2, delta=4.53e-5, k_c=10, A_inf=1.21e-2, n_nodes=128, steps=3.0e4),
    2: dict(b=9.91e-3, delta=2.94e-6, k_c=20, A_inf=3.1e-3, n_nodes=256, steps=1.9e5),
    3: dict(b=4.42e-3, delta=5.83e-7, k_c=30, A_inf=1.4e-3, n_nodes=512, steps=4.4e5),
}

# reference E1 vs E2 relative differences per row
REFERENCE_FAMILY_COMPARISON = {
    1: dict(rd_delta_c=0.136, rd_fem=3.74e-6, rd_wna=3.46e-6, rd_A_inf=2.90e-3),
    2: dict(rd_delta_c=0.117, rd_fem=8.68e-7, rd_wna=2.13e-7, rd_A_inf=6.82e-4),
    3: dict(rd_delta_c=0.113, rd_fem=5.41e-7, rd_wna=4.19e-8, rd_A_inf=2.99e-4),
}

JOBS_ENV = "CROSSDIFF_JOBS"


class ZeroNormError(ZeroDivisionError):
    """Reference field of a relative difference has zero norm."""


def relative_difference(phi1, phi2, p: str | int = 2, *, weights=None) -> float:
    """``||phi1 - phi2||_p / ||phi1||_p`` for scalars or nodal fields.

    Fields have the node index last; any leading axes (components) are
    summed over. ``p = 2`` uses the lumped L2 norm (trapezoidal weights on
    ``[0, pi]`` unless ``weights`` is given); ``p = "inf"`` the max norm.
    """
    a = np.asarray(phi1, dtype=float)
    b = np.asarray(phi2, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    p = str(p)
    if p == "inf":
        den = np.max(np.abs(a))
        num = np.max(np.abs(a - b))
    elif p == "2":
        if a.ndim == 0:
            w = 1.0
        else:
            w = fem.Mesh(a.shape[-1]).weights if weights is None else np.asarray(weights)
        den = math.sqrt(float(np.sum(w * a * a)))
        num = math.sqrt(float(np.sum(w * (a - b) ** 2)))
    else:
        raise ValueError("p must be 2 or 'inf'")
    if den == 0:
        raise ZeroNormError("reference has zero norm")
    return float(num / den)


@dataclass(frozen=True)
class HarnessConfig:
    """Shared settings; the FEM mesh size comes from each row."""

    tau: float = 0.01
    tol_fp: float = 1e-7
    tol_s: float = 1e-12
    max_fp_iters: int = 50
    max_steps: int = 5_000_000
    snapshot_every: int = 1000
    norm: str = "l2"
    convention: str = "marginal-nearest-integer"
    delta_factor: float = 0.95
    # initial data: u* + ic_fraction * eps * A_inf * rho cos(k_c x)
    ic_kind: str = "cosine"
    ic_fraction: float = 0.5
    ic_amp: float = 1e-3
    seed: int = 12345
    run_fem: bool = True

    def solver(self, n_nodes: int) -> fem.SolverConfig:
        return fem.SolverConfig(n_nodes=n_nodes, tau=self.tau, tol_fp=self.tol_fp, tol_s=self.tol_s,
                                max_fp_iters=self.max_fp_iters, max_steps=self.max_steps,
                                snapshot_every=self.snapshot_every, norm=self.norm)


@dataclass(frozen=True)
class RowSpec:
    sim: str
    family: str
    b: float
    n_nodes: int
    delta: float | None = None  # absolute; default delta_factor * delta_c

    @classmethod
    def from_dict(cls, d: dict) -> "RowSpec":
        delta = d.get("delta")
        return cls(sim=str(d["sim"]), family=str(d.get("family", "E1")), b=float(d["b"]),
                   n_nodes=int(d.get("n_nodes", 128)), delta=None if delta in (None, "") else float(delta))


@dataclass
class RowResult:
    sim: str
    family: str
    b: float
    n_nodes: int
    config_hash: str
    convention: str = ""
    delta_bar_c: float = math.nan
    delta_c: float = math.nan
    delta: float = math.nan
    k_c: int = 0
    stable: bool = False
    eps: float = math.nan
    sigma: float = math.nan
    ell: float = math.nan
    A_inf: float = math.nan
    growth_kc: float = math.nan
    steps: int = 0
    stationary: bool = False
    last_update: float = math.nan
    fp_mean: float = math.nan
    fp_max: int = 0
    wall_seconds: float = math.nan
    dominant_k: int = 0
    amp_projection: float = math.nan
    amp_half_range: float = math.nan
    amp_wna: float = math.nan
    rd2_fem_wna: float = math.nan
    tv: float = math.nan
    min_density: float = math.nan
    error: str = ""
    # nodal data (not part of the CSV summary)
    x: np.ndarray | None = field(default=None, repr=False)
    fem_state: np.ndarray | None = field(default=None, repr=False)
    wna_profile: np.ndarray | None = field(default=None, repr=False)
    series: np.ndarray | None = field(default=None, repr=False)

    def summary(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if k in ("x", "fem_state", "wna_profile", "series"):
                continue
            out[k] = v.item() if isinstance(v, np.generic) else v
        return out


def _config_hash(spec: RowSpec, cfg: HarnessConfig) -> str:
    blob = json.dumps({"row": asdict(spec), "cfg": asdict(cfg)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def run_row(spec: RowSpec, cfg: HarnessConfig) -> RowResult:
    """Threshold, WNA and (optionally) FEM for one row; errors are captured in ``error``."""
    res = RowResult(sim=spec.sim, family=spec.family, b=spec.b, n_nodes=spec.n_nodes,
                    config_hash=_config_hash(spec, cfg), convention=cfg.convention)
    try:
        base = builtin_example(spec.family, spec.b)
        rep = critical_pair(base, cfg.convention)
        res.delta_bar_c, res.delta_c, res.k_c = rep.delta_bar_c, rep.delta_c, rep.k_c
        delta = cfg.delta_factor * rep.delta_c if spec.delta is None else spec.delta
        res.delta = delta
        params = base.with_delta(delta)
        res.growth_kc = growth_rate(params, delta, rep.k_c)
        res.stable = delta > rep.delta_bar_c
        if res.stable:
            return res
        exp = wna.expand(params, report=rep)
        res.eps, res.sigma, res.ell, res.A_inf = exp.eps, exp.sigma, exp.ell, exp.A_inf
        res.amp_wna = exp.eps * exp.A_inf * exp.rho[0]
        mesh = fem.Mesh(spec.n_nodes)
        V = wna.stationary_profile(exp, mesh.x)
        res.x, res.wna_profile = mesh.x, V
        if not cfg.run_fem:
            return res
        solver = cfg.solver(spec.n_nodes)
        if cfg.ic_kind == "cosine":
            ic = fem.InitialCondition("cosine", amp=cfg.ic_fraction * exp.eps * exp.A_inf,
                                      k=rep.k_c, direction=tuple(float(v) for v in exp.rho))
        else:
            ic = fem.InitialCondition(cfg.ic_kind, amp=cfg.ic_amp, k=rep.k_c, seed=cfg.seed)
        traj = fem.run_to_stationary(ic, params, solver, k_track=rep.k_c)
        st = traj.final
        U = np.vstack([st.u1, st.u2])
        res.steps, res.stationary, res.last_update = traj.steps, traj.stationary, traj.last_update
        res.fp_mean, res.fp_max, res.wall_seconds = traj.fp_mean, traj.fp_max, traj.wall_seconds
        res.dominant_k = fem.dominant_mode(st)
        res.amp_projection, res.amp_half_range = fem.measure_amplitude(st, coexistence_equilibrium(params), rep.k_c)
        res.rd2_fem_wna = relative_difference(U, V, 2)
        res.tv = fem.total_variation(st)
        res.min_density = float(traj.min_density.min())
        res.fem_state, res.series = U, traj.series_table()
        if not traj.stationary:
            res.error = traj.message
    except Exception as exc:  # row isolation
        log.exception("row %s failed", spec.sim)
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_row(out: Path, res: RowResult) -> Path:
    d = Path(out) / f"sim{res.sim}_{res.family.lower()}"
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "summary.json", "w") as fh:
        json.dump(res.summary(), fh, indent=2, sort_keys=True)
    if res.wna_profile is not None:
        fs = res.fem_state if res.fem_state is not None else np.full_like(res.wna_profile, math.nan)
        rows = zip(res.x, fs[0], fs[1], res.wna_profile[0], res.wna_profile[1])
        _write_csv(d / "profile.csv", ["x", "u1", "u2", "wna_u1", "wna_u2"], rows)
    if res.series is not None:
        t = res.series[:, 0]
        # Stuart-Landau prediction for eps * A(t) from the same initial amplitude
        a0 = res.series[0, 1] / res.eps if res.eps > 0 else math.nan
        sl = (res.eps * wna.amplitude_at(res.sigma * res.eps ** 2, res.ell * res.eps ** 2, a0, t)
              if a0 > 0 and res.ell > 0 else np.full_like(t, math.nan))
        table = np.column_stack([res.series, sl])
        _write_csv(d / "series.csv", ["t", "amp_projection", "amp_half_range", "tv", "min_density",
                                      "update_norm", "amp_stuart_landau"], table)
    return d


@dataclass
class ExperimentReport:
    name: str
    rows: list[RowResult]
    comparisons: list[dict] = field(default_factory=list)

    def table(self) -> list[dict]:
        return [r.summary() for r in self.rows]


def write_report(report: ExperimentReport, out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for r in report.rows:
        write_row(out, r)
    table = report.table()
    if table:
        # wall-clock time goes to its own file so report.csv is reproducible bitwise
        keys = [k for k in table[0] if k != "wall_seconds"]
        _write_csv(out / "report.csv", keys, ([row[k] for k in keys] for row in table))
        _write_csv(out / "timings.csv", ["sim", "family", "wall_seconds"],
                   ([row["sim"], row["family"], row["wall_seconds"]] for row in table))
    if report.comparisons:
        keys = list(report.comparisons[0])
        _write_csv(out / "comparison.csv", keys, ([row[k] for k in keys] for row in report.comparisons))
    return out / "report.csv"


def _jobs(jobs: int | None) -> int:
    if jobs is None:
        jobs = int(os.environ.get(JOBS_ENV, "1"))
    return max(1, jobs)


def _run_all(specs: Sequence[RowSpec], cfg: HarnessConfig, jobs: int | None) -> list[RowResult]:
    n = _jobs(jobs)
    if n == 1 or len(specs) == 1:
        return [run_row(s, cfg) for s in specs]
    with ProcessPoolExecutor(max_workers=min(n, len(specs))) as pool:
        return list(pool.map(run_row, specs, [cfg] * len(specs)))


def _reference_specs(rows: Sequence[int], family: str) -> list[RowSpec]:
    bad = [r for r in rows if r not in REFERENCE_ROWS]
    if bad:
        raise ValueError(f"unknown rows {bad}; choose from {sorted(REFERENCE_ROWS)}")
    return [RowSpec(sim=str(r), family=family, b=REFERENCE_ROWS[r]["b"], n_nodes=REFERENCE_ROWS[r]["n_nodes"])
            for r in rows]


def experiment1(cfg: HarnessConfig = HarnessConfig(), rows: Sequence[int] = (1,), *, jobs: int | None = None) -> ExperimentReport:
    """E1 family at ``delta = delta_factor * delta_c`` for the reference ``b`` values."""
    return ExperimentReport("experiment1", _run_all(_reference_specs(rows, "E1"), cfg, jobs))


def experiment2(cfg: HarnessConfig = HarnessConfig(), rows: Sequence[int] = (1,), *, jobs: int | None = None) -> ExperimentReport:
    """E1 and E2 on the same rows, with relative differences between the two."""
    specs = _reference_specs(rows, "E1") + _reference_specs(rows, "E2")
    results = _run_all(specs, cfg, jobs)
    n = len(rows)
    comps = []
    for r1, r2 in zip(results[:n], results[n:]):
        comp = {"sim": r1.sim, "rd_delta_c": math.nan, "rd_fem": math.nan, "rd_wna": math.nan, "rd_A_inf": math.nan}
        if not (r1.error or r2.error):
            comp["rd_delta_c"] = relative_difference(r1.delta_c, r2.delta_c, "inf")
            comp["rd_A_inf"] = relative_difference(r1.A_inf, r2.A_inf, "inf")
            if r1.wna_profile is not None and r2.wna_profile is not None:
                comp["rd_wna"] = relative_difference(r1.wna_profile, r2.wna_profile, 2)
            if r1.fem_state is not None and r2.fem_state is not None:
                comp["rd_fem"] = relative_difference(r1.fem_state, r2.fem_state, 2)
        comps.append(comp)
    return ExperimentReport("experiment2", results, comps)


def sweep(grid: Sequence[RowSpec | dict], cfg: HarnessConfig = HarnessConfig(), *, jobs: int | None = None) -> ExperimentReport:
    """Independent rows on a worker pool; results keep the grid order."""
    specs = [g if isinstance(g, RowSpec) else RowSpec.from_dict(g) for g in grid]
    if not specs:
        raise ValueError("empty grid")
    return ExperimentReport("sweep", _run_all(specs, cfg, jobs))


def load_grid(path: str | Path) -> list[RowSpec]:
    """CSV with columns ``sim, family, b, n_nodes[, delta]``."""
    with open(path, newline="") as fh:
        return [RowSpec.from_dict(r) for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# acceptance checks against the reference rows

@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str


def _rel(a, b):
    return abs(a - b) / abs(b)


def check_experiment1(report: ExperimentReport, *, rd_tol: float = 1e-4) -> list[Check]:
    out = []
    for r in report.rows:
        ref = REFERENCE_ROWS.get(int(r.sim)) if r.sim.isdigit() else None
        if ref is None:
            continue
        tag = f"sim{r.sim}"
        if r.error and not r.stationary:
            out.append(Check(f"{tag}:run", False, r.error))
        out.append(Check(f"{tag}:delta", _rel(r.delta, ref["delta"]) <= 0.02,
                         f"{r.delta:.4e} vs {ref['delta']:.3g}"))
        out.append(Check(f"{tag}:k_c", r.k_c == ref["k_c"], f"{r.k_c} vs {ref['k_c']}"))
        out.append(Check(f"{tag}:A_inf", _rel(r.A_inf, ref["A_inf"]) <= 0.05,
                         f"{r.A_inf:.4e} vs {ref['A_inf']:.3g}"))
        if r.fem_state is not None:
            out.append(Check(f"{tag}:stationary", r.stationary, f"{r.steps} steps, last update {r.last_update:.3g}"))
            out.append(Check(f"{tag}:dominant_mode", r.dominant_k == r.k_c, f"{r.dominant_k} vs {r.k_c}"))
            out.append(Check(f"{tag}:rd2_fem_wna", r.rd2_fem_wna <= rd_tol, f"{r.rd2_fem_wna:.3e} <= {rd_tol:g}"))
    return out


def check_experiment2(report: ExperimentReport, *, with_fem: bool = True) -> list[Check]:
    out = []
    keys = ("rd_fem", "rd_wna", "rd_A_inf") if with_fem else ("rd_wna", "rd_A_inf")
    for c in report.comparisons:
        ref = REFERENCE_FAMILY_COMPARISON[int(c["sim"])]
        tag = f"sim{c['sim']}"
        out.append(Check(f"{tag}:rd_delta_c", _rel(c["rd_delta_c"], ref["rd_delta_c"]) <= 0.05,
                         f"{c['rd_delta_c']:.4f} vs {ref['rd_delta_c']}"))
        for key in keys:
            v = c[key]
            ok = v > 0 and abs(math.log10(v / ref[key])) <= 1.0
            out.append(Check(f"{tag}:{key}", ok, f"{v:.3e} vs {ref[key]:.3g} (within one decade)"))
    return out

"""Command-line entry point: ``crossdiff <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fem, harness, wna
from .model import builtin_example, coexistence_equilibrium, load_config
from .stability import CONVENTIONS, critical_pair, dispersion


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def _dump(obj, fh=None):
    json.dump(obj, fh or sys.stdout, indent=2, default=_json_default)
    (fh or sys.stdout).write("\n")


def _write_rows(path, header, rows):
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _params(args):
    p = load_config(args.config)
    if getattr(args, "delta", None) is not None:
        p = p.with_delta(args.delta)
    return p


def cmd_stability(args) -> int:
    p = _params(args)
    rep = critical_pair(p, args.convention)
    _dump(rep.as_dict())
    if args.csv:
        kmax = args.k_max or 3 * rep.k_c
        ks = np.arange(0, kmax + 1, dtype=float)
        h = dispersion(p, p.delta, ks * ks)
        _write_rows(args.csv, ["k2", "h"], zip((ks * ks).tolist(), np.atleast_1d(h).tolist()))
    return 0


def cmd_wna(args) -> int:
    p = _params(args)
    rep = critical_pair(p, args.convention)
    exp = wna.expand(p, report=rep, kc_mode=args.kc_mode)
    _dump(exp.as_dict())
    if args.csv:
        mesh = fem.Mesh(args.n_nodes)
        v = wna.stationary_profile(exp, mesh.x)
        _write_rows(args.csv, ["x", "u1", "u2"], zip(mesh.x.tolist(), v[0].tolist(), v[1].tolist()))
    return 0


def cmd_wna_limits(args) -> int:
    rows = wna.limit_diagnostics(args.b_list, lambda b: builtin_example(args.family, b))
    keys = list(rows[0].as_dict())
    _write_rows(args.csv, keys, ([r.as_dict()[k] for k in keys] for r in rows))
    return 1 if any(r.error for r in rows) else 0


def parse_ic(spec: str, params, n_nodes: int) -> tuple[fem.InitialCondition | fem.FemState, int]:
    """``kind[:key=value,...]``; returns the initial data and the mode to track.

    kinds: ``wna`` (cosine along the critical mode with ``frac`` times the
    predicted first-order amplitude), ``cosine``, ``noise``, ``bump``,
    ``constant`` (``c1``, ``c2``) and ``file`` (``path`` of a CSV with
    columns x, u1, u2).
    """
    kind, _, rest = spec.partition(":")
    opts = dict(kv.split("=", 1) for kv in rest.split(",") if kv)
    rep = critical_pair(params)
    k = int(opts.get("k", rep.k_c))
    if kind == "wna":
        exp = wna.expand(params, report=rep)
        frac = float(opts.get("frac", 0.5))
        return fem.InitialCondition("cosine", amp=frac * exp.eps * exp.A_inf, k=rep.k_c,
                                    direction=tuple(float(v) for v in exp.rho)), rep.k_c
    if kind == "file":
        data = np.loadtxt(opts["path"], delimiter=",", skiprows=1)
        if data.shape[0] != n_nodes:
            raise fem.MeshMismatchError(f"{opts['path']} has {data.shape[0]} nodes, expected {n_nodes}")
        return fem.FemState(fem.Mesh(n_nodes), data[:, 1].copy(), data[:, 2].copy()), k
    if kind == "constant":
        vals = (float(opts["c1"]), float(opts["c2"]))
        return fem.InitialCondition("constant", values=vals), k
    amp = float(opts.get("amp", 1e-3))
    kw = dict(amp=amp, k=k)
    if "seed" in opts:
        kw["seed"] = int(opts["seed"])
    if "width" in opts:
        kw["width"] = float(opts["width"])
    return fem.InitialCondition(kind, **kw), k


def cmd_simulate(args) -> int:
    p = _params(args)
    cfg = fem.SolverConfig(n_nodes=args.n_nodes, tau=args.tau, tol_fp=args.tol_fp, tol_s=args.tol_s,
                           max_steps=args.max_steps, snapshot_every=args.snapshot_every, norm=args.norm)
    ic, k = parse_ic(args.ic, p, args.n_nodes)
    traj = fem.run_to_stationary(ic, p, cfg, k_track=k, profile_every=args.profile_every)
    out = Path(args.out)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    x = traj.final.mesh.x
    for i, (t, u1, u2) in enumerate(traj.profiles):
        _write_rows(out / "snapshots" / f"snap_{i:05d}.csv", ["x", "u1", "u2"],
                    zip(x.tolist(), u1.tolist(), u2.tolist()))
    _write_rows(out / "final.csv", ["x", "u1", "u2"],
                zip(x.tolist(), traj.final.u1.tolist(), traj.final.u2.tolist()))
    _write_rows(out / "series.csv", ["t", "amp_projection", "amp_half_range", "tv", "min_density", "update_norm"],
                traj.series_table().tolist())
    summary = traj.as_dict()
    summary["dominant_mode"] = fem.dominant_mode(traj.final)
    summary["u_star"] = coexistence_equilibrium(p)
    with open(out / "summary.json", "w") as fh:
        _dump(summary, fh)
    _dump(summary)
    return 0 if traj.stationary else 2


def _harness_cfg(args) -> harness.HarnessConfig:
    cfg = harness.HarnessConfig()
    if args.max_steps is not None:
        cfg = replace(cfg, max_steps=args.max_steps)
    if args.no_fem:
        cfg = replace(cfg, run_fem=False)
    return cfg


def _finish(report, args, checks) -> int:
    harness.write_report(report, args.out)
    for row in report.rows:
        if row.error:
            print(f"row {row.sim} ({row.family}): {row.error}", file=sys.stderr)
    if checks is None:
        return 1 if any(r.error for r in report.rows) else 0
    for c in checks:
        print(f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.detail}")
    return 0 if all(c.ok for c in checks) else 1


def cmd_experiment1(args) -> int:
    rep = harness.experiment1(_harness_cfg(args), rows=args.rows, jobs=args.jobs)
    return _finish(rep, args, harness.check_experiment1(rep) if args.check else None)


def cmd_experiment2(args) -> int:
    rep = harness.experiment2(_harness_cfg(args), rows=args.rows, jobs=args.jobs)
    return _finish(rep, args, harness.check_experiment2(rep, with_fem=not args.no_fem) if args.check else None)


def cmd_sweep(args) -> int:
    rep = harness.sweep(harness.load_grid(args.grid), _harness_cfg(args), jobs=args.jobs)
    return _finish(rep, args, None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crossdiff", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("stability", help="critical delta and wave number")
    s.add_argument("--config", required=True)
    s.add_argument("--convention", choices=CONVENTIONS, default=CONVENTIONS[0])
    s.add_argument("--csv", help="write (k^2, h(k^2)) samples here ('-' for stdout)")
    s.add_argument("--k-max", type=int)
    s.set_defaults(func=cmd_stability)

    s = sub.add_parser("wna", help="weakly nonlinear expansion and stationary profile")
    s.add_argument("--config", required=True)
    s.add_argument("--delta", type=float, help="override delta from the config")
    s.add_argument("--convention", choices=CONVENTIONS, default=CONVENTIONS[0])
    s.add_argument("--kc-mode", choices=("integer", "exact"), default="integer")
    s.add_argument("--n-nodes", type=int, default=128)
    s.add_argument("--csv", help="profile sampled on the mesh nodes")
    s.set_defaults(func=cmd_wna)

    s = sub.add_parser("wna-limits", help="small-b diagnostics table")
    s.add_argument("--b-list", type=float, nargs="+", required=True)
    s.add_argument("--family", default="E1", choices=("E1", "E2"))
    s.add_argument("--csv", default="-")
    s.set_defaults(func=cmd_wna_limits)

    s = sub.add_parser("simulate", help="FEM run to stationarity")
    s.add_argument("--config", required=True)
    s.add_argument("--delta", type=float)
    s.add_argument("--ic", default="wna", help="kind[:key=value,...], e.g. noise:amp=1e-3,seed=7")
    s.add_argument("--out", required=True)
    s.add_argument("--n-nodes", type=int, default=128)
    s.add_argument("--tau", type=float, default=0.01)
    s.add_argument("--tol-fp", type=float, default=1e-7)
    s.add_argument("--tol-s", type=float, default=1e-12)
    s.add_argument("--max-steps", type=int, default=5_000_000)
    s.add_argument("--snapshot-every", type=int, default=1000)
    s.add_argument("--profile-every", type=int, default=100, help="keep every m-th snapshot profile (0: none)")
    s.add_argument("--norm", choices=("l2", "euclid"), default="l2")
    s.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("experiment1", cmd_experiment1, "E1 reference rows"),
                                 ("experiment2", cmd_experiment2, "E1 vs E2 on the reference rows")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--rows", type=int, nargs="+", default=[1])
        s.add_argument("--out", required=True)
        s.add_argument("--check", action="store_true", help="compare with reference values; nonzero exit on failure")
        s.add_argument("--jobs", type=int)
        s.add_argument("--max-steps", type=int)
        s.add_argument("--no-fem", action="store_true")
        s.set_defaults(func=func)

    s = sub.add_parser("sweep", help="rows from a CSV grid (sim, family, b, n_nodes[, delta])")
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--no-fem", action="store_true")
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command line: ``chemolab simulate | sweep | verify``.

Exit codes: 0 completed or bounded, 2 blow-up suspected, 3 inconclusive,
1 on any error. Set ``CHEMOLAB_LOG`` (e.g. ``INFO``, ``DEBUG``) for logging.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import BOUNDED, SUSPECTED
from .config import Axis, ConfigError, RunConfig, SweepSpec
from .estimator import ChemotaxisSimulator, sweep
from .grid import integral, write_field_csv
from .verify import SUITES, run_suite

SCHEMA_VERSION = "1.0"

EXIT_OK, EXIT_ERROR, EXIT_BLOWUP, EXIT_INCONCLUSIVE = 0, 1, 2, 3

PHASE_COLUMNS = (
    "regime", "verdict", "status", "t_final", "t_detect", "t_estimate",
    "sup_u_inf", "growth", "steps", "error",
)

log = logging.getLogger("chemolab")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def exit_code(verdict: str) -> int:
    if verdict == SUSPECTED:
        return EXIT_BLOWUP
    if verdict == BOUNDED:
        return EXIT_OK
    return EXIT_INCONCLUSIVE


def summary(est: ChemotaxisSimulator) -> dict:
    rep, cl, g = est.report_, est.classification_, est.grid_
    fin = rep.final
    return _clean({
        "schema_version": SCHEMA_VERSION,
        "status": rep.status,
        "reason": rep.reason,
        "classification": cl.as_dict(),
        "final": {
            "t": fin.t,
            "u_l1": integral(g, fin.u),
            "u_inf": float(np.max(fin.u)),
            "v_inf": float(np.max(fin.v)),
            "w_inf": float(np.max(fin.w)),
            "v_int": integral(g, fin.v),
        },
        "steps": {"accepted": rep.n_steps, "rejected": rep.n_rejected, "clipped": rep.n_clipped, "last_dt": rep.last_dt},
        "grid": {"cells": g.cells, "kind": est.grid, "h0": float(g.faces[1])},
        "r_star": est.r_star_,
        "phi_star": est.source_.sup,
        "u_cap": rep.u_cap,
        "wall_time": rep.wall_time,
        "analysis": est.analysis_,
    })


def write_run(est: ChemotaxisSimulator, out: Path) -> None:
    rep, g = est.report_, est.grid_
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "timeseries.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=rep.columns)
        writer.writeheader()
        for row in rep.samples:
            writer.writerow({k: repr(float(v)) for k, v in row.items()})
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    snaps = {}
    for t, s in sorted(rep.snapshots.items()):
        write_field_csv(snap_dir / f"t_{t:.6g}.csv", g, {"u": s.u, "v": s.v, "w": s.w})
        snaps[repr(t)] = {"u": s.u.tolist(), "v": s.v.tolist(), "w": s.w.tolist()}
    fin = rep.final
    write_field_csv(snap_dir / "final.csv", g, {"u": fin.u, "v": fin.v, "w": fin.w})
    snaps["final"] = {"t": fin.t, "u": fin.u.tolist(), "v": fin.v.tolist(), "w": fin.w.tolist()}
    doc = {"schema_version": SCHEMA_VERSION, "r_center": g.centers.tolist(), "snapshots": snaps}
    (out / "snapshots.json").write_text(json.dumps(_clean(doc)))
    (out / "summary.json").write_text(json.dumps(summary(est), indent=2) + "\n")
    est.to_config().dump(out / "config.toml")


def cmd_simulate(args) -> int:
    cfg = RunConfig.load(args.config)
    est = ChemotaxisSimulator.from_config(cfg).fit()
    out = Path(args.out)
    write_run(est, out)
    cl = est.classification_
    print(f"{est.report_.status}: {cl.verdict} ({cl.regime}) t={cl.t_final:.6g} sup|u|={cl.sup_u_inf:.6g}")
    for line in cl.evidence:
        print(f"  {line}")
    if cl.reason:
        print(f"  {cl.reason}")
    return exit_code(cl.verdict)


def _cell_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_phase(rows: list, axes: list, path: Path) -> None:
    fields = ["cell", "replicate", *axes, *PHASE_COLUMNS]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_cell_text(row.get(f)) for f in fields])


def cmd_sweep(args) -> int:
    cfg = RunConfig.load(args.config)
    spec = SweepSpec(tuple(Axis.parse(a) for a in args.axis), args.replicates, args.jobs)
    base = ChemotaxisSimulator.from_config(cfg)
    cells = spec.cells
    log.info("sweeping %d cells x %d replicates", len(cells), spec.replicates)
    rows = sweep(base, cells, spec.replicates, n_jobs=spec.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_phase(rows, [a.key for a in spec.axes], out / "phase.csv")
    cfg.dump(out / "config.toml")
    failed = sum(1 for r in rows if r["error"])
    counts = {}
    for r in rows:
        counts[r["verdict"]] = counts.get(r["verdict"], 0) + 1
    print(", ".join(f"{k}: {v}" for k, v in sorted(counts.items())))
    if failed:
        print(f"{failed} cell(s) failed; see the error column of phase.csv", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        print(f"error: unknown suite {args.suite!r}; choose from {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_ERROR
    checks = run_suite(args.suite)
    for c in checks:
        print(c.line())
    passed = sum(c.passed for c in checks)
    print(f"{args.suite}: {passed}/{len(checks)} checks passed")
    return EXIT_OK if passed == len(checks) else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemolab", description="Radial chemotaxis-virus simulations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a parameter grid and write phase.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", action="append", required=True, help="name=start:stop:step (stop inclusive)")
    p.add_argument("--out", required=True)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--jobs", type=int, default=-1, help="parallel workers (-1: all cores)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run a self-check suite")
    p.add_argument("suite")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("CHEMOLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

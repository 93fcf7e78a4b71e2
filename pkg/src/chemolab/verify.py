"""Self-checks run by ``chemolab verify <suite>`` and by the acceptance tests.

Each suite returns a list of :class:`Check` records carrying the measured
value, its limit and a pass flag.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from importlib import resources
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp, trapezoid

from .analysis import (
    MomentConfig,
    check_blowup_hypotheses,
    cumulative_mass_z,
    estimate_blowup_time,
    extrapolate_supnorm,
    gamma_constants,
    largest_passing_r_star,
    moment_y,
)
from .estimator import ChemotaxisSimulator
from .grid import RadialGrid, integral
from .model import ModelParams, Prototype, Source
from .solver import Scheme, State, StepControl, run, solve_elliptic_v, solve_helmholtz


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    limit: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{flag}  {self.name}: {self.value:.10g} vs limit {self.limit:.10g}{extra}"


def _at_most(name, value, limit, detail=""):
    return Check(name, float(value), float(limit), bool(value <= limit), detail)


def _at_least(name, value, limit, detail=""):
    return Check(name, float(value), float(limit), bool(value >= limit), detail)


def _within(name, value, lo, hi, detail=""):
    return Check(name, float(value), float(hi), bool(lo <= value <= hi), f"range [{lo:g}, {hi:g}]" + (f"; {detail}" if detail else ""))


# ---------------------------------------------------------------- mass


def mass_monitor_runs(runs: int = 5, cells: int = 256, t_end: float = 20.0, seed: int = 2024, kappa: int = 0) -> list:
    """Randomised runs recording the L1 bound ratio and the elliptic identity error.

    Returns one dict per run with the worst ratio of the monitored mass to
    its bound over all samples, and (kappa = 0) the worst relative gap between
    the integrals of v and u w.
    """
    rng = np.random.default_rng(seed)
    ms = (0.8, 1.5, 2.5)
    out = []
    for k in range(runs):
        m = ms[k % len(ms)]
        amp = 0.0 if k % 2 == 0 else float(rng.uniform(0.2, 1.0))
        est = ChemotaxisSimulator(
            n=2, kappa=kappa, m=m, chi=float(rng.uniform(0.5, 2.0)),
            mu=float(rng.uniform(0.5, 2.0)), alpha=float(rng.uniform(0.5, 1.0)),
            beta=float(rng.uniform(1.0, 2.0)), profile="bump", r_star=float(rng.uniform(0.5, 0.9)),
            w_profile="cosine", noise=0.2, seed=int(rng.integers(1 << 30)), v0=0.5,
            source="constant" if amp else "zero", source_amplitude=amp,
            cells=cells, t_end=t_end, cadence=0.5, dt_max=2e-2,
        )
        start = time.perf_counter()
        est.fit()
        rep, g = est.report_, est.grid_
        phi_vol = est.source_.sup * g.volume
        u_l1 = rep.series("u_l1")
        if kappa == 0:
            bound = max(u_l1[0], phi_vol)
            ratio = float(np.max(u_l1 / bound))
            v_int, uw_int = rep.series("v_int"), rep.series("uw_int")
            ell = float(np.max(np.abs(v_int - uw_int) / np.maximum(np.abs(uw_int), 1e-300)))
        else:
            total = u_l1 + rep.series("v_int")
            bound = max(total[0], phi_vol)
            ratio = float(np.max(total / bound))
            ell = math.nan
        out.append({
            "m": m, "source": amp, "status": rep.status, "samples": len(rep.samples),
            "ratio": ratio, "elliptic": ell, "seconds": time.perf_counter() - start,
        })
    return out


def suite_mass(runs: int = 3, cells: int = 128, t_end: float = 5.0) -> list:
    checks = []
    for kappa in (0, 1):
        for i, r in enumerate(mass_monitor_runs(runs, cells, t_end, kappa=kappa)):
            label = f"kappa={kappa} run {i} (m={r['m']}, phi={r['source']:.3g})"
            checks.append(_at_most(f"L1 bound ratio, {label}", r["ratio"], 1 + 1e-6))
            if kappa == 0:
                checks.append(_at_most(f"int v = int uw, {label}", r["elliptic"], 1e-9))
    return checks


# ---------------------------------------------------------------- elliptic


def helmholtz_mms_errors(n: int = 2, sizes=(128, 256, 512)) -> list:
    """Max-norm errors of -Lap v + v = f against v = cos(pi r), which has zero end slopes."""
    errors = []
    for M in sizes:
        g = RadialGrid.uniform(n, 1.0, M)
        r = g.centers
        f = (np.pi**2 + 1) * np.cos(np.pi * r) + (n - 1) * np.pi * np.sin(np.pi * r) / r
        v = solve_helmholtz(g, f)
        errors.append(float(np.max(np.abs(v - np.cos(np.pi * r)))))
    return errors


def observed_orders(errors) -> list:
    return [math.log2(a / b) for a, b in zip(errors[:-1], errors[1:])]


def suite_elliptic() -> list:
    checks = []
    for n in (2, 3):
        errs = helmholtz_mms_errors(n)
        for (lo, hi), order in zip(((128, 256), (256, 512)), observed_orders(errs)):
            checks.append(_within(f"Helmholtz order n={n}, M={lo}->{hi}", order, 1.7, 2.3))
    return checks


# ---------------------------------------------------------------- ODE oracle


def ode_oracle_error(u0=1.0, v0=0.5, w0=2.0, phi=1.5, t_end=1.0, dt=1e-3, cells=64) -> float:
    """Relative error of a spatially constant kappa = 1 run against the kinetics ODE."""
    g = RadialGrid.uniform(2, 1.0, cells)
    params = ModelParams(2, 1, 1.0, Prototype(0.5), phi_star=phi)
    src = Source("constant", phi)
    ones = np.ones(cells)
    state = State(0.0, u0 * ones, v0 * ones, w0 * ones)
    control = StepControl(dt_init=dt, dt_max=dt, dt_min=dt * 1e-3, growth=1.0)
    rep = run(g, state, params, src, control, t_end)

    def rhs(t, y):
        u, v, w = y
        return [phi - u - u * w, u * w - v, v - w]

    ref = solve_ivp(rhs, (0.0, t_end), [u0, v0, w0], method="DOP853", rtol=1e-13, atol=1e-14).y[:, -1]
    fin = rep.final
    got = np.array([fin.u.mean(), fin.v.mean(), fin.w.mean()])
    spread = max(np.ptp(fin.u), np.ptp(fin.v), np.ptp(fin.w))
    return float(max(np.max(np.abs(got - ref) / np.abs(ref)), spread))


def suite_ode_oracle() -> list:
    return [_at_most("kappa=1 constant run vs ODE at t=1 (relative)", ode_oracle_error(), 1e-4)]


# ---------------------------------------------------------------- coupled convergence


def coupled_solution(cells: int, t_end: float = 0.2, dt: float = 2.5e-4, flux: str = "vanleer", n: int = 2) -> tuple:
    """Smooth bounded-regime kappa = 0 run with a fixed time step."""
    g = RadialGrid.uniform(n, 1.0, cells)
    r = g.centers
    params = ModelParams(n, 0, 1.0, Prototype(2.0))
    u0 = 1.0 + 0.5 * np.cos(np.pi * r)
    w0 = 1.0 + 0.25 * np.cos(np.pi * r)
    state = State(0.0, u0, solve_elliptic_v(g, u0, w0), w0)
    control = StepControl(dt_init=dt, dt_max=dt, dt_min=dt * 1e-3, growth=1.0)
    rep = run(g, state, params, Source(), control, t_end, scheme=Scheme(chemotaxis_flux=flux))
    return g, rep.final


def coupled_spatial_orders(sizes=(128, 256, 512, 1024), **kw) -> tuple:
    """Self-convergence: differences between successive meshes, restricted to the coarser one.

    Returns (differences, orders) in the measure-weighted L1 norm.
    """
    sols = [coupled_solution(M, **kw) for M in sizes]
    diffs = []
    for (gc, sc), (gf, sf) in zip(sols[:-1], sols[1:]):
        fine = gf.restrict(sf.u, gc)
        diffs.append(integral(gc, np.abs(sc.u - fine)) / gc.volume)
    return diffs, observed_orders(diffs)


def coupled_temporal_order(cells: int = 128, t_end: float = 0.2, dts=(2e-3, 1e-3, 5e-4, 2.5e-4)) -> list:
    sols = [coupled_solution(cells, t_end=t_end, dt=dt)[1].u for dt in dts]
    g = RadialGrid.uniform(2, 1.0, cells)
    diffs = [integral(g, np.abs(a - b)) / g.volume for a, b in zip(sols[:-1], sols[1:])]
    return observed_orders(diffs)


def suite_convergence() -> list:
    checks = []
    _, orders = coupled_spatial_orders()
    for label, order in zip(("128/256/512", "256/512/1024"), orders):
        checks.append(_within(f"coupled stepper spatial order, M={label}", order, 1.7, 2.3))
    t_orders = coupled_temporal_order()
    checks.append(_at_least("coupled stepper temporal order (last pair)", t_orders[-1], 0.8))
    return checks


# ---------------------------------------------------------------- transforms


def suite_transform(seed: int = 7) -> list:
    rng = np.random.default_rng(seed)
    checks = []
    for n in (2, 3):
        g = RadialGrid.uniform(n, 1.0, 200)
        u = rng.uniform(0.0, 3.0, g.cells)
        zt = cumulative_mass_z(g, u)
        total = integral(g, u)
        checks.append(_at_most(f"z(R^n)|B1| = int u, n={n} (relative)", abs(zt.z[-1] * g.ball_volume - total) / total, 1e-10))
        slope = np.diff(zt.z) / np.diff(zt.s)
        checks.append(_at_most(f"dz/ds recovers u, n={n}", np.max(np.abs(slope - u)), 1e-10))
        c, eta = 1.7, 0.2
        for r in (0.1, 0.5, 1.0, 0.3333):
            y = moment_y(g, np.full(g.cells, c), r, eta)
            exact = c * r ** (n * (2 - eta)) / (2 - eta)
            checks.append(_at_most(f"y(r={r}) for constant u, n={n} (relative)", abs(y - exact) / exact, 1e-8))
        # smooth u against a 10^6-point trapezoid, with the first cell (z = u_0 s) integrated analytically
        gs = RadialGrid.uniform(n, 1.0, 400)
        us = 1.0 + np.cos(np.pi * gs.centers)
        zs = cumulative_mass_z(gs, us)
        S, delta = 0.6**n, zs.s[1]
        ss = np.linspace(delta, S, 1_000_001)
        ref = us[0] * delta ** (2 - eta) / (2 - eta) + trapezoid(ss**-eta * zs(ss), ss)
        got = moment_y(gs, us, 0.6, eta)
        checks.append(_at_most(f"y against quadrature, n={n} (relative)", abs(got - ref) / ref, 1e-6))
    checks.append(_at_most("Riccati time for c=2, y0=1", abs(estimate_blowup_time(1.0, 2.0) - 0.5), 0.0))
    c, y0 = 3.7e5, 2.1e-3
    T = estimate_blowup_time(y0, c)
    checks.append(_at_most("Riccati time is 1/(c y0) exactly", abs(T - 1.0 / (c * y0)), 0.0))
    t = np.linspace(0.5, 0.9, 9)
    checks.append(_at_most("sup-norm extrapolation of 1/(1-t)", abs(extrapolate_supnorm(t, 1.0 / (1.0 - t)) - 1.0), 1e-6))
    return checks


# ---------------------------------------------------------------- ODI and hypotheses


def blowup_simulator(**overrides) -> ChemotaxisSimulator:
    """Concentrated-data run in the finite-time blow-up regime with r* from bisection."""
    params = dict(
        n=2, kappa=0, chi=20.0, m=0.5, mu=1.0, alpha=1.0, beta=1.0, profile="bump",
        r_star_auto=True, grid="geometric", cells=512, h0_factor=1e-5,
        time_unit="collapse", dt_init=1e-3, dt_min=1e-12, dt_max=10.0,
        t_end=5.0, every_steps=1, analysis=True,
    )
    params.update(overrides)
    return ChemotaxisSimulator(**params)


def suite_odi() -> list:
    est = blowup_simulator().fit()
    cl, an = est.classification_, est.analysis_
    checks = [
        Check("blow-up verdict", float(cl.verdict == "BlowupSuspected"), 1.0, cl.verdict == "BlowupSuspected", cl.verdict),
        _at_least("sup-norm growth", cl.growth, 1e4),
        _at_most("time step collapse ratio", cl.dt_collapse, 1e-3),
        _at_least("fraction of in-window samples where the ODI holds", an["odi_holding"], 0.95, f"{an['odi_samples']} samples"),
        _at_most("extrapolated T over Riccati bound", cl.t_estimate / an["riccati_bound"], 1.0),
        Check("hypotheses pass at r*", float(an["hypotheses"]["all_pass"]), 1.0, an["hypotheses"]["all_pass"]),
    ]
    return checks


def regression_table() -> dict:
    with resources.files("chemolab").joinpath("data/hypothesis_regression.json").open() as fh:
        return json.load(fh)


def regression_args(inst: dict) -> tuple:
    cfg = MomentConfig(inst["n"], inst["m"], inst["epsilon"], inst["eta"], inst["lam"], inst["p"])
    g = gamma_constants(inst["mu"], inst["alpha"], inst["beta"], cfg, inst["R"], [inst["K"]])
    return (inst["mu"], inst["alpha"], inst["beta"], cfg, g, inst["chi"], inst["K_D"], inst["T_star"])


def ladder_monotone(R: float, args: tuple, points: int = 10, factor: float = 0.1) -> tuple:
    """Check that every LHS/RHS ratio and pass flag improves as r* shrinks.

    Returns (ok, ladder, ratio rows).
    """
    ladder = [R * factor**k for k in range(points)]
    rows = [check_blowup_hypotheses(r, *args) for r in ladder]
    ok = True
    for a, b in zip(rows[:-1], rows[1:]):
        for qa, qb in zip(a.inequalities, b.inequalities):
            if qb.ratio < qa.ratio or (qa.passed and not qb.passed):
                ok = False
    return ok, ladder, rows


def suite_hypotheses() -> list:
    doc = regression_table()
    inst = doc["instance"]
    args = regression_args(inst)
    mismatches = 0
    for row in doc["table"]:
        now = check_blowup_hypotheses(row["r_star"], *args).as_dict()
        mismatches += int(now != row)
    checks = [_at_most("frozen margin table rows differing", mismatches, 0, f"{len(doc['table'])} rows")]
    rs = largest_passing_r_star(inst["R"], *args)
    checks.append(_at_most("bisection r* differs from frozen value", abs(rs - doc["bisection_r_star"]), 0.0))
    ok, ladder, _ = ladder_monotone(inst["R"], args)
    checks.append(Check("margins improve down a 10-point r* ladder", float(ok), 1.0, ok, f"{ladder[0]:g} .. {ladder[-1]:g}"))
    full = check_blowup_hypotheses(inst["R"], *args)
    checks.append(Check("r* = R fails at least one condition", float(not full.passed), 1.0, not full.passed))
    return checks


SUITES: dict = {
    "mass": suite_mass,
    "elliptic": suite_elliptic,
    "ode-oracle": suite_ode_oracle,
    "convergence": suite_convergence,
    "transform": suite_transform,
    "odi": suite_odi,
    "hypotheses": suite_hypotheses,
}


def run_suite(name: str) -> list:
    try:
        fn: Callable = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}") from None
    return fn()

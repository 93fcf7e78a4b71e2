"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a single PASS/FAIL line; the lines are repeated in the
terminal summary under "acceptance criteria".
"""

import csv
import time
from pathlib import Path

import numpy as np
import pytest

from chemolab.analysis import check_blowup_hypotheses, estimate_blowup_time, extrapolate_supnorm
from chemolab.cli import main
from chemolab.estimator import ChemotaxisSimulator
from chemolab.verify import (
    blowup_simulator,
    coupled_spatial_orders,
    helmholtz_mms_errors,
    ladder_monotone,
    mass_monitor_runs,
    observed_orders,
    ode_oracle_error,
    regression_args,
    regression_table,
    suite_transform,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def mass_runs():
    start = time.perf_counter()
    k0 = mass_monitor_runs(runs=5, cells=256, t_end=20.0, kappa=0)
    k1 = mass_monitor_runs(runs=5, cells=256, t_end=20.0, kappa=1, seed=77)
    return k0, k1, time.perf_counter() - start


@pytest.fixture(scope="module")
def blowup_run():
    return blowup_simulator().fit()


def test_criterion_01_mass_monitors(mass_runs, record_criterion):
    k0, k1, seconds = mass_runs
    worst0 = max(r["ratio"] for r in k0)
    worst1 = max(r["ratio"] for r in k1)
    mixed = sorted({r["m"] for r in k0}) == [0.8, 1.5, 2.5] and {bool(r["source"]) for r in k0} == {True, False}
    ok = worst0 <= 1 + 1e-6 and worst1 <= 1 + 1e-6 and seconds <= 120 and mixed
    record_criterion(1, ok, f"max ratio kappa=0 {worst0:.12g}, kappa=1 {worst1:.12g} (limit 1+1e-6); {seconds:.1f}s of 120s")
    assert ok


def test_criterion_02_elliptic_identity(mass_runs, record_criterion):
    k0, _, _ = mass_runs
    worst = max(r["elliptic"] for r in k0)
    samples = sum(r["samples"] for r in k0)
    ok = worst <= 1e-9
    record_criterion(2, ok, f"max |int v - int uw| / int uw = {worst:.3e} over {samples} samples (limit 1e-9)")
    assert ok


def test_criterion_03_manufactured_convergence(record_criterion):
    start = time.perf_counter()
    h_orders = observed_orders(helmholtz_mms_errors(2, sizes=(128, 256, 512)))
    _, c_orders = coupled_spatial_orders(sizes=(128, 256, 512))
    seconds = time.perf_counter() - start
    ok = all(1.7 <= q <= 2.3 for q in h_orders + c_orders) and seconds <= 300
    record_criterion(
        3, ok,
        f"Helmholtz orders {[round(q, 4) for q in h_orders]}, coupled orders {[round(q, 4) for q in c_orders]} "
        f"(range [1.7, 2.3]); {seconds:.1f}s of 300s",
    )
    assert ok


def test_criterion_04_ode_oracle(record_criterion):
    err = ode_oracle_error(t_end=1.0, dt=1e-3, cells=64)
    ok = err <= 1e-4
    record_criterion(4, ok, f"relative error at t=1 = {err:.3e} (limit 1e-4)")
    assert ok


def test_criterion_05_bounded_regime(record_criterion):
    start = time.perf_counter()
    est = ChemotaxisSimulator(
        n=2, kappa=0, m=2.0, chi=5.0, mu=1.0, alpha=1.0, beta=1.0, profile="bump", r_star=0.4,
        cells=512, t_end=50.0, cadence=0.5,
    ).fit()
    seconds = time.perf_counter() - start
    rep = est.report_
    t, ui = rep.series("t"), rep.series("u_inf")
    cut = 0.75 * t[-1]
    late, before = ui[t >= cut].max(), ui[t < cut].max()
    ok = est.classification_.verdict == "Bounded" and late <= 2 * before and t[-1] == 50.0 and seconds <= 180
    record_criterion(
        5, ok,
        f"verdict {est.classification_.verdict}; last-quarter max {late:.6g} vs 2 x earlier max {2 * before:.6g}; {seconds:.1f}s of 180s",
    )
    assert ok


def test_criterion_06_blowup_regime(blowup_run, record_criterion):
    cl = blowup_run.classification_
    ok = (
        cl.verdict == "BlowupSuspected" and cl.t_detect is not None and cl.t_detect < 5
        and cl.dt_collapse < 1e-3 and cl.growth >= 1e4 and bool(cl.evidence)
    )
    record_criterion(
        6, ok,
        f"verdict {cl.verdict}, t_detect {cl.t_detect:.4g}, dt collapse {cl.dt_collapse:.3g}, "
        f"growth {cl.growth:.3g}x (limit 1e4), r* {blowup_run.r_star_:.6g}",
    )
    assert ok


def test_criterion_07_odi_evidence(blowup_run, record_criterion):
    an = blowup_run.analysis_
    frac, count = an["odi_holding"], an["odi_samples"]
    consistent = blowup_run.classification_.t_estimate <= an["riccati_bound"]
    ok = count > 0 and frac >= 0.95 and consistent
    record_criterion(
        7, ok,
        f"ODI holds at {frac:.1%} of {count} in-window samples (limit 95%); "
        f"T_est {blowup_run.classification_.t_estimate:.4g} <= Riccati bound {an['riccati_bound']:.4g}",
    )
    assert ok


def test_criterion_08_phase_transition(tmp_path, record_criterion):
    start = time.perf_counter()
    code = main([
        "sweep", "--config", str(CONFIGS / "sweep_m.toml"), "--axis", "m=0.2:3.0:0.2",
        "--out", str(tmp_path),
    ])
    seconds = time.perf_counter() - start
    with open(tmp_path / "phase.csv") as fh:
        rows = list(csv.DictReader(fh))
    ms = [float(r["m"]) for r in rows]
    high = [r["verdict"] for r in rows if float(r["m"]) >= 1.6 - 1e-9]
    low = [r["verdict"] for r in rows if float(r["m"]) < 1]
    band = [r["regime"] for r in rows if 1 < float(r["m"]) <= 1.5 + 1e-9]
    ok = (
        code == 0 and len(rows) == 15 and ms[0] == 0.2 and ms[-1] == 3.0
        and all(v == "Bounded" for v in high) and "BlowupSuspected" in low
        and band and all(b == "open regime" for b in band) and seconds <= 1800
    )
    record_criterion(
        8, ok,
        f"m>=1.6 Bounded {high.count('Bounded')}/{len(high)}; m<1 BlowupSuspected {low.count('BlowupSuspected')}/{len(low)}; "
        f"open band labels {sorted(set(band))}; {seconds:.1f}s of 1800s",
    )
    assert ok


def test_criterion_09_hypothesis_regression(record_criterion):
    doc = regression_table()
    args = regression_args(doc["instance"])
    identical = all(check_blowup_hypotheses(row["r_star"], *args).as_dict() == row for row in doc["table"])
    monotone, ladder, _ = ladder_monotone(doc["instance"]["R"], args, points=10)
    ok = identical and monotone and len(ladder) == 10
    record_criterion(9, ok, f"{len(doc['table'])} frozen rows bit-identical: {identical}; 10-point ladder monotone: {monotone}")
    assert ok


def test_criterion_10_transform_identities(record_criterion):
    checks = suite_transform()
    riccati_exact = estimate_blowup_time(1.0, 2.0) == 0.5
    t = np.linspace(0.5, 0.9, 9)
    fit_err = abs(extrapolate_supnorm(t, 1 / (1 - t)) - 1.0)
    failed = [c.name for c in checks if not c.passed]
    ok = not failed and riccati_exact and fit_err <= 1e-6
    worst_z = max(c.value for c in checks if c.name.startswith("z(R^n)"))
    worst_y = max(c.value for c in checks if c.name.startswith("y(r="))
    record_criterion(
        10, ok,
        f"z(R^n)|B1| vs int u {worst_z:.2e} (limit 1e-10); constant-u y {worst_y:.2e} (limit 1e-8); "
        f"Riccati exact {riccati_exact}; failed {failed}",
    )
    assert ok

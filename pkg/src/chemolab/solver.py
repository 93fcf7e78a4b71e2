"""Time stepping for the radial chemotaxis-May-Nowak system.

One step is a Lie splitting of

* a transport substep: backward-Euler heat steps for w (and v when
  kappa = 1) and a finite-volume step for u with lagged-coefficient implicit
  diffusion and explicit upwinded chemotactic flux, followed by
* a reaction substep: the local May-Nowak kinetics advanced by SSP-RK3
  (convex combinations of forward Euler, so nonnegativity is kept under the
  sub-step bound used).

For kappa = 0 the signal v is re-solved from the elliptic problem after every
substep, so each accepted state satisfies the discrete identity int v = int uw.
"""

from __future__ import annotations

import logging
import math
import threading
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .grid import RadialGrid, integral
from .model import InitialData, ModelParams, SourceFn

log = logging.getLogger(__name__)

NEG_TOL = 1e-13


class NonPositiveError(ArithmeticError):
    """A field went negative beyond round-off; retry with a smaller step."""


class LinearSolveFailure(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class State:
    t: float
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class StepControl:
    dt_init: float = 1e-4
    dt_min: float = 1e-12
    dt_max: float = 1e-2
    safety: float = 0.9
    u_cap: Optional[float] = None
    u_cap_factor: float = 1e6
    growth: float = 1.25
    max_rel_change: float = 0.5
    max_steps: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if not 0 < self.safety < 1:
            raise ValueError("safety must lie in (0, 1)")
        if self.u_cap is not None and not self.u_cap > 0:
            raise ValueError("u_cap must be positive")
        if not self.growth >= 1:
            raise ValueError("growth must be >= 1")
        if not self.max_rel_change > 0:
            raise ValueError("max_rel_change must be positive")


@dataclass(frozen=True)
class Scheme:
    """Spatial/temporal discretisation options."""

    chemotaxis_flux: str = "upwind"  # or "vanleer"
    face_average: str = "arithmetic"  # or "harmonic"
    picard_iterations: int = 1
    picard_tol: float = 1e-8

    def __post_init__(self):
        if self.chemotaxis_flux not in ("upwind", "vanleer"):
            raise ValueError(f"unknown chemotaxis flux {self.chemotaxis_flux!r}")
        if self.face_average not in ("arithmetic", "harmonic"):
            raise ValueError(f"unknown face average {self.face_average!r}")
        if not 1 <= self.picard_iterations <= 10:
            raise ValueError("picard_iterations must be in 1..10")


# ------------------------------------------------------------ linear algebra


def _face_transmissibility(grid: RadialGrid, coef) -> np.ndarray:
    return grid.face_areas[1:-1] * coef / grid.spacing


def _solve_tridiagonal(grid: RadialGrid, trans: np.ndarray, diag_extra: np.ndarray, rhs: np.ndarray, dt: float = 1.0) -> np.ndarray:
    """Solve diag_extra*x + dt*(flux divergence) = rhs in conservative form.

    ``trans`` holds the interior face transmissibilities; boundary faces carry
    no flux (zero area at the origin, Neumann at R).
    """
    M = grid.cells
    ab = np.zeros((3, M))
    off = -dt * trans
    ab[0, 1:] = off
    ab[2, :-1] = off
    diag = np.array(diag_extra, dtype=float, copy=True)
    diag[:-1] -= off
    diag[1:] -= off
    ab[1] = diag
    try:
        x = solve_banded((1, 1), ab, rhs, check_finite=False)
    except (LinAlgError, ValueError) as exc:
        raise LinearSolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise LinearSolveFailure("non-finite solution")
    return x


def solve_elliptic_v(grid: RadialGrid, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Discrete radial Helmholtz solve  -Lap v + v = u w  with zero-flux ends."""
    return solve_helmholtz(grid, u * w)


def solve_helmholtz(grid: RadialGrid, f: np.ndarray) -> np.ndarray:
    trans = _face_transmissibility(grid, 1.0)
    omega = grid.cell_measures
    return _solve_tridiagonal(grid, trans, omega, omega * f)


def heat_step(grid: RadialGrid, f: np.ndarray, dt: float) -> np.ndarray:
    """Backward-Euler step of f_t = Lap f."""
    trans = _face_transmissibility(grid, 1.0)
    omega = grid.cell_measures
    return _solve_tridiagonal(grid, trans, omega, omega * f, dt)


# ------------------------------------------------------------ fluxes


def _face_diffusivity(params: ModelParams, u: np.ndarray, how: str) -> np.ndarray:
    law = params.diffusion
    if how == "arithmetic":
        return law(0.5 * (u[:-1] + u[1:]))
    d = law(u)
    s = d[:-1] + d[1:]
    return np.divide(2.0 * d[:-1] * d[1:], s, out=np.zeros_like(s), where=s > 0)


def _van_leer_faces(grid: RadialGrid, u: np.ndarray) -> tuple:
    """Limited face values seen from the left and the right cell of each interior face."""
    du = np.diff(u) / grid.spacing
    left = np.concatenate(([0.0], du))  # mirror symmetry at r = 0
    right = np.concatenate((du, [0.0]))  # zero slope at r = R
    prod = left * right
    denom = left + right
    slope = np.divide(2.0 * prod, denom, out=np.zeros_like(u), where=(prod > 0) & (denom != 0))
    f = grid.faces[1:-1]
    c = grid.centers
    from_left = u[:-1] + slope[:-1] * (f - c[:-1])
    from_right = u[1:] + slope[1:] * (f - c[1:])
    return np.maximum(from_left, 0.0), np.maximum(from_right, 0.0)


def chemotactic_flux(grid: RadialGrid, u: np.ndarray, v: np.ndarray, chi: float, flux: str = "upwind") -> np.ndarray:
    """Outward chemotactic flux chi * A * u_face * v_r through each interior face."""
    vr = np.diff(v) / grid.spacing
    if flux == "upwind":
        uf = np.where(vr > 0, u[:-1], u[1:])
    else:
        fl, fr = _van_leer_faces(grid, u)
        uf = np.where(vr > 0, fl, fr)
    return chi * grid.face_areas[1:-1] * vr * uf


def _outflow(G: np.ndarray) -> np.ndarray:
    out = np.zeros(G.size + 1)
    out[:-1] += np.maximum(G, 0.0)
    out[1:] += np.maximum(-G, 0.0)
    return out


def positivity_dt(grid: RadialGrid, state: State, params: ModelParams, scheme: Scheme = Scheme()) -> float:
    """Largest dt for which the explicit chemotaxis update keeps u nonnegative."""
    G = chemotactic_flux(grid, state.u, state.v, params.chi, scheme.chemotaxis_flux)
    out = _outflow(G)
    mass = grid.cell_measures * state.u
    active = out > 0
    if not np.any(active):
        return math.inf
    return float(np.min(mass[active] / out[active]))


# ------------------------------------------------------------ substeps


def _transport(grid, state: State, params: ModelParams, dt: float, scheme: Scheme):
    omega = grid.cell_measures
    w = heat_step(grid, state.w, dt)
    v = heat_step(grid, state.v, dt) if params.kappa == 1 else state.v

    G = chemotactic_flux(grid, state.u, state.v, params.chi, scheme.chemotaxis_flux)
    div = np.zeros_like(state.u)
    div[:-1] += G
    div[1:] -= G
    rhs = omega * state.u - dt * div
    if np.min(rhs) < -NEG_TOL * np.max(np.abs(omega * state.u)):
        raise NonPositiveError("explicit chemotaxis update went negative")
    rhs = np.maximum(rhs, 0.0)

    u_lag = state.u
    for _ in range(scheme.picard_iterations):
        D = _face_diffusivity(params, u_lag, scheme.face_average)
        u = _solve_tridiagonal(grid, _face_transmissibility(grid, D), omega, rhs, dt)
        if scheme.picard_iterations == 1:
            break
        change = np.max(np.abs(u - u_lag)) / max(np.max(np.abs(u)), 1e-300)
        u_lag = u
        if change < scheme.picard_tol:
            break
    return u, v, w


def _reaction(params: ModelParams, phi: SourceFn, r: np.ndarray, t: float, dt: float, u, v, w):
    """Advance the local kinetics over dt with SSP-RK3 sub-steps."""
    kappa = params.kappa

    def rhs(tt, u, v, w):
        infection = u * w
        fu = phi(r, tt) - u - infection
        fw = v - w
        fv = infection - v if kappa == 1 else None
        return fu, fv, fw

    def euler(tt, h, u, v, w):
        fu, fv, fw = rhs(tt, u, v, w)
        return u + h * fu, (v + h * fv if kappa == 1 else v), w + h * fw

    done = 0.0
    while done < dt:
        # forward Euler stays nonnegative for h * (1 + w) <= 1
        h = min(dt - done, 0.5 / (1.0 + float(np.max(w))))
        if dt - done - h < 1e-12 * dt:
            h = dt - done
        tt = t + done
        u1, v1, w1 = euler(tt, h, u, v, w)
        u2, v2, w2 = euler(tt + h, h, u1, v1, w1)
        u2, v2, w2 = 0.75 * u + 0.25 * u2, 0.75 * v + 0.25 * v2, 0.75 * w + 0.25 * w2
        u3, v3, w3 = euler(tt + 0.5 * h, h, u2, v2, w2)
        u = u / 3.0 + 2.0 / 3.0 * u3
        v = v / 3.0 + 2.0 / 3.0 * v3 if kappa == 1 else v
        w = w / 3.0 + 2.0 / 3.0 * w3
        done += h
    return u, v, w


def _nonnegative(name: str, f: np.ndarray) -> tuple:
    lo = float(np.min(f))
    if lo >= 0:
        return f, False
    if lo < -NEG_TOL * max(float(np.max(np.abs(f))), 1e-300):
        raise NonPositiveError(f"{name} min {lo:.3e}")
    return np.maximum(f, 0.0), True


def step(grid: RadialGrid, state: State, params: ModelParams, phi: SourceFn, dt: float, scheme: Scheme = Scheme()) -> tuple:
    """Advance one step; returns (new_state, clipped) where clipped flags round-off clipping."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u, v, w = _transport(grid, state, params, dt, scheme)
    if params.kappa == 0:
        v = solve_elliptic_v(grid, u, w)
    u, v, w = _reaction(params, phi, grid.centers, state.t, dt, u, v, w)
    if params.kappa == 0:
        v = solve_elliptic_v(grid, u, w)
    clipped = False
    fields = {}
    for name, f in (("u", u), ("v", v), ("w", w)):
        fields[name], c = _nonnegative(name, f)
        clipped |= c
    return State(state.t + dt, fields["u"], fields["v"], fields["w"]), clipped


def initial_state(data: InitialData, params: ModelParams) -> State:
    """State at t = 0; v is slaved to u0 w0 when kappa = 0 (any v0 is ignored)."""
    g = data.grid
    if params.kappa == 0:
        v = solve_elliptic_v(g, data.u0, data.w0)
    else:
        if data.v0 is None:
            raise ValueError("kappa = 1 requires v0")
        v = np.asarray(data.v0, dtype=float)
    return State(0.0, np.asarray(data.u0, dtype=float), v, np.asarray(data.w0, dtype=float))


# ------------------------------------------------------------ run loop


COMPLETED = "Completed"
BLOWUP = "BlowupSuspected"
STALLED = "Stalled"
CANCELLED = "Cancelled"

Observer = Callable[[RadialGrid, State], dict]


def sample_row(grid: RadialGrid, state: State, dt: float) -> dict:
    return {
        "t": state.t,
        "dt": dt,
        "u_l1": integral(grid, state.u),
        "u_inf": float(np.max(state.u)),
        "u_min": float(np.min(state.u)),
        "v_int": integral(grid, state.v),
        "uw_int": integral(grid, state.u * state.w),
        "v_inf": float(np.max(state.v)),
        "w_inf": float(np.max(state.w)),
        "w_min": float(np.min(state.w)),
    }


@dataclass
class RunReport:
    status: str
    reason: str
    grid: RadialGrid
    params: ModelParams
    t_end: float
    u_cap: float
    samples: list = field(default_factory=list)
    states: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    step_t: list = field(default_factory=list)
    step_dt: list = field(default_factory=list)
    step_u_inf: list = field(default_factory=list)
    n_steps: int = 0
    n_rejected: int = 0
    n_clipped: int = 0
    last_dt: float = math.nan
    initial: Optional[State] = None
    final: Optional[State] = None
    wall_time: float = 0.0

    def series(self, name: str) -> np.ndarray:
        return np.array([s[name] for s in self.samples], dtype=float)

    @property
    def columns(self) -> list:
        return list(self.samples[0]) if self.samples else []


def run(
    grid: RadialGrid,
    initial: State,
    params: ModelParams,
    phi: SourceFn,
    control: StepControl,
    t_end: float,
    observers: Iterable[Observer] = (),
    *,
    scheme: Scheme = Scheme(),
    cadence: Optional[float] = None,
    every_steps: int = 0,
    snapshot_times: Iterable[float] = (),
    keep_states: bool = False,
    cancel: Optional[threading.Event] = None,
) -> RunReport:
    """Integrate to ``t_end`` with adaptive, positivity-preserving step control.

    Samples are taken at t = 0, at multiples of ``cadence`` (hit exactly), every
    ``every_steps`` accepted steps, and at termination. Termination reasons:
    ``Completed`` (t_end reached), ``BlowupSuspected`` (||u||_inf + ||w||_inf
    above the cap), ``Stalled`` (step below dt_min or step budget spent),
    ``Cancelled``.
    """
    observers = list(observers)
    start = _time.perf_counter()
    u0_inf = float(np.max(initial.u))
    u_cap = control.u_cap if control.u_cap is not None else control.u_cap_factor * max(u0_inf, float(np.max(initial.w)), 1e-300)
    report = RunReport("", "", grid, params, t_end, u_cap, initial=initial)
    snaps = sorted(float(s) for s in snapshot_times if 0 <= s <= t_end)

    def record(state: State, dt: float) -> None:
        row = sample_row(grid, state, dt)
        for obs in observers:
            row.update(obs(grid, state))
        report.samples.append(row)
        if keep_states:
            report.states.append(state)

    def next_stop(t: float) -> float:
        stop = t_end
        if cadence:
            k = math.floor(t / cadence + 1e-9) + 1
            stop = min(stop, k * cadence)
        for s in snaps:
            if s > t * (1 + 1e-15):
                stop = min(stop, s)
                break
        return stop

    state = initial
    if 0.0 in snaps:
        report.snapshots[0.0] = state
    record(state, 0.0)
    dt = control.dt_init
    since_sample = 0
    status, reason = COMPLETED, "reached t_end"

    while state.t < t_end:
        if cancel is not None and cancel.is_set():
            status, reason = CANCELLED, "cancelled"
            break
        if control.max_steps is not None and report.n_steps >= control.max_steps:
            status, reason = STALLED, f"step budget {control.max_steps} spent"
            break
        dt_nat = min(dt, control.dt_max, control.safety * positivity_dt(grid, state, params, scheme))
        if dt_nat < control.dt_min:
            status, reason = STALLED, f"time step {dt_nat:.3e} below dt_min at t={state.t:.6g}"
            report.last_dt = dt_nat
            break
        stop = next_stop(state.t)
        dt_step = dt_nat
        landing = stop - state.t <= dt_nat * (1 + 1e-12)
        if landing:
            dt_step = stop - state.t
        try:
            new, clipped = step(grid, state, params, phi, dt_step, scheme)
        except (NonPositiveError, LinearSolveFailure) as exc:
            log.debug("reject t=%.6g dt=%.3e: %s", state.t, dt_step, exc)
            report.n_rejected += 1
            dt = 0.5 * dt_step
            continue
        scale = max(float(np.max(state.u)), 1e-300)
        if np.max(np.abs(new.u - state.u)) > control.max_rel_change * scale:
            report.n_rejected += 1
            dt = 0.5 * dt_step
            continue
        if landing:
            new = State(stop, new.u, new.v, new.w)
        state = new
        report.n_steps += 1
        report.n_clipped += int(clipped)
        report.last_dt = dt_nat
        report.step_t.append(state.t)
        report.step_dt.append(dt_step)
        report.step_u_inf.append(float(np.max(state.u)))
        since_sample += 1
        dt = dt_nat * control.growth

        blew = float(np.max(state.u)) + float(np.max(state.w)) > u_cap
        hit_cadence = landing and (cadence and stop < t_end)
        if landing and stop in snaps:
            report.snapshots[stop] = state
        if blew:
            status, reason = BLOWUP, f"||u||+||w|| exceeded cap {u_cap:.3e} at t={state.t:.6g}"
            break
        if hit_cadence or (every_steps and since_sample >= every_steps):
            record(state, dt_step)
            since_sample = 0

    if not report.samples or report.samples[-1]["t"] != state.t:
        record(state, report.step_dt[-1] if report.step_dt else 0.0)
    report.status, report.reason = status, reason
    report.final = state
    report.wall_time = _time.perf_counter() - start
    log.info("run finished: %s (%s) after %d steps, %d rejected", status, reason, report.n_steps, report.n_rejected)
    return report

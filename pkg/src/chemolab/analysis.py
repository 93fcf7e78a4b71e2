"""Blow-up diagnostics over solver states.

The cumulative mass z(s) = n int_0^{s^(1/n)} rho^(n-1) u d rho, the moment
y(r) = int_0^{r^n} s^(-eta) z(s) ds, the Riccati-type differential
inequality for y, the smallness conditions on the concentration radius, and
run classification.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid import RadialGrid, integral, lp_norm, unit_ball_volume
from .model import ModelParams, regime_label
from .solver import BLOWUP, COMPLETED, STALLED, RunReport, State


class AnalysisError(ValueError):
    pass


class NoEstimate(AnalysisError):
    """The sup-norm series does not support a blow-up time extrapolation."""


# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class MomentConfig:
    """Free parameters (epsilon, eta, lambda, p) of the moment inequality.

    ``m`` is the exponent in D(h) <= K_D h^(m-1) and must lie in (0, 1).
    ``p`` defaults to the smallest admissible value.
    """

    n: int
    m: float
    epsilon: float = 0.1
    eta: float = 0.2
    lam: float = 0.1
    p: Optional[float] = None

    def __post_init__(self):
        n, m = self.n, self.m
        if n not in (2, 3):
            raise AnalysisError("n must be 2 or 3")
        if not 0 < m < 1:
            raise AnalysisError(f"the moment inequality needs 0 < m < 1, got m = {m:g}")
        if not 0 < self.epsilon < 2 / n:
            raise AnalysisError(f"epsilon must lie in (0, {2 / n:g})")
        eta_max = min(2 - 2 / n - m, 2 / n - self.epsilon, 1.0)
        if not 0 < self.eta < eta_max:
            raise AnalysisError(f"eta must lie in (0, {eta_max:g}) for n={n}, m={m:g}")
        lam_max = 2 - m - 2 / n - self.eta
        if not 0 < self.lam < lam_max:
            raise AnalysisError(f"lambda must lie in (0, {lam_max:g})")
        p_lo, p_hi = n / 2, (math.inf if n == 2 else n / (n - 2))
        p_need = 1.0 / (1.0 - (2 / n - self.epsilon))
        p = self.p
        if p is None:
            p = p_need if p_need > p_lo else 0.5 * (p_lo + min(p_hi, p_lo + 1))
            object.__setattr__(self, "p", p)
        if not p_lo < p < p_hi:
            raise AnalysisError(f"p must lie in ({p_lo:g}, {p_hi:g})")
        if (p - 1) / p < 2 / n - self.epsilon - 1e-12:
            raise AnalysisError("p too small: need (p-1)/p >= 2/n - epsilon")
        if not self.xi > 0:
            raise AnalysisError("xi must be positive")

    @property
    def xi(self) -> float:
        n, m = self.n, self.m
        return (1 - 2 / n - self.eta - self.lam) / (1 - m) + 1

    @classmethod
    def default(cls, n: int, m: float, epsilon: float = 0.1) -> "MomentConfig":
        """Defaults eps=0.1, eta=0.2, lambda=0.1, shrunk where m makes them inadmissible."""
        eta = min(0.2, 0.5 * min(2 - 2 / n - m, 2 / n - epsilon))
        lam = min(0.1, 0.5 * (2 - m - 2 / n - eta))
        return cls(n, m, epsilon, eta, lam)


@dataclass(frozen=True)
class GammaConstants:
    gamma1: float
    gamma2: float
    gamma3: float
    K: float


def gamma_constants(mu: float, alpha: float, beta: float, cfg: MomentConfig, R: float, v_pnorms: Sequence[float]) -> GammaConstants:
    """gamma2 = alpha/2, gamma3 = 2 beta + 1, and gamma1 from the empirical sup of ||v||_p."""
    v_pnorms = np.asarray(v_pnorms, dtype=float)
    if v_pnorms.size == 0:
        raise AnalysisError("empty ||v||_p history")
    n, p = cfg.n, cfg.p
    K = float(np.max(v_pnorms))
    g1 = K * (R**n) ** ((p - 1) / p - (2 / n - cfg.epsilon)) / unit_ball_volume(n) ** (1 / p)
    return GammaConstants(g1, alpha / 2, 2 * beta + 1, K)


# ---------------------------------------------------------------- z and y


@dataclass(frozen=True, eq=False)
class CumulativeMass:
    """z on the s = r^n grid; exactly piecewise linear for cellwise constant u."""

    s: np.ndarray
    z: np.ndarray
    slope: np.ndarray

    def __call__(self, s):
        return np.interp(s, self.s, self.z)


def cumulative_mass_z(grid: RadialGrid, u: np.ndarray) -> CumulativeMass:
    s = grid.faces**grid.n
    z = np.concatenate(([0.0], np.cumsum(grid.cell_measures * u))) / grid.ball_volume
    return CumulativeMass(s, z, np.asarray(u, dtype=float))


def _power_integral(a, b, q):
    """int_a^b s^q ds for q > -1."""
    return (b ** (q + 1) - a ** (q + 1)) / (q + 1)


def moment_y(grid: RadialGrid, u: np.ndarray, r: float, eta: float) -> float:
    """y(r) = int_0^{r^n} s^-eta z(s) ds, integrated exactly cell by cell."""
    if not eta < 1:
        raise AnalysisError("eta >= 1 makes the weight non-integrable at s = 0")
    if not 0 < r <= grid.R:
        raise AnalysisError(f"r must lie in (0, {grid.R}]")
    zt = cumulative_mass_z(grid, u)
    S = r**grid.n
    k = int(np.searchsorted(zt.s, S, side="left"))  # cells 0..k-1 touch [0, S]
    s_lo = zt.s[:k]
    s_hi = np.minimum(zt.s[1 : k + 1], S)
    p1 = _power_integral(s_lo, s_hi, -eta)
    p2 = _power_integral(s_lo, s_hi, 1.0 - eta)
    cells = zt.z[:k] * p1 + zt.slope[:k] * (p2 - s_lo * p1)
    return float(np.sum(cells))


# ---------------------------------------------------------------- window


@dataclass(frozen=True)
class WindowReport:
    mass: float
    w_min: float
    w_max: float
    v_pnorm: float
    mass_ok: bool
    w_lower_ok: bool
    w_upper_ok: bool
    v_ok: bool

    @property
    def ok(self) -> bool:
        return self.mass_ok and self.w_lower_ok and self.w_upper_ok and self.v_ok


def check_window(grid: RadialGrid, state: State, mu: float, alpha: float, beta: float, p: float, K: float = math.inf) -> WindowReport:
    """Short-time bounds: mu/2 <= int u <= 2 mu, alpha/2 <= w <= 2 beta, ||v||_p <= K."""
    mass = integral(grid, state.u)
    wmin, wmax = float(np.min(state.w)), float(np.max(state.w))
    vp = lp_norm(grid, state.v, p)
    return WindowReport(
        mass, wmin, wmax, vp,
        mu / 2 <= mass <= 2 * mu,
        wmin >= alpha / 2,
        wmax <= 2 * beta,
        vp <= K * (1 + 1e-12),
    )


def empirical_window_time(grid: RadialGrid, states: Sequence[State], mu: float, alpha: float, beta: float, p: float, K: float = math.inf) -> float:
    """First sampled exit time from the window, capped by 1/(4(2 beta + 1))."""
    cap = 1.0 / (4 * (2 * beta + 1))
    for s in states:
        if s.t >= cap:
            break
        if not check_window(grid, s, mu, alpha, beta, p, K).ok:
            return s.t
    return cap


# ---------------------------------------------------------------- ODI


@dataclass(frozen=True)
class OdiResidual:
    residual: float
    y_t: float
    rhs: float
    quadratic: float
    linear: float
    signal: float
    diffusion: float

    @property
    def scale(self) -> float:
        return max(abs(self.quadratic), abs(self.linear), abs(self.signal), abs(self.diffusion))

    def holds(self, rtol: float = 1e-2) -> bool:
        return self.residual >= -rtol * self.scale


def _odi_terms(grid: RadialGrid, u: np.ndarray, r: float, cfg: MomentConfig, g: GammaConstants, chi: float, K_D: float) -> tuple:
    n, eta, eps, m = cfg.n, cfg.eta, cfg.epsilon, cfg.m
    y = moment_y(grid, u, r, eta)
    z = float(cumulative_mass_z(grid, u)(r**n))
    quad = eta * g.gamma2 * chi * (2 - eta) / (2 * r ** (n * (2 - eta))) * y**2
    lin = g.gamma3 * y
    sig = g.gamma1 * chi * r ** (n * (2 / n - eps - eta)) * z
    xi = cfg.xi
    dif = n**2 * K_D * (2 - 2 / n - eta) / m * (r ** (n * cfg.lam / m) * z + r ** (n * xi) / xi)
    return y, quad, lin, sig, dif


def odi_residual(grid: RadialGrid, before: State, after: State, r: float, cfg: MomentConfig, gammas: GammaConstants, chi: float, K_D: float) -> OdiResidual:
    """Finite-difference y_t minus the right-hand side of the moment inequality.

    The right-hand side is averaged over the two states, matching the
    centred difference quotient. Nonnegative residual means the inequality
    holds on [before.t, after.t].
    """
    dt = after.t - before.t
    if not dt > 0:
        raise AnalysisError("states must be in increasing time order")
    y0, *t0 = _odi_terms(grid, before.u, r, cfg, gammas, chi, K_D)
    y1, *t1 = _odi_terms(grid, after.u, r, cfg, gammas, chi, K_D)
    quad, lin, sig, dif = (0.5 * (a + b) for a, b in zip(t0, t1))
    y_t = (y1 - y0) / dt
    rhs = quad - lin - sig - dif
    return OdiResidual(y_t - rhs, y_t, rhs, quad, lin, sig, dif)


# ---------------------------------------------------------------- hypotheses


def c1_constant(mu: float, eta: float, n: int) -> float:
    return mu * (1 - 0.5 ** (n * (1 - eta))) / (2 * (1 - eta) * unit_ball_volume(n))


@dataclass(frozen=True)
class Inequality:
    name: str
    lhs: float
    rhs: float
    strict: bool = False

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs else math.inf

    @property
    def passed(self) -> bool:
        return self.lhs > self.rhs if self.strict else self.lhs >= self.rhs

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "ratio": self.ratio, "pass": self.passed}


@dataclass(frozen=True)
class HypothesisReport:
    r_star: float
    C1: float
    inequalities: tuple

    @property
    def passed(self) -> bool:
        return all(q.passed for q in self.inequalities)

    def __getitem__(self, name: str) -> Inequality:
        for q in self.inequalities:
            if q.name == name:
                return q
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {"r_star": self.r_star, "C1": self.C1, "all_pass": self.passed, "inequalities": [q.as_dict() for q in self.inequalities]}


HYPOTHESES = ("signal", "linear", "diffusion", "riccati_time")


def check_blowup_hypotheses(
    r_star: float, mu: float, alpha: float, beta: float, cfg: MomentConfig, gammas: GammaConstants,
    chi: float, K_D: float, T_star: float, C1: Optional[float] = None,
) -> HypothesisReport:
    """Evaluate the four smallness conditions on the concentration radius.

    signal: quadratic term beats the ||v||_p contribution; linear: it beats
    gamma3 * y; diffusion: it beats the diffusion bound; riccati_time: the
    Riccati blow-up time from y(r*, 0) falls inside [0, T*].
    """
    n, eta, eps, m, xi = cfg.n, cfg.eta, cfg.epsilon, cfg.m, cfg.xi
    b1 = unit_ball_volume(n)
    C1 = c1_constant(mu, eta, n) if C1 is None else C1
    g1, g2, g3 = gammas.gamma1, gammas.gamma2, gammas.gamma3
    r = r_star
    head = eta * g2 * (2 - eta) * C1**2 / (32 * r ** (n * eta))
    qs = (
        Inequality("signal", head, 2 * mu * g1 * r ** (n * (2 / n - eps - eta)) / b1),
        Inequality("linear", eta * g2 * chi * (2 - eta) * C1 / (16 * r**n), g3),
        Inequality(
            "diffusion", head,
            n**2 * K_D * (2 - 2 / n - eta) / m * (2 * mu * r ** (n * cfg.lam / m) / b1 + r ** (n * xi) / xi),
        ),
        Inequality(
            "riccati_time",
            eta * g2 * chi * (2 - eta) / (8 * r ** (n * (2 - eta))) * T_star,
            2 / (C1 * r ** (n * (1 - eta))),
            strict=True,
        ),
    )
    return HypothesisReport(r_star, C1, qs)


def largest_passing_r_star(R: float, *args, iterations: int = 40, **kwargs) -> float:
    """Bisection on (0, R] for the largest radius passing all four conditions.

    Returns the conservative (passing) endpoint; 0.0 when nothing above
    R / 2^iterations passes.
    """
    if check_blowup_hypotheses(R, *args, **kwargs).passed:
        return R
    lo, hi = 0.0, R
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if check_blowup_hypotheses(mid, *args, **kwargs).passed:
            lo = mid
        else:
            hi = mid
    return lo


def riccati_rate(cfg: MomentConfig, gammas: GammaConstants, chi: float, r_star: float) -> float:
    """c in y' >= c y^2 at r = r*."""
    return cfg.eta * gammas.gamma2 * chi * (2 - cfg.eta) / (8 * r_star ** (cfg.n * (2 - cfg.eta)))


def estimate_blowup_time(y0: float, c: float) -> float:
    """Upper bound 1/(c y0) on the existence time under y' >= c y^2."""
    if not (y0 > 0 and c > 0):
        raise AnalysisError("need y0 > 0 and c > 0")
    return 1.0 / (c * y0)


def extrapolate_supnorm(t: Sequence[float], u_inf: Sequence[float], k: int = 8) -> float:
    """Root of a straight-line fit of 1/||u||_inf against t over the last k samples."""
    t = np.asarray(t, dtype=float)[-k:]
    a = np.asarray(u_inf, dtype=float)[-k:]
    if t.size < 3:
        raise NoEstimate("need at least 3 samples")
    if np.any(np.diff(a) <= 0) or np.any(np.diff(t) <= 0):
        raise NoEstimate("sup-norm is not strictly increasing")
    # centre and scale time so the fit is invariant under affine resampling
    t0, span = t[-1], t[-1] - t[0]
    x = (t - t0) / span
    slope, intercept = np.polyfit(x, 1.0 / a, 1)
    if not slope < 0:
        raise NoEstimate("reciprocal sup-norm is not decreasing")
    return float(t0 - intercept / slope * span)


# ---------------------------------------------------------------- classify


BOUNDED = "Bounded"
SUSPECTED = "BlowupSuspected"
INCONCLUSIVE = "Inconclusive"


@dataclass
class Classification:
    verdict: str
    regime: str
    sup_u_inf: float
    t_final: float
    t_detect: Optional[float] = None
    t_estimate: Optional[float] = None
    growth: float = math.nan
    dt_collapse: float = math.nan
    evidence: list = field(default_factory=list)
    reason: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def classify(report: RunReport, params: Optional[ModelParams] = None, dt_collapse_ratio: float = 1e-3, growth_window: float = 0.25) -> Classification:
    """Bounded / BlowupSuspected / Inconclusive verdict with evidence.

    Bounded: t_end reached and the sup-norm over the last quarter of the run
    is at most twice its maximum before. BlowupSuspected: the sup-norm cap was
    hit, or the step size stalled while the reciprocal sup-norm extrapolates
    to a finite time.
    """
    params = params or report.params
    regime = regime_label(params.n, params.kappa, params.m)
    t = report.series("t")
    ui = report.series("u_inf")
    step_u = np.asarray(report.step_u_inf)
    sup = float(max(ui.max(), step_u.max() if step_u.size else 0.0))
    u0 = float(ui[0]) if ui[0] > 0 else math.nan
    growth = sup / u0
    dts = np.asarray(report.step_dt)
    collapse = float(report.last_dt / dts.max()) if dts.size else math.nan
    out = Classification(INCONCLUSIVE, regime, sup, float(t[-1]), growth=growth, dt_collapse=collapse)

    def fit():
        try:
            out.t_estimate = extrapolate_supnorm(report.step_t, report.step_u_inf)
            out.evidence.append(f"reciprocal sup-norm fit extrapolates to T = {out.t_estimate:.6g}")
            return True
        except NoEstimate:
            return False

    if report.status == BLOWUP:
        out.verdict = SUSPECTED
        out.t_detect = out.t_final
        out.evidence.append(f"sup-norm cap exceeded at t = {out.t_final:.6g}")
        out.evidence.append(f"sup-norm grew by {growth:.3g}x")
        if collapse < dt_collapse_ratio:
            out.evidence.append(f"time step collapsed to {collapse:.3g} of its maximum")
        fit()
        return out
    if report.status == STALLED and "dt_min" in report.reason:
        out.evidence.append(f"time step fell below dt_min at t = {out.t_final:.6g}")
        if fit() and out.t_estimate >= out.t_final * (1 - 1e-9):
            out.verdict = SUSPECTED
            out.t_detect = out.t_final
            return out
        out.evidence.clear()
        out.t_estimate = None
        out.reason = "step size stalled without a diverging sup-norm"
        return out
    if report.status == COMPLETED:
        if t[-1] <= 0:
            out.verdict = BOUNDED
            return out
        cut = (1 - growth_window) * t[-1]
        before, late = ui[t < cut], ui[t >= cut]
        if before.size == 0 or late.max() <= 2 * before.max():
            out.verdict = BOUNDED
        else:
            out.reason = "sup-norm still growing over the last quarter of the run"
        return out
    out.reason = report.reason
    return out

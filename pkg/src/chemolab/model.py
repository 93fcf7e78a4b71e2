"""Continuous model: parameters, diffusion laws, sources and initial data."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .grid import RadialGrid, ball_mass, integral, unit_ball_volume


class ModelError(ValueError):
    """Invalid model parameters or infeasible initial data request."""


class SingularDiffusionError(ModelError):
    pass


@dataclass(frozen=True)
class Prototype:
    """D(u) = (1 + u)^(m - 1)."""

    m: float

    def __call__(self, u):
        return np.power(1.0 + np.asarray(u, dtype=float), self.m - 1.0)

    @property
    def degenerate(self) -> bool:
        return False

    def upper_constant(self) -> float:
        # (1+h)^(m-1) <= h^(m-1) for m < 1
        if self.m >= 1:
            raise ModelError("D <= K_D h^(m-1) needs m < 1")
        return 1.0


@dataclass(frozen=True)
class PurePower:
    """D(u) = coeff * u^(m - 1); degenerate at 0 for m > 1, singular for m < 1."""

    m: float
    coeff: float = 1.0

    def __post_init__(self):
        if not self.coeff > 0:
            raise ModelError("PurePower coeff must be positive")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.m < 1 and np.any(u == 0):
            raise SingularDiffusionError(
                f"D(u) = {self.coeff}*u^{self.m - 1:g} is unbounded at u = 0"
            )
        return self.coeff * np.power(u, self.m - 1.0)

    @property
    def degenerate(self) -> bool:
        return self.m > 1

    def upper_constant(self) -> float:
        return self.coeff


DiffusionLaw = Union[Prototype, PurePower]


def eval_diffusion(law: DiffusionLaw, u):
    """Evaluate D(u); scalar in, scalar out."""
    if np.any(np.asarray(u) < 0):
        raise ModelError("diffusion is only defined for u >= 0")
    out = law(u)
    return float(out) if np.ndim(out) == 0 else out


def blowup_exponent(law: DiffusionLaw, m_bar: Optional[float] = None) -> tuple:
    """Return (m, K_D) with D(h) <= K_D h^(m-1) and 0 < m < 1.

    For m <= 0 the law is re-bounded with a user supplied exponent m_bar in (0, 1)
    and K_D = max(sup_[0,1] D, K_D).
    """
    m = law.m
    if m >= 1:
        raise ModelError(f"no blow-up bound for m = {m:g} >= 1")
    K_D = law.upper_constant()
    if m > 0:
        return m, K_D
    if m_bar is None or not 0 < m_bar < 1:
        raise ModelError(
            f"m = {m:g} <= 0 needs an override m_bar in (0, 1) to re-bound the "
            "diffusion law as D <= K h^(m_bar - 1)"
        )
    if isinstance(law, PurePower):
        # unbounded on [0, 1]; the re-bounded constant does not exist
        raise ModelError("PurePower with m <= 0 is unbounded on [0, 1]; cannot re-bound")
    sup01 = float(np.max(law(np.linspace(0.0, 1.0, 1001))))
    return m_bar, max(sup01, K_D)


def boundedness_threshold(n: int, kappa: int) -> float:
    """Sufficient diffusion exponent for global boundedness."""
    if n not in (2, 3) or kappa not in (0, 1):
        raise ModelError("n must be 2 or 3 and kappa 0 or 1")
    if kappa == 1:
        return 1 + n / 2 - 2 / n
    if n == 2:
        return 1.5
    return 2 + n / 2 - 2 / n


def regime_label(n: int, kappa: int, m: float) -> str:
    """Which known regime an exponent m falls in."""
    thr = boundedness_threshold(n, kappa)
    m = round(m, 12)
    if m > thr:
        return "bounded regime"
    if kappa == 1:
        return "open regime"
    if m < 1:
        return "blowup regime"
    if m == 1:
        return "linear diffusion"
    return "open regime"


@dataclass(frozen=True)
class ModelParams:
    n: int
    kappa: int
    chi: float
    diffusion: DiffusionLaw
    phi_star: float = 0.0
    R: float = 1.0

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ModelError(f"n must be 2 or 3, got {self.n}")
        if self.kappa not in (0, 1):
            raise ModelError(f"kappa must be 0 or 1, got {self.kappa}")
        if not self.chi > 0:
            raise ModelError("chi must be positive")
        if not self.phi_star >= 0:
            raise ModelError("phi_star must be nonnegative")
        if not self.R > 0:
            raise ModelError("R must be positive")

    @property
    def m(self) -> float:
        return self.diffusion.m


# ---------------------------------------------------------------- sources


@dataclass(frozen=True)
class Source:
    """Nonnegative source phi(r, t) = amplitude * g(r) * h(t).

    kind "zero", "constant" (g = h = 1) or "separable" (g a compact bump of the
    given radius, h(t) = (1 + cos(omega t)) / 2).
    """

    kind: str = "zero"
    amplitude: float = 0.0
    radius: float = 0.5
    omega: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "separable"):
            raise ModelError(f"unknown source kind {self.kind!r}")
        if self.amplitude < 0:
            raise ModelError("source amplitude must be nonnegative")

    @property
    def sup(self) -> float:
        return 0.0 if self.kind == "zero" else float(self.amplitude)

    def __call__(self, r: np.ndarray, t: float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "zero" or self.amplitude == 0:
            return np.zeros_like(r)
        if self.kind == "constant":
            return np.full_like(r, self.amplitude)
        h = 0.5 * (1.0 + math.cos(self.omega * t))
        return self.amplitude * h * lucy_bump(r, self.radius)


SourceFn = Callable[[np.ndarray, float], np.ndarray]


# ---------------------------------------------------------------- profiles


def lucy_bump(r, a):
    """Compact C^2 quartic (1 - x)^3 (1 + 3x), x = r/a, zero slope at r = 0."""
    x = np.clip(np.asarray(r, dtype=float) / a, 0.0, 1.0)
    return (1.0 - x) ** 3 * (1.0 + 3.0 * x)


def truncated_gaussian(r, sigma, R):
    """exp(-r^2/s^2) minus its tangent at R: nonnegative, zero value and slope at R."""
    r = np.asarray(r, dtype=float)
    X = (R / sigma) ** 2
    x = (r / sigma) ** 2
    return np.exp(-x) - math.exp(-X) * (1.0 + X - x)


def cosine_profile(r, R):
    """(1 + cos(pi r / R)) / 2, from 1 at the origin to 0 at R with zero end slopes."""
    return 0.5 * (1.0 + np.cos(np.pi * np.asarray(r, dtype=float) / R))


def load_profile_csv(path: Union[str, Path], centers: np.ndarray) -> np.ndarray:
    """Read a two-column (r, value) CSV and interpolate it onto cell centers."""
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ModelError(f"{path}: expected two columns (r, value)")
    order = np.argsort(data[:, 0])
    return np.interp(centers, data[order, 0], data[order, 1])


@dataclass(frozen=True, eq=False)
class InitialData:
    grid: RadialGrid
    u0: np.ndarray
    w0: np.ndarray
    mu: float
    alpha: float
    beta: float
    v0: Optional[np.ndarray] = None
    r_star: Optional[float] = None

    def check(self, rtol: float = 1e-10) -> list:
        """Return a list of violated invariants (empty when valid)."""
        problems = []
        g = self.grid
        if np.any(self.u0 < 0):
            problems.append("u0 has negative values")
        mass = integral(g, self.u0)
        if abs(mass - self.mu) > rtol * self.mu:
            problems.append(f"mass {mass!r} != mu {self.mu!r}")
        if np.any(self.w0 < self.alpha * (1 - rtol)) or np.any(self.w0 > self.beta * (1 + rtol)):
            problems.append("w0 leaves [alpha, beta]")
        if self.v0 is not None and np.any(self.v0 < 0):
            problems.append("v0 has negative values")
        if self.r_star is not None:
            inner = ball_mass(g, self.u0, self.r_star)
            if inner < 0.5 * self.mu * (1 - rtol):
                problems.append(f"mass in B(r_star) = {inner:g} < mu/2")
        return problems


U_PROFILES = ("uniform", "bump", "gaussian")
W_PROFILES = ("uniform", "cosine")


def build_initial_data(
    params: ModelParams,
    grid: RadialGrid,
    mu: float,
    alpha: float,
    beta: float,
    r_star: Optional[float] = None,
    profile_kind: str = "bump",
    w_kind: str = "uniform",
    v0_level: float = 0.0,
    u_values: Optional[np.ndarray] = None,
    noise: float = 0.0,
    seed: int = 0,
) -> InitialData:
    """Discrete initial data with total u-mass exactly mu.

    The bump is supported in B(r_star/2); the gaussian has width r_star/2.
    ``u_values`` (cell values, e.g. from :func:`load_profile_csv`) overrides the
    profile shape. ``noise`` multiplies u by 1 + noise*U(-1, 1) before
    normalisation.
    """
    if not mu > 0:
        raise ModelError("mu must be positive")
    if not (alpha > 0 and beta >= alpha):
        raise ModelError("need beta >= alpha > 0")
    if r_star is not None and not 0 < r_star < params.R:
        raise ModelError(f"r_star must lie in (0, R), got {r_star}")
    if grid.n != params.n or not math.isclose(grid.R, params.R):
        raise ModelError("grid does not match model dimension/radius")

    r = grid.centers
    if u_values is not None:
        shape = np.asarray(u_values, dtype=float).copy()
        if shape.shape != r.shape:
            raise ModelError("u_values must have one value per cell")
    elif profile_kind == "uniform":
        shape = np.ones_like(r)
    elif profile_kind == "bump":
        a = 0.5 * (r_star if r_star is not None else params.R)
        if a > params.R:
            raise ModelError("bump support wider than the domain")
        shape = lucy_bump(r, a)
    elif profile_kind == "gaussian":
        sigma = 0.5 * (r_star if r_star is not None else 0.5 * params.R)
        shape = truncated_gaussian(r, sigma, params.R)
    else:
        raise ModelError(f"unknown profile kind {profile_kind!r}")

    if noise:
        rng = np.random.default_rng(seed)
        shape = shape * (1.0 + noise * rng.uniform(-1.0, 1.0, size=shape.shape))
    if np.any(shape < 0):
        raise ModelError("initial profile is negative somewhere")
    total = integral(grid, shape)
    if not total > 0:
        raise ModelError(
            "profile has no mass on this grid (support below the first cell?)"
        )
    u0 = shape * (mu / total)

    if w_kind == "uniform":
        w0 = np.full_like(r, 0.5 * (alpha + beta))
    elif w_kind == "cosine":
        w0 = alpha + (beta - alpha) * cosine_profile(r, params.R)
    else:
        raise ModelError(f"unknown w profile {w_kind!r}")

    v0 = np.full_like(r, float(v0_level)) if params.kappa == 1 else None
    if v0 is not None and v0_level < 0:
        raise ModelError("v0 must be nonnegative")

    data = InitialData(grid, u0, w0, mu, alpha, beta, v0=v0, r_star=r_star)
    problems = data.check()
    if problems:
        raise ModelError("; ".join(problems))
    return data


__all__ = [
    "ModelError",
    "SingularDiffusionError",
    "Prototype",
    "PurePower",
    "DiffusionLaw",
    "eval_diffusion",
    "blowup_exponent",
    "boundedness_threshold",
    "regime_label",
    "ModelParams",
    "Source",
    "SourceFn",
    "lucy_bump",
    "truncated_gaussian",
    "cosine_profile",
    "load_profile_csv",
    "InitialData",
    "build_initial_data",
    "unit_ball_volume",
]

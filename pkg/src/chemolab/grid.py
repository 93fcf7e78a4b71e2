"""Cell-centred radial mesh on [0, R] with n-ball measures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Radial finite-volume mesh.

    ``cell_measures[i]`` is the true n-dimensional volume of the shell
    between ``faces[i]`` and ``faces[i+1]``; ``face_areas[j]`` the area of the
    sphere of radius ``faces[j]`` (zero at the origin).
    """

    n: int
    faces: np.ndarray
    centers: np.ndarray = field(init=False, repr=False)
    cell_measures: np.ndarray = field(init=False, repr=False)
    face_areas: np.ndarray = field(init=False, repr=False)
    spacing: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        f = np.asarray(self.faces, dtype=float)
        if f.ndim != 1 or f.size < 3:
            raise ValueError("need at least two cells")
        if f[0] != 0.0 or np.any(np.diff(f) <= 0):
            raise ValueError("faces must start at 0 and increase strictly")
        f = f.copy()
        f.flags.writeable = False
        b1 = unit_ball_volume(self.n)
        c = 0.5 * (f[:-1] + f[1:])
        fn = f**self.n
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "cell_measures", b1 * np.diff(fn))
        object.__setattr__(self, "face_areas", self.n * b1 * f ** (self.n - 1))
        # distance between neighbouring centres, one per interior face
        object.__setattr__(self, "spacing", np.diff(c))
        for name in ("centers", "cell_measures", "face_areas", "spacing"):
            getattr(self, name).flags.writeable = False

    @classmethod
    def uniform(cls, n: int, R: float, cells: int) -> "RadialGrid":
        return cls(n, np.linspace(0.0, R, cells + 1))

    @classmethod
    def geometric(cls, n: int, R: float, cells: int, h0: float) -> "RadialGrid":
        """Cells growing by a constant ratio from width ``h0`` at the origin."""
        if not 0 < h0 < R / cells:
            raise ValueError("geometric grid needs 0 < h0 < R/cells")

        def excess(q):
            return h0 * math.expm1(cells * math.log(q)) / (q - 1.0) - R

        hi = 2.0
        while excess(hi) < 0:
            hi *= 2
        q = brentq(excess, 1.0 + 1e-14, hi, xtol=1e-15, rtol=1e-15)
        widths = h0 * q ** np.arange(cells)
        faces = np.concatenate(([0.0], np.cumsum(widths)))
        faces *= R / faces[-1]
        faces[-1] = R
        return cls(n, faces)

    @property
    def R(self) -> float:
        return float(self.faces[-1])

    @property
    def cells(self) -> int:
        return self.centers.size

    @property
    def volume(self) -> float:
        return unit_ball_volume(self.n) * self.R**self.n

    @property
    def ball_volume(self) -> float:
        return unit_ball_volume(self.n)

    def restrict(self, values: np.ndarray, coarse: "RadialGrid") -> np.ndarray:
        """Measure-weighted average onto a coarser grid whose faces are a subset."""
        idx = np.searchsorted(self.faces, coarse.faces)
        if not np.allclose(self.faces[idx], coarse.faces, rtol=0, atol=1e-12 * self.R):
            raise ValueError("coarse faces are not a subset of fine faces")
        sums = np.add.reduceat(self.cell_measures * values, idx[:-1])
        return sums / coarse.cell_measures


def integral(grid: RadialGrid, f: np.ndarray) -> float:
    """Discrete integral over the ball, sum_i |cell_i| f_i."""
    return float(np.dot(grid.cell_measures, f))


def lp_norm(grid: RadialGrid, f: np.ndarray, p: float) -> float:
    if p == math.inf:
        return float(np.max(np.abs(f)))
    if not p >= 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    return float(np.dot(grid.cell_measures, np.abs(f) ** p) ** (1.0 / p))


def ball_mass(grid: RadialGrid, f: np.ndarray, r: float) -> float:
    """Integral of f over B(r); the cell containing r is split by exact measure."""
    if not 0 <= r <= grid.R:
        raise ValueError(f"radius {r} outside [0, {grid.R}]")
    if r == grid.R:
        return integral(grid, f)
    k = int(np.searchsorted(grid.faces, r, side="right")) - 1
    weights = np.zeros_like(grid.cell_measures)
    weights[:k] = grid.cell_measures[:k]
    weights[k] = grid.ball_volume * (r**grid.n - grid.faces[k] ** grid.n)
    return float(np.dot(weights, f))


def write_field_csv(path, grid: RadialGrid, columns: dict) -> None:
    """Write r_center plus named cell fields as CSV."""
    names = ["r_center", *columns]
    data = np.column_stack([grid.centers, *columns.values()])
    np.savetxt(Path(path), data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")

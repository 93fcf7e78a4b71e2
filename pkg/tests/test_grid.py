import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chemolab.grid import RadialGrid, ball_mass, integral, lp_norm, unit_ball_volume, write_field_csv


def test_unit_ball_volumes():
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


@pytest.mark.parametrize("n", [2, 3])
def test_uniform_measures_tile_the_ball(n):
    g = RadialGrid.uniform(n, 2.0, 37)
    assert g.cell_measures.sum() == pytest.approx(g.volume, rel=1e-14)
    assert g.face_areas[0] == 0.0
    assert g.face_areas[-1] == pytest.approx(n * unit_ball_volume(n) * 2.0 ** (n - 1))
    assert np.allclose(g.spacing, 2.0 / 37)


def test_geometric_grid_starts_at_h0_and_ends_at_R():
    g = RadialGrid.geometric(2, 1.0, 256, 1e-6)
    widths = np.diff(g.faces)
    assert widths[0] == pytest.approx(1e-6, rel=1e-9)
    assert g.R == 1.0
    ratios = widths[1:] / widths[:-1]
    assert np.allclose(ratios, ratios[0], rtol=1e-8)


def test_geometric_rejects_oversized_first_cell():
    with pytest.raises(ValueError):
        RadialGrid.geometric(2, 1.0, 10, 0.2)


def test_faces_must_increase():
    with pytest.raises(ValueError):
        RadialGrid(2, np.array([0.0, 0.5, 0.4, 1.0]))
    with pytest.raises(ValueError):
        RadialGrid(2, np.array([0.1, 0.5, 1.0]))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 3), st.integers(4, 40), st.integers(0, 2**31))
def test_restriction_preserves_integral(n, coarse_cells, seed):
    fine = RadialGrid.uniform(n, 1.0, 2 * coarse_cells)
    coarse = RadialGrid.uniform(n, 1.0, coarse_cells)
    f = np.random.default_rng(seed).uniform(0, 5, fine.cells)
    assert integral(coarse, fine.restrict(f, coarse)) == pytest.approx(integral(fine, f), rel=1e-12)


def test_lp_norms():
    g = RadialGrid.uniform(2, 1.0, 50)
    ones = np.ones(g.cells)
    assert lp_norm(g, ones, 1) == pytest.approx(math.pi)
    assert lp_norm(g, ones, 2) == pytest.approx(math.sqrt(math.pi))
    assert lp_norm(g, -3 * ones, math.inf) == 3.0
    with pytest.raises(ValueError):
        lp_norm(g, ones, 0.5)


@given(st.floats(0.0, 1.0))
def test_ball_mass_of_constant_is_exact(r):
    g = RadialGrid.uniform(3, 1.0, 17)
    assert ball_mass(g, np.full(g.cells, 2.0), r) == pytest.approx(2.0 * 4 * math.pi / 3 * r**3, abs=1e-13)


def test_ball_mass_rejects_outside_radius():
    g = RadialGrid.uniform(2, 1.0, 4)
    with pytest.raises(ValueError):
        ball_mass(g, np.ones(4), 1.5)


def test_field_csv_round_trip(tmp_path):
    g = RadialGrid.uniform(2, 1.0, 8)
    u = np.linspace(0, 1, 8)
    write_field_csv(tmp_path / "u.csv", g, {"u": u})
    data = np.loadtxt(tmp_path / "u.csv", delimiter=",", skiprows=1)
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "r_center,u"
    assert np.array_equal(data[:, 0], g.centers)
    assert np.array_equal(data[:, 1], u)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(1.0, 8.0))
def test_holder_and_ball_mass_monotone(seed, p):
    g = RadialGrid.uniform(2, 1.5, 30)
    f = np.random.default_rng(seed).uniform(0, 4, g.cells)
    assert lp_norm(g, f, 1) <= g.volume ** (1 - 1 / p) * lp_norm(g, f, p) * (1 + 1e-12)
    masses = [ball_mass(g, f, r) for r in np.linspace(0, 1.5, 50)]
    assert np.all(np.diff(masses) >= 0)
    assert ball_mass(g, f, 1.5) == integral(g, f)


def test_half_radius_ball_volume():
    g = RadialGrid.uniform(3, 2.0, 9)
    assert ball_mass(g, np.ones(9), 1.0) == pytest.approx(4 * math.pi / 3, rel=1e-14)

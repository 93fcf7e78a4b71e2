import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chemolab.grid import RadialGrid, ball_mass, integral
from chemolab.model import (
    ModelError,
    ModelParams,
    Prototype,
    PurePower,
    SingularDiffusionError,
    Source,
    blowup_exponent,
    boundedness_threshold,
    build_initial_data,
    eval_diffusion,
    load_profile_csv,
    lucy_bump,
    regime_label,
    truncated_gaussian,
)


def test_prototype_values():
    assert eval_diffusion(Prototype(0.5), 3.0) == pytest.approx(0.5)
    assert eval_diffusion(Prototype(2.0), 0.0) == 1.0


def test_pure_power_is_singular_at_zero_for_small_m():
    with pytest.raises(SingularDiffusionError):
        eval_diffusion(PurePower(0.5), 0.0)
    assert eval_diffusion(PurePower(2.0, 3.0), 0.0) == 0.0
    assert PurePower(2.0).degenerate


def test_diffusion_rejects_negative_density():
    with pytest.raises(ModelError):
        eval_diffusion(Prototype(0.5), -1.0)


@given(st.floats(0.01, 0.99), st.floats(1e-6, 1e6))
def test_prototype_bound_holds(m, h):
    m_eff, K = blowup_exponent(Prototype(m))
    assert m_eff == m
    assert eval_diffusion(Prototype(m), h) <= K * h ** (m - 1) * (1 + 1e-12)


def test_blowup_exponent_needs_override_for_nonpositive_m():
    with pytest.raises(ModelError, match="m_bar"):
        blowup_exponent(Prototype(-0.5))
    m, K = blowup_exponent(Prototype(-0.5), m_bar=0.3)
    assert m == 0.3 and K == pytest.approx(1.0)
    with pytest.raises(ModelError):
        blowup_exponent(Prototype(1.5))


def test_thresholds():
    assert boundedness_threshold(2, 0) == 1.5
    assert boundedness_threshold(3, 0) == pytest.approx(2 + 1.5 - 2 / 3)
    assert boundedness_threshold(2, 1) == pytest.approx(1.0)
    assert boundedness_threshold(3, 1) == pytest.approx(1 + 1.5 - 2 / 3)


@pytest.mark.parametrize(
    "m, label",
    [(0.5, "blowup regime"), (1.0, "linear diffusion"), (1.2, "open regime"), (1.5, "open regime"), (1.6, "bounded regime")],
)
def test_regime_labels_in_the_plane(m, label):
    assert regime_label(2, 0, m) == label


def test_model_params_validation():
    with pytest.raises(ModelError):
        ModelParams(4, 0, 1.0, Prototype(0.5))
    with pytest.raises(ModelError):
        ModelParams(2, 2, 1.0, Prototype(0.5))
    with pytest.raises(ModelError):
        ModelParams(2, 0, 0.0, Prototype(0.5))
    assert ModelParams(2, 0, 1.0, Prototype(0.7)).m == 0.7


def test_sources():
    r = np.linspace(0, 1, 5)
    assert np.all(Source()(r, 0.0) == 0)
    assert np.all(Source("constant", 2.0)(r, 3.0) == 2.0)
    sep = Source("separable", 1.5, radius=0.5, omega=math.pi)
    assert sep(np.array([0.0]), 0.0)[0] == pytest.approx(1.5)
    assert sep(np.array([0.0]), 1.0)[0] == pytest.approx(0.0, abs=1e-15)
    assert sep.sup == 1.5
    with pytest.raises(ModelError):
        Source("constant", -1.0)


def test_profiles_vanish_properly():
    assert lucy_bump(0.0, 1.0) == 1.0
    assert lucy_bump(1.0, 1.0) == 0.0
    R = 1.0
    assert truncated_gaussian(R, 0.3, R) == pytest.approx(0.0, abs=1e-16)
    assert np.all(truncated_gaussian(np.linspace(0, R, 100), 0.3, R) >= 0)


@pytest.mark.parametrize("kind", ["uniform", "bump", "gaussian"])
def test_initial_data_mass_and_window(kind):
    p = ModelParams(2, 0, 1.0, Prototype(0.5))
    g = RadialGrid.uniform(2, 1.0, 128)
    r_star = None if kind == "uniform" else 0.4
    d = build_initial_data(p, g, 2.5, 0.5, 1.5, r_star=r_star, profile_kind=kind, w_kind="cosine")
    assert integral(g, d.u0) == pytest.approx(2.5, rel=1e-12)
    assert d.w0.min() >= 0.5 and d.w0.max() <= 1.5
    assert d.v0 is None
    if kind == "bump":
        assert ball_mass(g, d.u0, 0.4) == pytest.approx(2.5, rel=1e-12)


def test_initial_data_kappa_one_carries_v0():
    p = ModelParams(2, 1, 1.0, Prototype(0.5))
    g = RadialGrid.uniform(2, 1.0, 16)
    d = build_initial_data(p, g, 1.0, 1.0, 1.0, v0_level=0.3)
    assert np.all(d.v0 == 0.3)


def test_uniform_data_cannot_claim_concentration():
    p = ModelParams(2, 0, 1.0, Prototype(0.5))
    g = RadialGrid.uniform(2, 1.0, 64)
    with pytest.raises(ModelError, match="mu/2"):
        build_initial_data(p, g, 1.0, 1.0, 1.0, r_star=0.4, profile_kind="uniform")


def test_initial_data_rejects_bad_requests():
    p = ModelParams(2, 0, 1.0, Prototype(0.5))
    g = RadialGrid.uniform(2, 1.0, 16)
    with pytest.raises(ModelError):
        build_initial_data(p, g, 1.0, 2.0, 1.0)
    with pytest.raises(ModelError):
        build_initial_data(p, g, -1.0, 1.0, 1.0)
    with pytest.raises(ModelError, match="no mass"):
        build_initial_data(p, g, 1.0, 1.0, 1.0, r_star=1e-4)


def test_noise_is_seeded():
    p = ModelParams(2, 0, 1.0, Prototype(0.5))
    g = RadialGrid.uniform(2, 1.0, 32)
    a = build_initial_data(p, g, 1.0, 1.0, 1.0, profile_kind="uniform", noise=0.3, seed=4)
    b = build_initial_data(p, g, 1.0, 1.0, 1.0, profile_kind="uniform", noise=0.3, seed=4)
    assert np.array_equal(a.u0, b.u0)
    assert np.ptp(a.u0) > 0


def test_profile_csv(tmp_path):
    path = tmp_path / "u.csv"
    path.write_text("# r,u\n1.0,0.0\n0.0,2.0\n")
    vals = load_profile_csv(path, np.array([0.25, 0.5]))
    assert np.allclose(vals, [1.5, 1.0])

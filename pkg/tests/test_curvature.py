import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import maxabs, sample
from finslerconn.connections import PRESETS, ConnectionParams
from finslerconn.curvature import (
    curvature,
    flag_curvature,
    bianchi_residuals,
    reduced_hv,
    reduced_hv_expected,
    symmetry_residuals,
)
from finslerconn.diffengine import TangentPoint
from finslerconn.errors import DegenerateFlagError
from finslerconn.metrics import LocalGeometry, Riemannian, make_metric


def _lowered(m, p, c):
    g = LocalGeometry(m, p, 2).g.value
    return curvature(m, p, c).lowered(g)


@pytest.mark.parametrize("preset", sorted(PRESETS))
def test_euclidean_is_flat(zoo3, preset):
    m = zoo3["euclidean"]
    for p in sample(m, 2, 0):
        b = curvature(m, p, ConnectionParams.preset(preset))
        assert maxabs(b.R.values) < 1e-14
        assert maxabs(b.P.values) < 1e-14
        assert maxabs(b.Q.values) < 1e-14


def test_sphere_riemann_component():
    m = Riemannian(2, chart="sphere")
    th = 0.8
    p = TangentPoint([th, 0.3], [0.4, 0.7])
    R = _lowered(m, p, ConnectionParams.preset("cartan"))["R"]
    s2 = np.sin(th) ** 2
    expected = np.zeros((2, 2, 2, 2))
    expected[0, 1, 1, 0] = expected[1, 0, 0, 1] = s2
    expected[0, 1, 0, 1] = expected[1, 0, 1, 0] = -s2
    np.testing.assert_allclose(R, expected, atol=1e-12)


def test_hyperbolic_constant_curvature():
    # sectional curvature -1 in the slot order used by flag_curvature
    m = Riemannian(3, chart="hyperbolic")
    p = TangentPoint([0.2, -0.1, 0.8], [0.3, 0.5, -0.2])
    R = _lowered(m, p, ConnectionParams.preset("chern"))["R"]
    a = np.eye(3) / 0.8**2
    expected = -(np.einsum("il,jk->ijkl", a, a) - np.einsum("ik,jl->ijkl", a, a))
    np.testing.assert_allclose(R, expected, atol=1e-10)


def test_riemannian_curvature_is_preset_independent(zoo2):
    m = zoo2["riemannian"]
    p = sample(m, 1, 1)[0]
    ref = curvature(m, p, ConnectionParams.preset("cartan")).R.values
    for name in PRESETS:
        b = curvature(m, p, ConnectionParams.preset(name))
        assert maxabs(b.R.values - ref) < 1e-12
        assert maxabs(b.P.values) < 1e-12


@pytest.mark.parametrize("kind", ["randers", "funk_disk", "minkowski_quartic"])
def test_antisymmetries(zoo3, kind):
    m = zoo3[kind]
    rng = np.random.default_rng(2)
    cs = [ConnectionParams.preset(n) for n in PRESETS]
    cs.append(ConnectionParams(tuple(rng.uniform(-1, 1, 3)), 0.6))
    for p in sample(m, 2, 3):
        for c in cs:
            b = curvature(m, p, c)
            assert maxabs(b.R.values + b.R.values.transpose(0, 1, 3, 2)) < 1e-9
            assert maxabs(b.Q.values + b.Q.values.transpose(0, 1, 3, 2)) < 1e-9


def test_cartan_lowered_curvature_antisymmetric_in_first_pair(zoo3):
    m = zoo3["funk_disk"]
    for p in sample(m, 2, 4):
        low = _lowered(m, p, ConnectionParams.preset("cartan"))
        for key in ("R", "P", "Q"):
            t = low[key]
            assert maxabs(t + t.transpose(1, 0, 2, 3)) < 1e-10


def test_homogeneity_of_curvature(zoo2):
    m = zoo2["randers"]
    c = ConnectionParams.preset("cartan")
    p = sample(m, 1, 5)[0]
    a, b = curvature(m, p, c), curvature(m, p.scaled(3.0), c)
    # all three curvatures are 0-homogeneous in y
    for key in ("R", "P", "Q"):
        assert maxabs(getattr(b, key).values - getattr(a, key).values) < 1e-10


# -- identity residuals in three dimensions ------------------------------------


def _cartan_type_draws(seed, count):
    rng = np.random.default_rng(seed)
    out = [ConnectionParams.preset("cartan"), ConnectionParams.preset("hashiguchi")]
    for _ in range(count):
        out.append(ConnectionParams(tuple([1.0] + list(rng.uniform(-1, 1, 3))), 1.0))
    return out


@pytest.mark.parametrize("kind", ["randers", "funk_disk"])
def test_bianchi_type_identities(zoo3, kind):
    m = zoo3[kind]
    for p in sample(m, 2, 6):
        for c in _cartan_type_draws(7, 2):
            for name, val in bianchi_residuals(m, p, c).items():
                assert val < 1e-8, (name, c.label)
            for name, val in symmetry_residuals(m, p, c).items():
                assert val < 1e-8, (name, c.label)


def test_vv_curvature_nontrivial_in_three_dimensions(zoo3, zoo2):
    c = ConnectionParams.preset("cartan")
    p3 = sample(zoo3["funk_disk"], 1, 8)[0]
    p2 = sample(zoo2["funk_disk"], 1, 8)[0]
    assert maxabs(curvature(zoo3["funk_disk"], p3, c).Q.values) > 1e-3
    assert maxabs(curvature(zoo2["funk_disk"], p2, c).Q.values) < 1e-12


def test_identities_reject_other_types(zoo2):
    m = zoo2["randers"]
    p = sample(m, 1, 9)[0]
    with pytest.raises(ValueError):
        bianchi_residuals(m, p, ConnectionParams.preset("berwald"))
    with pytest.raises(ValueError):
        symmetry_residuals(m, p, ConnectionParams((1.0,), 0.5))


# -- reduced hv-curvature -------------------------------------------------------


@pytest.mark.parametrize("r", [0.0, 1.0])
def test_reduced_hv_closed_form(zoo3, r):
    rng = np.random.default_rng(10)
    for kind in ("randers", "funk_disk"):
        m = zoo3[kind]
        for p in sample(m, 2, 11):
            for _ in range(2):
                c = ConnectionParams(tuple([1.0] + list(rng.uniform(-1, 1, 3))), r)
                got = reduced_hv(m, p, c).values
                assert maxabs(got - reduced_hv_expected(m, p, c).values) < 1e-8 * (1 + maxabs(got))


@pytest.mark.parametrize("preset", ["berwald", "hashiguchi"])
def test_unit_kappa1_cancels_reduced_hv(zoo3, preset):
    c = ConnectionParams.preset(preset)
    for kind in ("randers", "funk_disk"):
        m = zoo3[kind]
        for p in sample(m, 2, 12):
            assert maxabs(reduced_hv(m, p, c).values) < 1e-10


def test_berwald_metric_has_flat_berwald_hv(zoo2):
    m = zoo2["minkowski_quartic"]
    for p in sample(m, 2, 13):
        assert maxabs(curvature(m, p, ConnectionParams.preset("berwald")).P.values) < 1e-10
        assert maxabs(curvature(m, p, ConnectionParams.preset("cartan")).P.values) < 1e-10
        assert maxabs(curvature(m, p, ConnectionParams.preset("shen")).P.values) > 1e-3


# -- flag curvature --------------------------------------------------------------


def test_sphere_flag_curvature(zoo2):
    m = zoo2["riemannian"]
    rng = np.random.default_rng(14)
    for p in sample(m, 4, 15):
        V = rng.normal(size=2)
        assert flag_curvature(m, p, V) == pytest.approx(1.0, abs=1e-10)


def test_sphere_radius_scales_flag_curvature():
    m = Riemannian(2, chart="sphere", radius=2.0)
    p = TangentPoint([1.0, 0.0], [0.3, 0.4])
    assert flag_curvature(m, p, [1.0, -1.0]) == pytest.approx(0.25, abs=1e-10)


@settings(max_examples=15, deadline=None)
@given(
    st.floats(-0.5, 0.5),
    st.floats(-0.5, 0.5),
    st.floats(0.0, 2 * np.pi),
    st.floats(0.3, 2.8),
)
def test_funk_flag_curvature_is_constant(x0, x1, angle, turn):
    m = make_metric("funk_disk", 2)
    y = np.array([np.cos(angle), np.sin(angle)])
    V = np.array([np.cos(angle + turn), np.sin(angle + turn)])
    assert flag_curvature(m, TangentPoint([x0, x1], y), V) == pytest.approx(-0.25, abs=1e-9)


def test_degenerate_flag(zoo2):
    m = zoo2["randers"]
    p = sample(m, 1, 16)[0]
    with pytest.raises(DegenerateFlagError):
        flag_curvature(m, p, 2.5 * p.y)

import itertools

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerconn import jets
from finslerconn.diffengine import (
    FD_DEFAULT_STEP,
    ScalarField,
    TangentPoint,
    all_partials,
    fd_partial,
    multi_index,
    partial,
)
from finslerconn.errors import DomainError, OrderExceededError, StepUnderflowError, ZeroDirectionError
from finslerconn.metrics import zoo

from conftest import sample


def field(fn, dim=2):
    return ScalarField(evaluator=fn, dim=dim)


# --- worked examples -----------------------------------------------------------


def test_quadratic_second_derivative():
    f = field(lambda x, y: y[0] * y[0] + y[1] * y[1])
    p = TangentPoint([0.3, -0.1], [0.7, 1.2])
    assert partial(f, p, multi_index(2, "y1", "y1")) == pytest.approx(2.0, abs=1e-14)


def test_bilinear_mixed_derivative():
    f = field(lambda x, y: x[0] * y[0])
    p = TangentPoint([0.3, -0.1], [0.7, 1.2])
    assert partial(f, p, multi_index(2, "x1", "y1")) == pytest.approx(1.0, abs=1e-14)


def test_quartic_root_third_derivative_matches_fd():
    f = field(lambda x, y: np.sqrt(y[0] ** 4 + y[1] ** 4))
    p = TangentPoint([0.0, 0.0], [1.0, 1.0])
    idx = multi_index(2, "y1", "y1", "y1")
    exact = partial(f, p, idx)
    # d^3/dy^3 sqrt(y^4 + 1) vanishes at y = 1
    assert abs(exact) < 1e-13
    assert abs(fd_partial(f, p, idx) - exact) / (1 + abs(exact)) < 1e-6
    q = TangentPoint([0.0, 0.0], [1.3, 0.6])
    exact = partial(f, q, idx)
    assert abs(fd_partial(f, q, idx) - exact) / abs(exact) < 1e-6


def test_fd_cubic():
    f = field(lambda x, y: y[0] ** 3)
    p = TangentPoint([0.0, 0.0], [2.0, 0.5])
    assert fd_partial(f, p, multi_index(2, "y1", "y1")) == pytest.approx(12.0, abs=1e-6)


@pytest.mark.parametrize("idx", [(1, 0, 0, 0), (0, 2, 0, 0), (1, 1, 1, 0), (0, 0, 2, 2)])
def test_fd_constant_field_is_zero(idx):
    f = field(lambda x, y: 3.5 + 0.0 * y[0])
    p = TangentPoint([0.1, 0.2], [1.0, -1.0])
    assert abs(fd_partial(f, p, idx)) < 1e-9
    assert partial(f, p, idx) == 0.0


# --- sympy oracle for jet arithmetic ------------------------------------------

X1, X2, Y1, Y2 = sp.symbols("x1 x2 y1 y2")
SYMS = (X1, X2, Y1, Y2)

CASES = [
    (lambda x, y: (x[0] * y[0] + x[1] * y[1]) ** 3 + y[0] * y[1] ** 2, None),
    (lambda x, y: np.sqrt(1.0 + x[0] * x[0] + y[0] * y[0] * y[1] * y[1]), sp.sqrt),
    (lambda x, y: np.exp(x[0] * y[1]) / (2.0 + y[0] * y[0]), sp.exp),
    (lambda x, y: np.sin(x[0] + y[1]) * np.cos(x[1] * y[0]) + np.log(3.0 + y[0]), sp.sin),
    (lambda x, y: (y[0] ** 4 + y[1] ** 4) ** 0.25, None),
]

SYMPY_CASES = [
    (X1 * Y1 + X2 * Y2) ** 3 + Y1 * Y2**2,
    sp.sqrt(1 + X1**2 + Y1**2 * Y2**2),
    sp.exp(X1 * Y2) / (2 + Y1**2),
    sp.sin(X1 + Y2) * sp.cos(X2 * Y1) + sp.log(3 + Y1),
    (Y1**4 + Y2**4) ** sp.Rational(1, 4),
]


@pytest.mark.parametrize("case", range(len(CASES)))
def test_jet_partials_match_sympy(case):
    fn, _ = CASES[case]
    expr = SYMPY_CASES[case]
    p = TangentPoint([0.3, -0.4], [0.8, 1.1])
    subs = dict(zip(SYMS, [*p.x, *p.y]))
    got = all_partials(field(fn), p, 5)
    for alpha, value in got.items():
        if sum(alpha) > 4 and case in (3,):
            continue  # keep the symbolic cost bounded
        d = expr
        for s, a in zip(SYMS, alpha):
            if a:
                d = sp.diff(d, s, a)
        ref = float(d.subs(subs))
        assert abs(value - ref) <= 1e-12 * (1.0 + abs(ref)), alpha


# --- errors -----------------------------------------------------------------


def test_order_exceeded():
    f = field(lambda x, y: y[0] * y[1])
    p = TangentPoint([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(OrderExceededError):
        partial(f, p, (0, 0, 8, 0))
    with pytest.raises(OrderExceededError):
        fd_partial(f, p, (0, 0, 3, 2))
    with pytest.raises(OrderExceededError):
        jets.seed([0.0, 0.0], [1.0, 1.0], jets.MAX_ORDER + 1)


def test_zero_direction_rejected():
    with pytest.raises(ZeroDirectionError):
        TangentPoint([0.0, 0.0], [0.0, 0.0])


def test_domain_violation_rejected():
    m = zoo()["funk_disk"]
    f = m.scalar_field()
    with pytest.raises(DomainError):
        partial(f, TangentPoint([0.99, 0.0], [1.0, 0.0]), (0, 0, 1, 0))


def test_step_underflow():
    f = field(lambda x, y: y[0] ** 2)
    with pytest.raises(StepUnderflowError):
        fd_partial(f, TangentPoint([0.0, 0.0], [1.0, 1.0]), (0, 0, 1, 0), h=1e-9)


def test_bad_multi_index():
    with pytest.raises(ValueError):
        multi_index(2, "z1")
    with pytest.raises(ValueError):
        partial(field(lambda x, y: y[0]), TangentPoint([0, 0], [1, 1]), (1, 0, 0))


# --- properties -----------------------------------------------------------------


def test_value_coefficient_is_function_value():
    m = zoo()["randers"]
    for p in sample(m, 5, 3):
        assert partial(m.scalar_field("F"), p, (0, 0, 0, 0)) == pytest.approx(m.F(p.x, p.y), rel=1e-15)


@pytest.mark.parametrize("kind", ["euclidean", "riemannian", "minkowski_quartic", "randers", "funk_disk"])
def test_euler_relation(kind):
    m = zoo()[kind]
    f = m.scalar_field("F")
    for p in sample(m, 10, 11):
        grad = [partial(f, p, multi_index(2, f"y{i + 1}")) for i in range(2)]
        assert np.dot(grad, p.y) == pytest.approx(m.F(p.x, p.y), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(
    st.floats(0.1, 3.0),
    st.floats(-1.0, 1.0),
    st.floats(-1.0, 1.0),
    st.floats(-np.pi, np.pi),
)
def test_positive_homogeneity(lam, x1, x2, angle):
    m = zoo()["randers"]
    x = np.array([x1, x2]) * 0.5
    y = np.array([np.cos(angle), np.sin(angle)])
    assert m.F(x, lam * y) == pytest.approx(lam * m.F(x, y), rel=1e-10)


def test_fd_agrees_with_jets_small_sweep():
    # the full 100-point sweep lives in the acceptance suite
    for kind, m in zoo().items():
        f = m.scalar_field()
        for p in sample(m, 3, 5):
            for alpha, v in all_partials(f, p, 4).items():
                if sum(alpha) == 0:
                    continue
                assert abs(fd_partial(f, p, alpha) - v) / (1 + abs(v)) < 1e-6, (kind, alpha)


def test_explicit_step_single_rule():
    f = field(lambda x, y: np.exp(y[0]))
    p = TangentPoint([0.0, 0.0], [0.5, 1.0])
    for k, h in FD_DEFAULT_STEP.items():
        idx = (0, 0, k, 0)
        assert fd_partial(f, p, idx, h=h) == pytest.approx(np.exp(0.5), rel=1e-7)


def test_jet_algebra_inverse_and_einsum():
    x, y = jets.seed([0.2, 0.1], [1.0, 0.5], 3)
    M = jets.stack([jets.stack([1.0 + x[0] * x[0] + 0 * y[0], y[0] * x[1]]), jets.stack([y[0] * x[1], 2.0 + y[1] * y[1]])])
    Minv = jets.inv(M)
    prod = jets.einsum("ij,jk->ik", M, Minv)
    eye = np.eye(2)
    for alpha in itertools.product(range(3), repeat=2):
        if sum(alpha) > 3:
            continue
        full = (alpha[0], 0, alpha[1], 0)
        expected = eye if sum(full) == 0 else np.zeros((2, 2))
        assert np.allclose(prod.partial(full), expected, atol=1e-13)

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_metrics
from finsler_lab import (
    ChartDomain,
    EuclideanQuadratic,
    FiberPoint,
    NonPositiveNorm,
    NotPositiveDefinite,
    Randers,
    ZeroVector,
    eval_F,
    fundamental_tensor,
    random_fiber_points,
    validate_metric,
)
from oracles import SymbolicSpray

METRICS = make_metrics()
FAMILIES = sorted(METRICS)

angle = st.floats(0, 2 * np.pi)
coord = st.floats(-3, 3)
scale = st.floats(0.05, 20)


@pytest.mark.parametrize("family", FAMILIES)
def test_every_family_validates(family, torus):
    rep = validate_metric(METRICS[family], torus, 64, seed=1)
    assert rep.passed, rep.failures
    assert rep.homogeneity_error < 1e-12
    assert rep.euler_error < 1e-12
    assert rep.g_homogeneity_error < 1e-12


def test_sphere_chart_validates(sphere, sphere_domain):
    assert validate_metric(sphere, sphere_domain, 64, seed=2).passed


def test_euclidean_values():
    m = EuclideanQuadratic(np.array([[4.0, 0.0], [0.0, 1.0]]))
    assert eval_F(m, FiberPoint([0.0, 0.0], [1.0, 2.0])) == pytest.approx(np.sqrt(8.0))
    g, g_inv = fundamental_tensor(m, FiberPoint([0.3, 0.1], [1.0, 2.0]))
    np.testing.assert_allclose(g, [[4, 0], [0, 1]], atol=1e-14)
    np.testing.assert_allclose(g_inv, [[0.25, 0], [0, 1]], atol=1e-14)


def test_randers_value():
    m = Randers.from_expressions([[1, 0], [0, 1]], ["0.5", "0"])
    F = eval_F(m, FiberPoint([0.0, 0.0], [[1.0, -1.0], [0.0, 0.0]]))
    np.testing.assert_allclose(F, [1.5, 0.5])


def test_oversized_randers_form_is_reported(torus):
    m = Randers.from_expressions([[1, 0], [0, 1]], ["1.1", "0"])
    rep = validate_metric(m, torus, 16, seed=0)
    assert not rep.passed
    assert any("positivity" in f for f in rep.failures)
    assert any("randers" in f for f in rep.failures)
    assert rep.randers_bound == pytest.approx(1.21)


def test_indefinite_quadratic_is_reported(torus):
    m = EuclideanQuadratic(np.array([[1.0, 0.0], [0.0, -1.0]]))
    assert not validate_metric(m, torus, 8, seed=0).passed


def test_non_convex_norm_is_reported(torus):
    from finsler_lab import CustomAnalytic

    # l^p unit ball with p < 1 is not convex
    m = CustomAnalytic.from_expression("(sqrt(y1^2 + 1e-3*y2^2)^(1/2) + sqrt(y2^2 + 1e-3*y1^2)^(1/2))^2", 2)
    rep = validate_metric(m, torus, 32, seed=0)
    assert any("positive definite" in f or "fundamental tensor" in f for f in rep.failures)


def test_zero_vector_rejected():
    with pytest.raises(ZeroVector):
        FiberPoint([0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ZeroVector):
        FiberPoint(np.zeros((2, 3)), np.array([[1.0, 0.0, 2.0], [0.0, 0.0, 1.0]]))


def test_nonpositive_norm_raises():
    m = Randers.from_expressions([[1, 0], [0, 1]], ["2", "0"])
    with pytest.raises(NonPositiveNorm):
        eval_F(m, FiberPoint([0.0, 0.0], [-1.0, 0.0]))


def test_fundamental_tensor_rejects_indefinite():
    m = EuclideanQuadratic(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises((NotPositiveDefinite, NonPositiveNorm)):
        fundamental_tensor(m, FiberPoint([0.0, 0.0], [1.0, 0.5]))


def test_fundamental_tensor_matches_symbolic():
    oracle = SymbolicSpray(lambda x, y: sp.sqrt(y[0] ** 2 + y[1] ** 2) + sp.Rational(3, 10) * sp.sin(x[0]) * y[1])
    p = random_fiber_points(ChartDomain.torus(2), 10, seed=4)
    g, _ = fundamental_tensor(METRICS["randers"], p)
    for k in range(10):
        ref = sp.lambdify(oracle.x + oracle.y, sp.hessian(oracle.F**2 / 2, oracle.y))(*p.x[:, k], *p.y[:, k])
        np.testing.assert_allclose(g[..., k], np.array(ref, dtype=float), rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("family", FAMILIES)
@given(x1=coord, x2=coord, th=angle, lam=scale)
def test_homogeneity_properties(family, x1, x2, th, lam):
    m = METRICS[family]
    p = FiberPoint([x1, x2], [np.cos(th), np.sin(th)])
    F = eval_F(m, p)
    assert eval_F(m, p.scaled(lam)) == pytest.approx(lam * F, rel=1e-12)
    g, _ = fundamental_tensor(m, p)
    g_lam, _ = fundamental_tensor(m, p.scaled(lam))
    np.testing.assert_allclose(g_lam, g, rtol=1e-9, atol=1e-12)
    assert np.einsum("ij,i,j->", g, p.y, p.y) == pytest.approx(F**2, rel=1e-12)


def test_domain_wrap_and_bounds():
    torus = ChartDomain.torus(2)
    np.testing.assert_allclose(torus.wrap(np.array([7.0, -1.0])), [7.0 - 2 * np.pi, 2 * np.pi - 1.0])
    assert torus.is_torus
    box = ChartDomain(2, bounds=((-1.0, 1.0), (-1.0, 1.0)))
    assert not box.is_torus
    assert box.outside(np.array([1.5, 0.0]))
    assert not box.outside(np.array([0.5, 0.0]))


def test_random_points_are_seeded(torus):
    a = random_fiber_points(torus, 5, 3)
    b = random_fiber_points(torus, 5, 3)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)

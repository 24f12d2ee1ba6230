import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_metrics
from finsler_lab import (
    ChartDomain,
    FiberPoint,
    Randers,
    VectorFieldDef,
    covariant_section_derivative,
    curvature_bundle,
    dynamical_derivative_scalar,
    metric_compatibility_check,
    random_fiber_points,
    riemann_curvature,
    spray_coefficients,
)
from finsler_lab.spray import bracket_identities, dot_scalar
from oracles import SymbolicSpray

METRICS = make_metrics()
FAMILIES = sorted(METRICS)

SYMBOLIC = {
    "randers": lambda x, y: sp.sqrt(y[0] ** 2 + y[1] ** 2) + sp.Rational(3, 10) * sp.sin(x[0]) * y[1],
    "riemannian": lambda x, y: sp.sqrt(
        (1 + sp.Rational(3, 10) * sp.sin(x[0]) ** 2) * y[0] ** 2
        + 2 * sp.Rational(1, 10) * sp.cos(x[1]) * y[0] * y[1]
        + (2 + sp.sin(x[0] + x[1])) * y[1] ** 2
    ),
    "custom": lambda x, y: (y[0] ** 4 + y[1] ** 4 + (1 + sp.Rational(1, 5) * sp.sin(x[0])) * (y[0] ** 2 + y[1] ** 2) ** 2)
    ** sp.Rational(1, 4),
}


@pytest.fixture(scope="module", params=sorted(SYMBOLIC))
def symbolic_case(request):
    return request.param, SymbolicSpray(SYMBOLIC[request.param])


@pytest.mark.slow
def test_curvature_chain_matches_symbolic(symbolic_case):
    family, oracle = symbolic_case
    p = random_fiber_points(ChartDomain.torus(2), 8, seed=21)
    b = curvature_bundle(METRICS[family], p)
    for k in range(8):
        x, y = p.x[:, k], p.y[:, k]
        scale = b.F[k] ** 2
        np.testing.assert_allclose(b.G[:, k], oracle.evaluate("G", x, y), atol=1e-12 * scale)
        np.testing.assert_allclose(b.N[..., k], oracle.evaluate("N", x, y), atol=1e-12 * b.F[k])
        np.testing.assert_allclose(b.R[..., k], oracle.evaluate("R", x, y), atol=1e-11 * scale)


@pytest.mark.parametrize("family", FAMILIES)
def test_fast_spray_agrees_with_expansion(family):
    p = random_fiber_points(ChartDomain.torus(2), 32, seed=5)
    b = curvature_bundle(METRICS[family], p)
    np.testing.assert_allclose(spray_coefficients(METRICS[family], p), b.G, atol=1e-13 * np.max(b.F**2))


def test_round_sphere_curvature(sphere, sphere_domain):
    p = random_fiber_points(sphere_domain, 64, seed=8)
    b = curvature_bundle(sphere, p)
    yl = np.einsum("kj...,j...->k...", b.g, p.y)
    oracle = b.F**2 * np.eye(2)[..., None] - np.einsum("i...,k...->ik...", p.y, yl)
    assert np.max(np.abs(b.R - oracle) / b.F**2) < 1e-12


def test_sphere_values_at_origin(sphere):
    p = FiberPoint([0.0, 0.0], [1.0, 0.0])
    b = curvature_bundle(sphere, p)
    assert b.F == pytest.approx(2.0)
    np.testing.assert_allclose(b.g, 4 * np.eye(2), atol=1e-14)
    np.testing.assert_allclose(b.G, 0.0, atol=1e-14)
    np.testing.assert_allclose(b.R, [[0, 0], [0, 4]], atol=1e-12)


@pytest.mark.parametrize(
    "metric",
    [METRICS["euclidean"], Randers.from_expressions([[1, 0.2], [0.2, 2]], ["0.3", "-0.2"])],
    ids=["euclidean", "minkowski-randers"],
)
def test_constant_coefficient_metrics_are_flat(metric):
    p = random_fiber_points(ChartDomain.torus(2), 64, seed=9)
    assert np.max(np.abs(riemann_curvature(metric, p))) < 1e-10
    assert np.max(np.abs(spray_coefficients(metric, p))) < 1e-14


coord = st.floats(-3, 3)
angle = st.floats(0, 2 * np.pi)
scale = st.floats(0.1, 10)


@pytest.mark.parametrize("family", FAMILIES)
@given(x1=coord, x2=coord, th=angle, lam=scale)
def test_spray_structure(family, x1, x2, th, lam):
    m = METRICS[family]
    p = FiberPoint([x1, x2], [np.cos(th), np.sin(th)])
    b = curvature_bundle(m, p)
    bl = curvature_bundle(m, p.scaled(lam))
    tol = 1e-10
    # homogeneity degrees 2, 1, 0, 2
    np.testing.assert_allclose(bl.G, lam**2 * b.G, atol=tol * lam**2)
    np.testing.assert_allclose(bl.N, lam * b.N, atol=tol * lam)
    np.testing.assert_allclose(bl.Gamma, b.Gamma, atol=tol)
    np.testing.assert_allclose(bl.R, lam**2 * b.R, atol=tol * lam**2)
    # Euler relations
    np.testing.assert_allclose(b.N @ p.y, 2 * b.G, atol=tol)
    np.testing.assert_allclose(np.einsum("ijk,k->ij", b.Gamma, p.y), b.N, atol=tol)
    np.testing.assert_allclose(b.R @ p.y, 0.0, atol=tol)
    # g_y R_y is symmetric
    gR = b.g @ b.R
    np.testing.assert_allclose(gR, gR.T, atol=tol)
    # Berwald coefficients are symmetric in the lower indices
    np.testing.assert_allclose(b.Gamma, np.swapaxes(b.Gamma, 1, 2), atol=tol)


@pytest.mark.parametrize("family", FAMILIES)
def test_norm_is_constant_along_spray(family):
    p = random_fiber_points(ChartDomain.torus(2), 32, seed=10)
    m = METRICS[family]
    np.testing.assert_allclose(dynamical_derivative_scalar(m, m.norm, p), 0.0, atol=1e-12)
    np.testing.assert_allclose(dot_scalar(m, lambda x, y: m.norm(x, y) ** 2, p), 0.0, atol=1e-12)


def test_spray_derivative_of_coordinate_is_velocity():
    p = random_fiber_points(ChartDomain.torus(2), 16, seed=11)
    out = dynamical_derivative_scalar(METRICS["randers"], lambda x, y: x[0], p)
    np.testing.assert_allclose(out, p.y[0], atol=1e-15)


def test_spray_derivative_of_velocity_is_minus_two_g():
    p = random_fiber_points(ChartDomain.torus(2), 16, seed=12)
    m = METRICS["custom"]
    out = dynamical_derivative_scalar(m, lambda x, y: y[1], p)
    np.testing.assert_allclose(out, -2 * spray_coefficients(m, p)[1], atol=1e-13)


@pytest.mark.parametrize("family", FAMILIES)
def test_metric_compatibility(family):
    p = random_fiber_points(ChartDomain.torus(2), 64, seed=13)
    assert np.max(np.abs(metric_compatibility_check(METRICS[family], p))) < 1e-11


@pytest.mark.parametrize("family", FAMILIES)
def test_bracket_identities(family):
    p = random_fiber_points(ChartDomain.torus(2), 64, seed=14)
    for key, arr in bracket_identities(METRICS[family], p).residuals().items():
        assert np.max(np.abs(arr)) < 1e-10, key


def test_constant_field_parallel_on_flat_metric():
    p = random_fiber_points(ChartDomain.torus(2), 16, seed=15)
    V = VectorFieldDef.from_expressions(["0.4", "-1.2"])
    np.testing.assert_allclose(covariant_section_derivative(METRICS["euclidean"], V, p), 0.0, atol=1e-15)


def test_vector_field_helpers():
    V = VectorFieldDef.from_expressions(["sin(x1)", "x2^2"])
    np.testing.assert_allclose(V.values(np.array([[0.5], [2.0]])), [[np.sin(0.5)], [4.0]])
    W = V.scaled_sum(2.0, VectorFieldDef.constant([1.0, 1.0]), -1.0)
    np.testing.assert_allclose(W.values(np.array([[0.5], [2.0]])), [[2 * np.sin(0.5) - 1], [7.0]])
    with pytest.raises(ValueError):
        VectorFieldDef.from_expressions(["1", "y1"])

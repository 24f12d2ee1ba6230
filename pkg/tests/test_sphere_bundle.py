import numpy as np
import pytest

from conftest import make_metrics
from finsler_lab import jets
from finsler_lab import ChartDomain, DegenerateDensity, Randers, VectorFieldDef, random_fiber_points
from finsler_lab.sphere_bundle import (
    SMChartPoint,
    SMGrid,
    dot_energy,
    global_norm,
    hilbert_form,
    integrate_SM,
    stokes_integral,
    rigidity_identity_check,
    total_ricci,
    verify_stokes_lemma,
    volume_constant,
    volume_density,
    wedge_top,
)
from finsler_lab.metric import EuclideanQuadratic
from oracles import richardson_derivative

METRICS = make_metrics()
TORUS = ChartDomain.torus(2)
EIGHT_PI_CUBED = 8 * np.pi**3
FLAT = EuclideanQuadratic(np.eye(2))
D1 = VectorFieldDef.constant([1.0, 0.0])
D2 = VectorFieldDef.constant([0.0, 1.0])


@pytest.fixture(scope="module")
def flat16():
    return SMGrid.build(FLAT, TORUS, 16)


@pytest.fixture(scope="module")
def randers16():
    return SMGrid.build(METRICS["randers"], TORUS, 16)


def test_volume_constants():
    assert volume_constant(2) == 1.0
    assert volume_constant(3) == -0.5
    assert volume_constant(4) == pytest.approx(-1 / 6)


def test_wedge_of_standard_contact_form():
    # omega = dz + x dy on (x, y, z); omega ^ d omega = dx dy dz
    omega = np.array([0.0, 0.7, 1.0])
    domega = np.zeros((3, 3))
    domega[0, 1], domega[1, 0] = 1.0, -1.0
    assert wedge_top(omega, domega) == pytest.approx(1.0)
    assert wedge_top(omega[[1, 0, 2]], domega[[1, 0, 2]][:, [1, 0, 2]]) == pytest.approx(-1.0)


def test_euclidean_density_is_minus_one():
    q = SMChartPoint.on(FLAT, np.array([[0.1, 2.0, 4.0], [0.3, 5.0, 1.0]]), np.array([0.0, 1.0, 4.0]))
    np.testing.assert_allclose(volume_density(FLAT, q), -1.0, atol=1e-14)


@pytest.mark.parametrize("family", ["randers", "custom", "riemannian"])
def test_contact_conditions_pointwise(family):
    m = METRICS[family]
    rng = np.random.default_rng(3)
    q = SMChartPoint.on(m, TORUS.sample(rng, 64), 2 * np.pi * rng.random(64))
    hf = hilbert_form(m, q)
    assert np.max(np.abs(hf.omega_xi() - 1)) < 1e-12
    assert np.max(np.abs(hf.domega_xi())) < 1e-12
    np.testing.assert_allclose(hf.omega, hf.omega_alt, atol=1e-13)
    F = np.asarray(m.norm(list(q.x), list(q.y)))
    np.testing.assert_allclose(F, 1.0, atol=1e-14)


def test_exterior_derivative_matches_finite_differences():
    m = METRICS["randers"]
    z0 = np.array([0.7, 1.9, 2.3])

    def omega(z):
        q = SMChartPoint.on(m, z[:2, None], z[2:, None])
        return hilbert_form(m, q).chart_omega[:, 0]

    grad = np.empty((3, 3))
    for a in range(3):
        e = np.eye(3)[a]
        for b in range(3):
            grad[a, b] = richardson_derivative(lambda t: omega(z0 + t * e)[b], 0.0, 1e-2)
    q0 = SMChartPoint.on(m, z0[:2, None], z0[2:, None])
    np.testing.assert_allclose(hilbert_form(m, q0).chart_domega[..., 0], grad - grad.T, atol=1e-8)


def test_flat_volume(flat16):
    assert flat16.sign == -1
    assert integrate_SM(FLAT, flat16, lambda x, y: 1.0 + 0 * x[0]) == pytest.approx(EIGHT_PI_CUBED, rel=1e-12)


def test_start_angle_invariance():
    def f(x, y):
        return (y[0] ** 2 + 0.3 * y[0] * y[1] ** 3) * (2 + np.sin(x[0]))

    a = integrate_SM(FLAT, SMGrid.build(FLAT, TORUS, 16), f)
    b = integrate_SM(FLAT, SMGrid.build(FLAT, TORUS, 16, theta0=0.37), f)
    assert a == pytest.approx(b, rel=1e-10)


def test_stokes_trivial_cases(flat16, randers16):
    assert verify_stokes_lemma(FLAT, flat16, lambda x, y: jets.sin(x[0])) < 1e-12
    assert stokes_integral(METRICS["randers"], randers16, lambda x, y: 1.0) == 0.0


@pytest.mark.parametrize(
    "f",
    [
        lambda x, y: jets.sin(x[0]) * y[1],
        lambda x, y: jets.cos(x[0] - x[1]) * y[0] ** 2,
        lambda x, y: jets.exp(jets.sin(x[1])) * y[0] * y[1],
    ],
)
def test_stokes_on_randers(randers16, f):
    assert verify_stokes_lemma(METRICS["randers"], randers16, f) < 1e-8


def test_total_ricci_flat_is_zero(flat16):
    V = VectorFieldDef.from_expressions(["sin(x2)", "1"])
    assert abs(total_ricci(FLAT, flat16, V)) < 1e-14


def test_total_ricci_is_quadratic(randers16):
    V = VectorFieldDef.from_expressions(["1 + sin(x2)", "cos(x1)"])
    one = total_ricci(METRICS["randers"], randers16, V)
    two = total_ricci(METRICS["randers"], randers16, V.scaled_sum(2.0, V, 0.0))
    assert two == pytest.approx(4 * one, rel=1e-12)


def test_total_ricci_self_convergence():
    m = METRICS["randers"]
    a = total_ricci(m, SMGrid.build(m, TORUS, 12), D1)
    b = total_ricci(m, SMGrid.build(m, TORUS, 24), D1)
    assert abs(a - b) < 1e-6


def test_global_norm(flat16, randers16):
    assert global_norm(FLAT, flat16, D1) == pytest.approx(EIGHT_PI_CUBED, rel=1e-12)
    assert global_norm(FLAT, flat16, VectorFieldDef.constant([0.0, 0.0])) == 0.0
    V = VectorFieldDef.from_expressions(["sin(x1)", "1"])
    a = global_norm(METRICS["randers"], randers16, V)
    b = global_norm(METRICS["randers"], randers16, V.scaled_sum(-3.0, V, 0.0))
    assert a > 0 and b == pytest.approx(9 * a, rel=1e-12)


def test_integral_rigidity_identity(randers16):
    # for an affine field the integrated identity forces int g(dot V, dot V) = total Ricci
    m = METRICS["randers"]
    assert dot_energy(m, randers16, D2) == pytest.approx(total_ricci(m, randers16, D2), rel=1e-9)


def test_flat_rigidity(flat16):
    for V in (D1, VectorFieldDef.constant([0.3, -0.7])):
        assert dot_energy(FLAT, flat16, V) < 1e-20


@pytest.mark.parametrize(
    "metric, field, tol",
    [
        (FLAT, ["0.5", "2"], 1e-12),
        (FLAT, ["0", "sin(x1)"], 1e-9),
        (METRICS["randers"], ["0", "1"], 1e-8),
        (METRICS["randers"], ["sin(x2)", "cos(x1)"], 1e-8),
        (METRICS["custom"], ["x1", "1"], 1e-8),
    ],
)
def test_pointwise_identity(metric, field, tol):
    p = random_fiber_points(TORUS, 64, seed=41)
    ic = rigidity_identity_check(metric, VectorFieldDef.from_expressions(field), p)
    assert np.max(ic.product_rule_defect / ic.scale) < tol
    assert np.max(ic.corrected_defect / ic.scale) < tol


def test_curvature_form_differs_by_jacobi_term():
    p = random_fiber_points(TORUS, 64, seed=42)
    ic = rigidity_identity_check(FLAT, VectorFieldDef.from_expressions(["0", "sin(x1)"]), p)
    np.testing.assert_allclose(ic.curvature_form_defect, np.abs(ic.jacobi_term), atol=1e-12)
    assert np.max(np.abs(ic.jacobi_term)) > 1e-2


def test_grid_requires_torus_surface():
    with pytest.raises(ValueError):
        SMGrid.build(FLAT, ChartDomain(2, bounds=((-1, 1), (-1, 1))), 8)
    with pytest.raises(NotImplementedError):
        SMGrid.build(EuclideanQuadratic(np.eye(3)), ChartDomain.torus(3), 8)


def test_degenerate_density_detected():
    q = SMChartPoint.on(FLAT, np.array([[0.0], [0.0]]), np.array([0.0]))
    hf = hilbert_form(FLAT, q)
    hf.chart_omega[:] = 0.0
    with pytest.raises(DegenerateDensity):
        volume_density(FLAT, q, hf)


def test_randers_density_sign_constant(randers16):
    assert randers16.sign in (-1, 1)
    assert np.all(np.sign(randers16.density) == randers16.sign)
    assert randers16.omega_xi_error < 1e-9 and randers16.domega_xi_error < 1e-8


def test_minkowski_randers_volume_converges():
    m = Randers.from_expressions([[1, 0], [0, 1]], ["0.4", "0"])
    grid = SMGrid.build(m, TORUS, 24)
    vol = integrate_SM(m, grid, lambda x, y: 1.0 + 0 * x[0])
    ref = SMGrid.build(m, TORUS, 48)
    assert vol == pytest.approx(integrate_SM(m, ref, lambda x, y: 1.0 + 0 * x[0]), rel=1e-10)

"""Hilbert form, Reeb field and contact volume on the unit sphere bundle SM.

SM is charted by ``(x, theta)``: ``theta`` parametrises a Euclidean unit
direction ``u(theta)`` and the chart point is ``y = u / F(x, u)``.  The
1-form ``omega = F_{y^i} dx^i`` is pulled back by composing jets, and
``d omega`` comes from differentiating the pulled-back components.

Pointwise evaluations work in any dimension.  Grid quadrature is provided for
surfaces (``n = 2``, so SM is 3-dimensional) with periodic trapezoidal weights
on every axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Sequence

import numpy as np

from . import jets
from .errors import DegenerateDensity
from .metric import ChartDomain, FiberPoint, MetricSpec
from .spray import Expansion, VectorFieldDef, _matrix, _spray_with_norm, _values

DEFAULT_CHUNK = 4096


def volume_constant(n: int) -> float:
    """``c_n = (-1)^(n(n+1)/2 - 1) / (n-1)!``."""
    return (-1.0) ** ((n * (n + 1)) // 2 - 1) / math.factorial(n - 1)


def direction(theta: Sequence):
    """Hyperspherical unit vector; ``(cos t, sin t)`` for one angle."""
    out = []
    s = 1.0
    for t in theta:
        out.append(s * jets.cos(t))
        s = s * jets.sin(t)
    out.append(s)
    return out


@dataclass(frozen=True)
class SMChartPoint:
    """Chart point ``(x, theta)`` of SM together with its unit vector ``y``."""

    x: np.ndarray
    theta: np.ndarray
    y: np.ndarray

    @classmethod
    def on(cls, metric: MetricSpec, x, theta) -> "SMChartPoint":
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == x.ndim - 1:
            theta = theta[None]
        elif theta.ndim < x.ndim:
            theta = theta.reshape((-1,) + (1,) * (x.ndim - 1))
        u = np.array(np.broadcast_arrays(*direction(list(theta)), x[0]))[:-1]
        x = np.broadcast_to(x, (x.shape[0],) + u.shape[1:])
        F = np.asarray(metric.norm(list(x), list(u)), dtype=float)
        return cls(x, np.broadcast_to(theta, (theta.shape[0],) + u.shape[1:]), u / F)

    @property
    def fiber_point(self) -> FiberPoint:
        return FiberPoint(self.x, self.y)


@dataclass
class HilbertFormData:
    """Hilbert form at chart points of SM.

    ``omega`` holds ``F_{y^i}``; ``omega_alt`` the equivalent ``g_ij y^j / F``.
    Chart-frame arrays are indexed by chart coordinates ``(x^1..x^n, theta^1..)``.
    """

    omega: np.ndarray
    omega_alt: np.ndarray
    chart_omega: np.ndarray
    chart_domega: np.ndarray
    xi: np.ndarray
    y_jacobian: np.ndarray

    def omega_xi(self) -> np.ndarray:
        return np.einsum("a...,a...->...", self.chart_omega, self.xi)

    def domega_xi(self) -> np.ndarray:
        """``d omega(xi, e_b)`` for every chart basis vector ``e_b``."""
        return np.einsum("ab...,a...->b...", self.chart_domega, self.xi)

    def contact_residuals(self) -> tuple[float, float]:
        return (
            float(np.max(np.abs(self.omega_xi() - 1.0))),
            float(np.max(np.abs(self.domega_xi()))),
        )


def _pullback(metric: MetricSpec, q: SMChartPoint):
    n = q.x.shape[0]
    m = 2 * n - 1
    W = jets.IndexSet.total_degree(m, 1)
    w = jets.seed(W, list(q.x) + list(q.theta))
    wx, wth = w[:n], w[n:]
    u = [c if isinstance(c, jets.Jet) else jets.Jet.constant(W, np.broadcast_to(c, q.x.shape[1:])) for c in direction(wth)]
    u0 = np.array([np.broadcast_to(c.value, q.x.shape[1:]) for c in u])

    P = jets.IndexSet.total_degree(2 * n, 2)
    z = jets.seed(P, list(q.x) + list(u0))
    F_u = metric.norm(z[:n], z[n:]).compose(wx + u)
    yw = [c / F_u for c in u]

    z = jets.seed(P, list(q.x) + list(q.y))
    F_y = metric.norm(z[:n], z[n:])
    omega_jets = [F_y.diff(n + i).compose(wx + yw) for i in range(n)]
    return omega_jets, yw, W


def hilbert_form(metric: MetricSpec, q: SMChartPoint) -> HilbertFormData:
    n = q.x.shape[0]
    m = 2 * n - 1
    batch = q.x.shape[1:]
    omega_jets, yw, W = _pullback(metric, q)
    units = [tuple(1 if k == a else 0 for k in range(m)) for a in range(m)]

    chart_omega = np.zeros((m,) + batch)
    for i in range(n):
        chart_omega[i] = omega_jets[i].value
    grad = np.zeros((m, m) + batch)  # grad[a, b] = d_a omega_b
    for b in range(n):
        for a in range(m):
            grad[a, b] = omega_jets[b].coefficient(units[a])
    chart_domega = grad - np.swapaxes(grad, 0, 1)

    J = np.array([[np.broadcast_to(yw[i].coefficient(units[a]), batch) for a in range(m)] for i in range(n)])

    p = FiberPoint(q.x, q.y)
    G, F = _spray_with_norm(metric, p)
    xi_x = q.y / F
    rhs = -2.0 * G / F - np.einsum("ia...,a...->i...", J[:, :n], xi_x)
    Jt = np.moveaxis(J[:, n:], (0, 1), (-2, -1))
    r = np.moveaxis(rhs, 0, -1)[..., None]
    xi_th = np.linalg.solve(np.swapaxes(Jt, -1, -2) @ Jt, np.swapaxes(Jt, -1, -2) @ r)[..., 0]
    xi = np.concatenate([xi_x, np.moveaxis(xi_th, -1, 0)], axis=0)

    e = Expansion(metric, p, "spray")
    g = _matrix(e.g, batch)
    omega_alt = np.einsum("ij...,j...->i...", g, q.y) / F
    return HilbertFormData(chart_omega[:n].copy(), omega_alt, chart_omega, chart_domega, xi, J)


def _parity(perm: Sequence[int]) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def wedge_top(omega: np.ndarray, domega: np.ndarray) -> np.ndarray:
    """Coefficient of ``dz^1 ^ ... ^ dz^m`` in ``omega ^ (d omega)^k``, ``m = 2k + 1``.

    ``domega`` is the antisymmetric component array ``Omega_ab``.
    """
    m = omega.shape[0]
    k = (m - 1) // 2
    total = np.zeros(omega.shape[1:])
    for perm in permutations(range(m)):
        term = omega[perm[0]]
        for r in range(k):
            term = term * domega[perm[1 + 2 * r], perm[2 + 2 * r]]
        total = total + _parity(perm) * term
    return total / 2.0**k


def volume_density(metric: MetricSpec, q: SMChartPoint, hf: HilbertFormData | None = None) -> np.ndarray:
    """Coefficient of ``dx^1..dx^n dtheta^1..`` in ``c_n omega ^ (d omega)^(n-1)``."""
    n = q.x.shape[0]
    if hf is None:
        hf = hilbert_form(metric, q)
    rho = volume_constant(n) * wedge_top(hf.chart_omega, hf.chart_domega)
    if np.any(np.abs(rho) < 1e-12):
        raise DegenerateDensity("contact volume density vanishes")
    return rho


@dataclass
class SMGrid:
    """Tensor-product trapezoidal grid over ``(x^1, x^2, theta)`` for a 2-torus."""

    metric: MetricSpec
    domain: ChartDomain
    counts: tuple[int, ...]
    x: np.ndarray  # (n, M)
    theta: np.ndarray  # (n - 1, M)
    y: np.ndarray  # (n, M)
    density: np.ndarray  # (M,)
    sign: int
    weight: float
    omega_xi_error: float
    domega_xi_error: float
    chunk: int = field(default=DEFAULT_CHUNK)

    @classmethod
    def build(
        cls,
        metric: MetricSpec,
        domain: ChartDomain,
        resolution: int | Sequence[int],
        chunk: int = DEFAULT_CHUNK,
        theta0: float = 0.0,
    ) -> "SMGrid":
        n = domain.dim
        if n != 2:
            raise NotImplementedError("sphere-bundle quadrature is implemented for 2-dimensional tori")
        if not domain.is_torus:
            raise ValueError("sphere-bundle quadrature needs a compact (torus) domain")
        counts = (resolution,) * (2 * n - 1) if isinstance(resolution, int) else tuple(resolution)
        if len(counts) != 2 * n - 1 or min(counts) < 1:
            raise ValueError("one positive node count per chart axis")
        axes = [domain.periods[a] * np.arange(counts[a]) / counts[a] for a in range(n)]
        axes.append(theta0 + 2 * np.pi * np.arange(counts[n]) / counts[n])
        mesh = np.array(np.meshgrid(*axes, indexing="ij")).reshape(2 * n - 1, -1)
        x, theta = mesh[:n], mesh[n:]
        weight = float(np.prod([domain.periods[a] / counts[a] for a in range(n)]) * 2 * np.pi / counts[n])

        ys, rhos, err_a, err_b = [], [], 0.0, 0.0
        for s in range(0, x.shape[1], chunk):
            q = SMChartPoint.on(metric, x[:, s : s + chunk], theta[:, s : s + chunk])
            hf = hilbert_form(metric, q)
            a, b = hf.contact_residuals()
            err_a, err_b = max(err_a, a), max(err_b, b)
            ys.append(q.y)
            rhos.append(volume_density(metric, q, hf))
        rho = np.concatenate(rhos)
        signs = np.unique(np.sign(rho))
        if len(signs) != 1:
            raise DegenerateDensity("volume density changes sign across the grid")
        return cls(
            metric, domain, counts, x, theta, np.concatenate(ys, axis=1), rho,
            int(signs[0]), weight, err_a, err_b, chunk,
        )

    @property
    def size(self) -> int:
        return self.x.shape[1]

    def map(self, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
        """Evaluate ``func(x, y)`` chunk by chunk over all nodes."""
        out = [np.broadcast_to(func(self.x[:, s : s + self.chunk], self.y[:, s : s + self.chunk]), (min(self.chunk, self.size - s),))
               for s in range(0, self.size, self.chunk)]
        return np.concatenate(out)

    def integrate_values(self, values: np.ndarray) -> float:
        # np.sum on a contiguous 1-d array uses a fixed pairwise order
        return float(np.sum(np.ascontiguousarray(values * np.abs(self.density))) * self.weight)


ScalarOnTM = Callable[[Sequence, Sequence], object]


def integrate_SM(metric: MetricSpec, grid: SMGrid, f: ScalarOnTM) -> float:
    """``int_SM f |d nu|`` for a function of ``(x, y)`` evaluated at unit vectors."""
    return grid.integrate_values(grid.map(lambda x, y: np.asarray(f(list(x), list(y)), dtype=float)))


def _fdot(metric: MetricSpec, f: ScalarOnTM):
    def func(x, y):
        e = Expansion(metric, FiberPoint(x, y), "spray")
        fj = f(e.xs, e.ys)
        if not isinstance(fj, jets.Jet):
            return np.zeros(x.shape[1:])
        return jets.value(e.spray_derivative(fj)) / jets.value(e.F)

    return func


def stokes_integral(metric: MetricSpec, grid: SMGrid, f: ScalarOnTM) -> float:
    """Signed ``int_SM xi(f) |d nu|``."""
    return grid.integrate_values(grid.map(_fdot(metric, f)))


def verify_stokes_lemma(metric: MetricSpec, grid: SMGrid, f: ScalarOnTM) -> float:
    """``|int_SM xi(f) d nu|``; zero on a closed manifold up to quadrature error."""
    return abs(stokes_integral(metric, grid, f))


def _ricci_integrand(metric: MetricSpec, V: VectorFieldDef):
    def func(x, y):
        e = Expansion(metric, FiberPoint(x, y), "curvature")
        b = e.batch_shape
        Vv = _values(e.field(V), b)
        g = _matrix(e.g, b)
        R = _matrix(e.R, b)
        RV = np.einsum("ik...,k...->i...", R, Vv)
        return np.einsum("ij...,i...,j...->...", g, RV, Vv) / jets.value(e.F) ** 2

    return func


def total_ricci(metric: MetricSpec, grid: SMGrid, V: VectorFieldDef) -> float:
    """``int_SM g_y(R_y V, V) / F^2 d nu``."""
    return grid.integrate_values(grid.map(_ricci_integrand(metric, V)))


def global_norm(metric: MetricSpec, grid: SMGrid, V: VectorFieldDef) -> float:
    """``int_SM g_y(V, V) d nu``."""

    def func(x, y):
        e = Expansion(metric, FiberPoint(x, y), "spray")
        Vv = V.values(x)
        g = _matrix(e.g, e.batch_shape)
        return np.einsum("ij...,i...,j...->...", g, Vv, Vv)

    return grid.integrate_values(grid.map(func))


def dot_energy(metric: MetricSpec, grid: SMGrid, V: VectorFieldDef) -> float:
    """``int_SM g_y(dot V, dot V) d nu`` with ``dot V = V_{|0} / F``."""

    def func(x, y):
        e = Expansion(metric, FiberPoint(x, y), "connection")
        b = e.batch_shape
        W = _values(e.base_field_derivative(e.field(V)), b)
        g = _matrix(e.g, b)
        return np.einsum("ij...,i...,j...->...", g, W, W) / jets.value(e.F) ** 2

    return grid.integrate_values(grid.map(func))


@dataclass
class IdentityCheck:
    """Both sides of the pointwise identity that forces affine fields to be parallel on compact SM.

    With ``f = g(V, V_{|0}) / F``: ``fdot`` is obtained by differentiating the
    jet of ``f`` along the spray; ``product_rule`` is
    ``(g(V_{|0}, V_{|0}) + g(V, V_{|0|0})) / F^2``; ``curvature_form`` is
    ``g(dot V, dot V) - g(R_y V, V) / F^2``; ``jacobi_term`` is
    ``g(V, V_{|0|0} + R_y V) / F^2`` so that
    ``product_rule = curvature_form + jacobi_term``.
    """

    fdot: np.ndarray
    product_rule: np.ndarray
    curvature_form: np.ndarray
    jacobi_term: np.ndarray
    scale: np.ndarray

    @property
    def product_rule_defect(self) -> np.ndarray:
        return np.abs(self.fdot - self.product_rule)

    @property
    def curvature_form_defect(self) -> np.ndarray:
        """Zero when V is affine; otherwise differs by exactly the Jacobi term."""
        return np.abs(self.fdot - self.curvature_form)

    @property
    def corrected_defect(self) -> np.ndarray:
        return np.abs(self.fdot - self.curvature_form - self.jacobi_term)


def rigidity_identity_check(metric: MetricSpec, V: VectorFieldDef, p: FiberPoint) -> IdentityCheck:
    e = Expansion(metric, p, "curvature")
    n, b = e.n, e.batch_shape
    Vj = e.field(V)
    W = e.base_field_derivative(Vj)
    f = 0.0
    for i in range(n):
        for j in range(n):
            f = f + e.g[i][j] * Vj[i] * W[j]
    f = f / e.F
    F = np.broadcast_to(jets.value(e.F), b)
    fdot = np.broadcast_to(jets.value(e.spray_derivative(f)), b) / F

    g = _matrix(e.g, b)
    R = _matrix(e.R, b)
    Vv = _values(Vj, b)
    Wv = _values(W, b)
    W2 = _values(e.section_derivative(W), b)
    gWW = np.einsum("ij...,i...,j...->...", g, Wv, Wv)
    gVW2 = np.einsum("ij...,i...,j...->...", g, Vv, W2)
    RV = np.einsum("ik...,k...->i...", R, Vv)
    gRVV = np.einsum("ij...,i...,j...->...", g, RV, Vv)
    scale = np.maximum.reduce([np.ones(b), gWW / F**2, np.abs(gRVV) / F**2, np.einsum("ij...,i...,j...->...", g, Vv, Vv)])
    return IdentityCheck(
        fdot=fdot,
        product_rule=(gWW + gVW2) / F**2,
        curvature_form=(gWW - gRVV) / F**2,
        jacobi_term=(gVW2 + gRVV) / F**2,
        scale=scale,
    )

"""Affine vector fields: Jacobi-type residual, Lie bracket with the spray,
linear parallelism and reversibility.

The Jacobi residual ``V_{|0|0} + R_y(V)`` and the vertical part of
``[G, V^]`` are computed along two separate paths (dynamical derivatives
and curvature versus a coordinate Lie bracket on TM_0), so comparing them is
a genuine consistency check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import HorizontalLeak
from .metric import ChartDomain, FiberPoint, MetricSpec
from .spray import Expansion, VectorFieldDef, _matrix, _values, lie_bracket, split_frame


@dataclass
class CompleteLift:
    """``V^`` in the (delta/delta x, d/dy) frame and in coordinates."""

    horizontal: np.ndarray  # V^i
    vertical: np.ndarray  # V^i_{|0}
    coordinate_vertical: np.ndarray  # y^j dV^i/dx^j
    N: np.ndarray

    def basis_change_defect(self) -> float:
        """``|vertical - (coordinate_vertical + N V)|``: the two displayed forms agree."""
        recon = self.coordinate_vertical + np.einsum("ik...,k...->i...", self.N, self.horizontal)
        return float(np.max(np.abs(self.vertical - recon)))


def complete_lift(metric: MetricSpec, V: VectorFieldDef, p: FiberPoint) -> CompleteLift:
    e = Expansion(metric, p, "connection")
    n, b = e.n, e.batch_shape
    Vj = e.field(V)
    coord = []
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc = acc + e.ys[j] * Vj[i].diff(j)
        coord.append(acc)
    return CompleteLift(
        horizontal=_values(Vj, b),
        vertical=_values(e.base_field_derivative(Vj), b),
        coordinate_vertical=_values(coord, b),
        N=_matrix(e.N, b),
    )


def _jacobi(e: Expansion, Vj: list) -> np.ndarray:
    n, b = e.n, e.batch_shape
    W2 = e.section_derivative(e.base_field_derivative(Vj))
    out = []
    for i in range(n):
        acc = W2[i]
        for k in range(n):
            acc = acc + Vj[k] * e.R[i][k]
        out.append(acc)
    return _values(out, b)


def jacobi_residual(metric: MetricSpec, V: VectorFieldDef, p: FiberPoint) -> np.ndarray:
    """``V^i_{|0|0} + V^k R^i_k``; vanishes for affine fields."""
    e = Expansion(metric, p, "curvature")
    return _jacobi(e, e.field(V))


def _bracket(e: Expansion, Vj: list) -> tuple[np.ndarray, np.ndarray]:
    n, b = e.n, e.batch_shape
    spray = list(e.ys) + [-2.0 * Gi for Gi in e.G]
    lift = list(Vj)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc = acc + e.ys[j] * Vj[i].diff(j)
        lift.append(acc)
    Z = _values(lie_bracket(spray, lift), b)
    return split_frame(Z, _matrix(e.N, b), n)


def bracket_components(metric: MetricSpec, V: VectorFieldDef, p: FiberPoint) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical frame components of ``[G, V^]``."""
    e = Expansion(metric, p, "curvature")
    return _bracket(e, e.field(V))


def _field_scale(e: Expansion, Vj: list) -> np.ndarray:
    V = _values(Vj, e.batch_shape)
    g = _matrix(e.g, e.batch_shape)
    return np.sqrt(np.einsum("ij...,i...,j...->...", g, V, V))


def bracket_residual(metric: MetricSpec, V: VectorFieldDef, p: FiberPoint, leak_tol: float = 1e-8) -> np.ndarray:
    """Vertical components of ``[G, V^]``.

    Raises :class:`HorizontalLeak` if the horizontal part exceeds
    ``leak_tol * F * max(1, |V|_g)`` anywhere.
    """
    e = Expansion(metric, p, "curvature")
    Vj = e.field(V)
    horizontal, vertical = _bracket(e, Vj)
    scale = np.broadcast_to(jets.value(e.F), e.batch_shape) * np.maximum(1.0, _field_scale(e, Vj))
    leak = np.max(np.abs(horizontal) / scale, axis=0) if horizontal.size else np.zeros(())
    if np.any(leak > leak_tol):
        raise HorizontalLeak(f"horizontal part of [G, V^] is {np.max(leak):.3g} (scaled)")
    return vertical


@dataclass
class AffineDiagnostics:
    jacobi_residual: np.ndarray
    bracket_residual: np.ndarray
    parallel_residual: np.ndarray  # V_{|0}
    horizontal_leak: float
    equivalence_defect: float  # max |jacobi - bracket| / (F^2 max(1, |V|_g))
    jacobi_norm: float  # max |jacobi|_g / (F^2 max(1, |V|_g))
    parallel_norm: float  # max |V_{|0}|_g / (F max(1, |V|_g))

    def summary(self) -> dict:
        return {
            "equivalence_defect": self.equivalence_defect,
            "horizontal_leak": self.horizontal_leak,
            "jacobi_norm": self.jacobi_norm,
            "parallel_norm": self.parallel_norm,
        }


def _gnorm(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(np.einsum("ij...,i...,j...->...", g, w, w), 0.0))


def affine_diagnostics(metric: MetricSpec, V: VectorFieldDef, p: FiberPoint) -> AffineDiagnostics:
    """All three residuals at a batch of fiber points, with scale-free norms."""
    e = Expansion(metric, p, "curvature")
    b = e.batch_shape
    Vj = e.field(V)
    jac = _jacobi(e, Vj)
    horizontal, vertical = _bracket(e, Vj)
    par = _values(e.base_field_derivative(Vj), b)
    F = np.broadcast_to(jets.value(e.F), b)
    g = _matrix(e.g, b)
    vscale = np.maximum(1.0, _gnorm(g, _values(Vj, b)))
    return AffineDiagnostics(
        jacobi_residual=jac,
        bracket_residual=vertical,
        parallel_residual=par,
        horizontal_leak=float(np.max(np.abs(horizontal) / (F * vscale))),
        equivalence_defect=float(np.max(np.abs(jac - vertical) / (F**2 * vscale))),
        jacobi_norm=float(np.max(_gnorm(g, jac) / (F**2 * vscale))),
        parallel_norm=float(np.max(_gnorm(g, par) / (F * vscale))),
    )


def parallel_residual(metric: MetricSpec, V: VectorFieldDef, points: FiberPoint) -> float:
    """Worst ``|V_{|0}|_g / (F |V|_g)`` over the sample set (0 iff linearly parallel there)."""
    e = Expansion(metric, points, "connection")
    b = e.batch_shape
    Vj = e.field(V)
    par = _values(e.base_field_derivative(Vj), b)
    g = _matrix(e.g, b)
    F = np.broadcast_to(jets.value(e.F), b)
    vnorm = _gnorm(g, _values(Vj, b))
    # where V vanishes the ratio is undefined; fall back to the unnormalised size
    denom = F * np.where(vnorm > 1e-12, vnorm, 1.0)
    return float(np.max(_gnorm(g, par) / denom))


def reversibility(
    metric: MetricSpec,
    domain: ChartDomain,
    resolution: int = 8,
    angular_resolution: int = 1024,
    seed: int = 0,
) -> float:
    """``sup F(x, -y) / F(x, y)`` over a grid of base points and directions."""
    if resolution < 8:
        raise ValueError("resolution must be at least 8 per axis")
    n = domain.dim
    axes = []
    for a in range(n):
        lo, hi = domain.box(a)
        if domain.period(a) is not None:
            axes.append(lo + (hi - lo) * np.arange(resolution) / resolution)
        else:
            axes.append(np.linspace(lo, hi, resolution))
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(n, -1)
    if n == 2:
        th = 2 * np.pi * np.arange(angular_resolution) / angular_resolution
        dirs = np.stack([np.cos(th), np.sin(th)])
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((n, angular_resolution))
        dirs = np.concatenate([dirs, np.eye(n), -np.eye(n)], axis=1)
    m = dirs.shape[1]
    x = np.repeat(grid, m, axis=1)
    y = np.tile(dirs, (1, grid.shape[1]))
    F_plus = np.asarray(metric.norm(list(x), list(y)), dtype=float)
    F_minus = np.asarray(metric.norm(list(x), list(-y)), dtype=float)
    return float(np.max(F_minus / F_plus))

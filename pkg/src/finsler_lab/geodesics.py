"""Geodesic integration and one-parameter flows of base vector fields.

All integrators are fixed-step classical RK4.  Flows are integrated on jets,
which is the same as integrating the variational (tangent) equations along
with the flow, so the lifted flow and its second derivatives come for free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import LeftChart
from .metric import ChartDomain, FiberPoint, MetricSpec, eval_F
from .spray import VectorFieldDef, _spray_with_norm, spray_coefficients


@dataclass
class GeodesicTrajectory:
    """Samples ``(t_k, x_k, v_k)``; arrays have shape ``(steps + 1, n, *batch)``."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    step: float
    F: np.ndarray  # norm at each sample, shape (steps + 1, *batch)

    @property
    def endpoint(self) -> FiberPoint:
        return FiberPoint(self.x[-1], self.v[-1])

    def norm_drift(self) -> float:
        """Largest relative deviation of F from its initial value."""
        return float(np.max(np.abs(self.F - self.F[0]) / self.F[0]))


def _check_domain(domain: ChartDomain | None, x: np.ndarray) -> np.ndarray:
    if domain is None:
        if not np.all(np.isfinite(x)):
            raise LeftChart("trajectory blew up")
        return x
    if np.any(domain.outside(x)):
        raise LeftChart("trajectory left the chart")
    return domain.wrap(x)


def integrate_geodesic(
    metric: MetricSpec,
    p0: FiberPoint,
    t_end: float,
    steps: int,
    domain: ChartDomain | None = None,
) -> GeodesicTrajectory:
    """Integrate ``x'' + 2 G(x, x') = 0`` from ``p0`` with ``steps`` RK4 steps."""
    if steps < 1:
        raise ValueError("steps must be positive")
    h = t_end / steps
    x = np.array(p0.x, dtype=float)
    v = np.array(p0.y, dtype=float)

    def acc(x, v):
        return -2.0 * spray_coefficients(metric, FiberPoint(x, v))

    xs = [x]
    vs = [v]
    for _ in range(steps):
        k1x, k1v = v, acc(x, v)
        k2x, k2v = v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = v + h * k3v, acc(x + h * k3x, v + h * k3v)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        x = _check_domain(domain, x)
        xs.append(x)
        vs.append(v)
    X = np.array(xs)
    Vv = np.array(vs)
    F = eval_F(metric, FiberPoint(np.moveaxis(X, 0, 1), np.moveaxis(Vv, 0, 1)))
    return GeodesicTrajectory(np.linspace(0.0, t_end, steps + 1), X, Vv, h, F)


@dataclass(frozen=True)
class FlowMap:
    """The time-``t`` map of ``x' = V(x)``; ``step`` is the maximal RK4 step."""

    generator: VectorFieldDef
    t: float
    step: float = 1e-3
    domain: ChartDomain | None = None

    def steps(self) -> int:
        return max(1, int(np.ceil(abs(self.t) / self.step - 1e-9)))

    def with_time(self, t: float) -> "FlowMap":
        return FlowMap(self.generator, t, self.step, self.domain)


def _rk4_flow(V: VectorFieldDef, x: list, t: float, steps: int) -> list:
    """RK4 on a list of components (numbers, arrays or jets)."""
    if t == 0:
        return list(x)
    h = t / steps
    n = len(x)
    for _ in range(steps):
        k1 = V(x)
        k2 = V([x[i] + 0.5 * h * k1[i] for i in range(n)])
        k3 = V([x[i] + 0.5 * h * k2[i] for i in range(n)])
        k4 = V([x[i] + h * k3[i] for i in range(n)])
        x = [x[i] + (h / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(n)]
    return x


def flow_point(flow: FlowMap, x) -> np.ndarray:
    """``phi_t(x)`` for points of shape ``(n, *batch)``."""
    x = np.asarray(x, dtype=float)
    out = _rk4_flow(flow.generator, list(x), flow.t, flow.steps())
    out = np.array([np.broadcast_to(np.asarray(c, float), x.shape[1:]) for c in out])
    return _check_domain(flow.domain, out)


def flow_jets(flow: FlowMap, x, order: int = 1) -> list:
    """Jets of ``phi_t`` in the initial point, to the given order."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    iset = jets.IndexSet.total_degree(n, order)
    seeds = jets.seed(iset, list(x))
    out = _rk4_flow(flow.generator, seeds, flow.t, flow.steps())
    return [c if isinstance(c, jets.Jet) else jets.Jet.constant(iset, np.broadcast_to(c, x.shape[1:])) for c in out]


def _differentials(phi: list, n: int, batch: tuple, order: int):
    D = np.empty((n, n) + batch)
    for i in range(n):
        for j in range(n):
            D[i, j] = phi[i].partial(tuple(1 if k == j else 0 for k in range(n)))
    if order < 2:
        return D, None
    D2 = np.empty((n, n, n) + batch)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                alpha = [0] * n
                alpha[j] += 1
                alpha[k] += 1
                D2[i, j, k] = phi[i].partial(tuple(alpha))
    return D, D2


def lifted_flow(flow: FlowMap, p: FiberPoint) -> FiberPoint:
    """``(phi_t(x), D phi_t(x) y)``."""
    phi = flow_jets(flow, p.x, order=1)
    x_new = np.array([np.broadcast_to(c.value, p.batch_shape) for c in phi])
    D, _ = _differentials(phi, p.dim, p.batch_shape, 1)
    y_new = np.einsum("ij...,j...->i...", D, p.y)
    return FiberPoint(_check_domain(flow.domain, x_new), y_new)


def affine_transformation_defect(
    metric: MetricSpec,
    flow: FlowMap,
    p: FiberPoint,
    t_end: float = 1.0,
    steps: int = 100,
    domain: ChartDomain | None = None,
) -> float:
    """Largest residual of the geodesic equation along the image of a geodesic.

    The geodesic from ``p`` is integrated, every sample is pushed through
    ``phi_t``, and the image curve's acceleration is assembled from the second
    order flow jets: ``c'' = D^2 phi[x', x'] + D phi x''``.
    """
    domain = domain if domain is not None else flow.domain
    traj = integrate_geodesic(metric, p, t_end, steps, domain)
    n = p.dim
    # samples along the trajectory become one batch axis in front of p's batch
    x = np.moveaxis(traj.x, 0, 1)
    v = np.moveaxis(traj.v, 0, 1)
    a = -2.0 * spray_coefficients(metric, FiberPoint(x, v))
    phi = flow_jets(flow, x, order=2)
    batch = x.shape[1:]
    c = np.array([np.broadcast_to(e.value, batch) for e in phi])
    D, D2 = _differentials(phi, n, batch, 2)
    c_dot = np.einsum("ij...,j...->i...", D, v)
    c_ddot = np.einsum("ijk...,j...,k...->i...", D2, v, v) + np.einsum("ij...,j...->i...", D, a)
    if domain is not None:
        c = domain.wrap(c)
    G_img, _ = _spray_with_norm(metric, FiberPoint(c, c_dot))
    residual = c_ddot + 2.0 * G_img
    return float(np.max(np.linalg.norm(residual, axis=0)))

"""Spray, nonlinear connection, Berwald coefficients, Riemann curvature and
dynamical derivatives.

All quantities are obtained by differentiating jets of ``F^2``; nothing is
expanded symbolically, so one code path serves every metric family.  Array
results keep tensor axes first and batch axes last, e.g. ``R.shape == (n, n, *batch)``
with ``R[j, i] = R^j_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import expressions, jets
from .errors import NonPositiveNorm
from .metric import (
    ChartDomain,
    FiberPoint,
    MetricSpec,
    batch_last_inv,
    check_positive_definite,
    seed_jets,
)

# (x order, y order, total order) of the F^2 expansion needed at each level
LEVELS = {
    "spray": (1, 2, 3),  # G value, first derivatives of scalar test functions
    "connection": (1, 3, 4),  # N value, first derivatives of g and of V
    "curvature": (2, 4, 5),  # Gamma, R, second dynamical derivatives
}


@dataclass(frozen=True)
class VectorFieldDef:
    """A base vector field ``V = V^i(x) d/dx^i`` given by component callables."""

    components: tuple[Callable, ...]
    source: tuple[str, ...] = field(default=(), compare=False)

    @classmethod
    def from_expressions(cls, entries: Sequence, dim: int | None = None) -> "VectorFieldDef":
        dim = len(entries) if dim is None else dim
        if len(entries) != dim:
            raise ValueError(f"vector field needs {dim} components")
        exprs = tuple(expressions.parse(e, dim, allow_y=False) for e in entries)
        return cls(exprs, tuple(e.source for e in exprs))

    @classmethod
    def constant(cls, vector: Sequence[float]) -> "VectorFieldDef":
        return cls.from_expressions([float(v) for v in vector])

    @property
    def dim(self) -> int:
        return len(self.components)

    def __call__(self, x: Sequence) -> list:
        return [c(x) for c in self.components]

    def values(self, x: np.ndarray) -> np.ndarray:
        """Numeric components, shape ``(n, *batch)``."""
        x = np.asarray(x, dtype=float)
        return np.array([np.broadcast_to(np.asarray(v, float), x.shape[1:]) for v in self(list(x))])

    def scaled_sum(self, a: float, other: "VectorFieldDef", b: float) -> "VectorFieldDef":
        comps = tuple(
            (lambda x, f=f, g=g: a * f(x) + b * g(x)) for f, g in zip(self.components, other.components)
        )
        return VectorFieldDef(comps)


def _values(seq, batch_shape) -> np.ndarray:
    return np.array([np.broadcast_to(jets.value(e), batch_shape) for e in seq])


def _matrix(m, batch_shape) -> np.ndarray:
    return np.array([[np.broadcast_to(jets.value(e), batch_shape) for e in row] for row in m])


class Expansion:
    """Jets of every pointwise tensor at a (batched) fiber point.

    Quantities are computed lazily; the index set of each jet shrinks with
    every differentiation so deeper quantities stay cheap.
    """

    def __init__(self, metric: MetricSpec, p: FiberPoint, level: str = "curvature"):
        self.metric = metric
        self.p = p
        self.n = p.dim
        self.level = level
        self.xs, self.ys = seed_jets(p, *LEVELS[level])
        self.F = metric.norm(self.xs, self.ys)
        if np.any(~(jets.value(self.F) > 0)):
            raise NonPositiveNorm("F <= 0 at some point")
        self.F2 = self.F * self.F

    @property
    def batch_shape(self):
        return self.p.batch_shape

    @cached_property
    def g(self):
        n = self.n
        g = [[None] * n for _ in range(n)]
        for i in range(n):
            d = self.F2.diff(n + i)
            for j in range(i, n):
                g[i][j] = g[j][i] = 0.5 * d.diff(n + j)
        check_positive_definite(_matrix(g, self.batch_shape))
        return g

    @cached_property
    def g_inv(self):
        return jets.invert_matrix(self.g)

    @cached_property
    def G(self):
        """Spray coefficients from the Christoffel-type formula in g and its x-derivatives."""
        n, g, ys = self.n, self.g, self.ys
        dg = [[[g[j][l].diff(k) for l in range(n)] for j in range(n)] for k in range(n)]
        s = []
        for l in range(n):
            acc = 0.0
            for j in range(n):
                for k in range(n):
                    acc = acc + (dg[k][j][l] + dg[j][l][k] - dg[l][j][k]) * (ys[j] * ys[k])
            s.append(acc)
        out = []
        for i in range(n):
            acc = 0.0
            for l in range(n):
                acc = acc + self.g_inv[i][l] * s[l]
            out.append(0.25 * acc)
        return out

    @cached_property
    def N(self):
        n = self.n
        return [[self.G[i].diff(n + j) for j in range(n)] for i in range(n)]

    @cached_property
    def Gamma(self):
        n = self.n
        return [[[self.N[i][j].diff(n + k) for k in range(n)] for j in range(n)] for i in range(n)]

    def spray_derivative(self, f):
        """``G(f) = y^k df/dx^k - 2 G^k df/dy^k`` for a jet ``f`` on TM_0."""
        n = self.n
        acc = 0.0
        for k in range(n):
            acc = acc + self.ys[k] * f.diff(k) - 2.0 * self.G[k] * f.diff(n + k)
        return acc

    @cached_property
    def R(self):
        """``R^j_i = 2 [G^j]_{x^i} - G(N^j_i) - N^j_k N^k_i``, stored as ``R[j][i]``."""
        n, G, N = self.n, self.G, self.N
        out = [[None] * n for _ in range(n)]
        for j in range(n):
            for i in range(n):
                acc = 2.0 * G[j].diff(i) - self.spray_derivative(N[j][i])
                for k in range(n):
                    acc = acc - N[j][k] * N[k][i]
                out[j][i] = acc
        return out

    # vector fields ----------------------------------------------------
    def field(self, V: VectorFieldDef) -> list:
        comps = V(self.xs)
        return [c if isinstance(c, jets.Jet) else jets.Jet.constant(self.xs[0].iset, np.broadcast_to(c, self.batch_shape)) for c in comps]

    def section_derivative(self, W: list) -> list:
        """``W^i_{|0} = G(W^i) + W^k N^i_k`` for a section W of pi^*TM."""
        n = self.n
        out = []
        for i in range(n):
            acc = self.spray_derivative(W[i])
            for k in range(n):
                acc = acc + W[k] * self.N[i][k]
            out.append(acc)
        return out

    def base_field_derivative(self, Vj: list) -> list:
        """``V^i_{|0} = y^j dV^i/dx^j + V^k N^i_k`` for a field depending on x only."""
        n = self.n
        out = []
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc = acc + self.ys[j] * Vj[i].diff(j)
            for k in range(n):
                acc = acc + Vj[k] * self.N[i][k]
            out.append(acc)
        return out


def lie_bracket(X: Sequence, Y: Sequence) -> list:
    """Coordinate Lie bracket ``[X, Y]^a = X^b d_b Y^a - Y^b d_b X^a`` of jet vector fields."""
    m = len(X)
    out = []
    for a in range(m):
        acc = 0.0
        for b in range(m):
            acc = acc + X[b] * Y[a].diff(b) - Y[b] * X[a].diff(b)
        out.append(acc)
    return out


def split_frame(Z: Sequence, N: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Components of ``A^i d/dx^i + B^i d/dy^i`` in the (delta/delta x, d/dy) frame."""
    A = np.asarray(Z[:n])
    B = np.asarray(Z[n:])
    return A, B + np.einsum("ij...,j...->i...", N, A)


# ---------------------------------------------------------------------------
# public operations


@dataclass
class CurvatureBundle:
    """All pointwise tensors at a fiber point (tensor axes first, batch last)."""

    F: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    G: np.ndarray
    N: np.ndarray
    Gamma: np.ndarray
    R: np.ndarray


def curvature_bundle(metric: MetricSpec, p: FiberPoint) -> CurvatureBundle:
    e = Expansion(metric, p, "curvature")
    b = e.batch_shape
    return CurvatureBundle(
        F=np.broadcast_to(jets.value(e.F), b),
        g=_matrix(e.g, b),
        g_inv=_matrix(e.g_inv, b),
        G=_values(e.G, b),
        N=_matrix(e.N, b),
        Gamma=np.array([_matrix(m, b) for m in e.Gamma]),
        R=_matrix(e.R, b),
    )


def spray_coefficients(metric: MetricSpec, p: FiberPoint) -> np.ndarray:
    """``G^i`` by contracting numeric derivative tensors of ``F^2``.

    This is the fast path used by integrators and grids; it shares no code
    with :class:`Expansion` beyond the seed jets.
    """
    return _spray_with_norm(metric, p)[0]


def _spray_with_norm(metric: MetricSpec, p: FiberPoint) -> tuple[np.ndarray, np.ndarray]:
    n = p.dim
    xs, ys = seed_jets(p, 1, 2, 3)
    F = metric.norm(xs, ys)
    Fv = np.broadcast_to(jets.value(F), p.batch_shape)
    if np.any(~(Fv > 0)):
        raise NonPositiveNorm("F <= 0 at some point")
    F2 = F * F
    shape = p.batch_shape
    g = np.empty((n, n) + shape)
    dg = np.empty((n, n, n) + shape)  # dg[k, j, l] = d_k g_jl
    for j in range(n):
        dj = F2.diff(n + j)
        for l in range(j, n):
            gjl = 0.5 * dj.diff(n + l)
            g[j, l] = g[l, j] = gjl.value
            for k in range(n):
                dg[k, j, l] = dg[k, l, j] = gjl.diff(k).value
    y = p.y
    s = 2.0 * np.einsum("kjl...,j...,k...->l...", dg, y, y) - np.einsum("ljk...,j...,k...->l...", dg, y, y)
    G = 0.25 * np.einsum("il...,l...->i...", batch_last_inv(g), s)
    return G, Fv


def riemann_curvature(metric: MetricSpec, p: FiberPoint) -> np.ndarray:
    """``R[j, i] = R^j_i``."""
    e = Expansion(metric, p, "curvature")
    return _matrix(e.R, e.batch_shape)


def berwald_coefficients(metric: MetricSpec, p: FiberPoint) -> np.ndarray:
    """``Gamma[i, j, k] = [G^i]_{y^j y^k}``."""
    e = Expansion(metric, p, "curvature")
    return np.array([_matrix(m, e.batch_shape) for m in e.Gamma])


def connection_coefficients(metric: MetricSpec, p: FiberPoint) -> np.ndarray:
    """``N[i, j] = [G^i]_{y^j}``."""
    e = Expansion(metric, p, "connection")
    return _matrix(e.N, e.batch_shape)


ScalarOnTM = Callable[[Sequence, Sequence], object]


def dynamical_derivative_scalar(metric: MetricSpec, f: ScalarOnTM, p: FiberPoint) -> np.ndarray:
    """``f_{|0} = G(f)``: the derivative of ``f`` along the geodesic through ``p``."""
    e = Expansion(metric, p, "spray")
    fj = f(e.xs, e.ys)
    if not isinstance(fj, jets.Jet):
        return np.zeros(e.batch_shape)
    return np.broadcast_to(jets.value(e.spray_derivative(fj)), e.batch_shape)


def dot_scalar(metric: MetricSpec, f: ScalarOnTM, p: FiberPoint) -> np.ndarray:
    """Dot convention: derivative along the Reeb direction ``xi = G/F``."""
    e = Expansion(metric, p, "spray")
    fj = f(e.xs, e.ys)
    F = np.broadcast_to(jets.value(e.F), e.batch_shape)
    if not isinstance(fj, jets.Jet):
        return np.zeros(e.batch_shape)
    return jets.value(e.spray_derivative(fj)) / F


def covariant_section_derivative(metric: MetricSpec, V: VectorFieldDef, p: FiberPoint) -> np.ndarray:
    """``V^i_{|0} = y^j dV^i/dx^j + V^k N^i_k``; zero everywhere iff V is linearly parallel."""
    e = Expansion(metric, p, "connection")
    return _values(e.base_field_derivative(e.field(V)), e.batch_shape)


def dot_field(metric: MetricSpec, V: VectorFieldDef, p: FiberPoint) -> np.ndarray:
    """``dot V = V_{|0} / F``."""
    e = Expansion(metric, p, "connection")
    W = _values(e.base_field_derivative(e.field(V)), e.batch_shape)
    return W / np.broadcast_to(jets.value(e.F), e.batch_shape)


def second_dynamical_derivative(metric: MetricSpec, V: VectorFieldDef, p: FiberPoint) -> np.ndarray:
    """``V^i_{|0|0}``: the section derivative applied to ``W = V_{|0}``."""
    e = Expansion(metric, p, "curvature")
    W = e.base_field_derivative(e.field(V))
    return _values(e.section_derivative(W), e.batch_shape)


def metric_compatibility_check(metric: MetricSpec, p: FiberPoint) -> np.ndarray:
    """``g_{ij|0} = G(g_ij) - g_kj N^k_i - g_ik N^k_j`` (identically zero)."""
    e = Expansion(metric, p, "connection")
    n, g, N = e.n, e.g, e.N
    out = np.empty((n, n) + e.batch_shape)
    for i in range(n):
        for j in range(n):
            acc = e.spray_derivative(g[i][j])
            for k in range(n):
                acc = acc - g[k][j] * N[k][i] - g[i][k] * N[k][j]
            out[i, j] = jets.value(acc)
    return out


@dataclass
class BracketIdentities:
    """Frame components of ``[G, d/dy^i]`` and ``[G, delta/delta x^i]``.

    Index convention: ``vertical_y[j, i]`` is the d/dy^j component of
    ``[G, d/dy^i]``; likewise for the other three arrays.
    """

    horizontal_y: np.ndarray
    vertical_y: np.ndarray
    horizontal_h: np.ndarray
    vertical_h: np.ndarray
    N: np.ndarray
    R: np.ndarray

    def residuals(self) -> dict[str, np.ndarray]:
        n = self.N.shape[0]
        eye = np.eye(n).reshape((n, n) + (1,) * (self.N.ndim - 2))
        return {
            "vertical_bracket_horizontal": self.horizontal_y + eye,
            "vertical_bracket_vertical": self.vertical_y - self.N,
            "horizontal_bracket_horizontal": self.horizontal_h - self.N,
            "horizontal_bracket_vertical": self.vertical_h - self.R,
        }


def bracket_identities(metric: MetricSpec, p: FiberPoint) -> BracketIdentities:
    """Brackets of the spray with the frame fields, by coordinate differentiation on TM_0."""
    e = Expansion(metric, p, "curvature")
    n, b = e.n, e.batch_shape
    iset = e.xs[0].iset
    zero = jets.Jet.constant(iset, np.zeros(b))
    one = jets.Jet.constant(iset, np.ones(b))
    spray = list(e.ys) + [-2.0 * Gi for Gi in e.G]
    N = _matrix(e.N, b)
    hy = np.empty((n, n) + b)
    vy = np.empty((n, n) + b)
    hh = np.empty((n, n) + b)
    vh = np.empty((n, n) + b)
    for i in range(n):
        vert = [zero] * n + [one if k == i else zero for k in range(n)]
        Z = _values(lie_bracket(spray, vert), b)
        hy[:, i], vy[:, i] = split_frame(Z, N, n)
        horiz = [one if k == i else zero for k in range(n)] + [-1.0 * e.N[k][i] for k in range(n)]
        Z = _values(lie_bracket(spray, horiz), b)
        hh[:, i], vh[:, i] = split_frame(Z, N, n)
    return BracketIdentities(hy, vy, hh, vh, N, _matrix(e.R, b))


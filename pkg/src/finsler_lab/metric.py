"""Finsler metric families on a single chart, and the fundamental tensor.

Every family evaluates ``F(x, y)`` through generic arithmetic, so the same
code runs on floats, batched numpy arrays and :class:`~finsler_lab.jets.Jet`
objects.  Points carry a leading component axis and optional trailing batch
axes: ``x.shape == (n, *batch)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expressions, jets
from .errors import NonPositiveNorm, NotPositiveDefinite, ZeroVector

DEFAULT_SAMPLE_BOX = (-1.0, 1.0)


@dataclass(frozen=True)
class ChartDomain:
    """Coordinate chart ``R^n`` with optional per-axis periods (a torus when all are set).

    ``bounds`` applies to non-periodic axes only: it is the box used for random
    sampling and, when given, the region outside of which curves raise
    :class:`~finsler_lab.errors.LeftChart`.
    """

    dim: int
    periods: tuple[float | None, ...] | None = None
    bounds: tuple[tuple[float, float] | None, ...] | None = None

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("chart dimension must be at least 2")
        if self.periods is not None:
            if len(self.periods) != self.dim:
                raise ValueError("one period entry per axis required")
            if any(p is not None and p <= 0 for p in self.periods):
                raise ValueError("periods must be positive")
        if self.bounds is not None and len(self.bounds) != self.dim:
            raise ValueError("one bounds entry per axis required")

    @classmethod
    def torus(cls, dim: int, period: float = 2 * np.pi) -> "ChartDomain":
        return cls(dim, (period,) * dim)

    def period(self, axis: int) -> float | None:
        return None if self.periods is None else self.periods[axis]

    @property
    def is_torus(self) -> bool:
        return self.periods is not None and all(p is not None for p in self.periods)

    def box(self, axis: int) -> tuple[float, float]:
        p = self.period(axis)
        if p is not None:
            return (0.0, p)
        if self.bounds is not None and self.bounds[axis] is not None:
            return tuple(self.bounds[axis])
        return DEFAULT_SAMPLE_BOX

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Reduce periodic coordinates into ``[0, period)``."""
        if self.periods is None:
            return x
        x = np.array(x, dtype=float, copy=True)
        for axis, p in enumerate(self.periods):
            if p is not None:
                x[axis] = np.mod(x[axis], p)
        return x

    def outside(self, x: np.ndarray) -> np.ndarray:
        """Boolean batch mask of points outside the declared bounds."""
        x = np.asarray(x, dtype=float)
        mask = ~np.all(np.isfinite(x), axis=0)
        if self.bounds is None:
            return mask
        for axis, b in enumerate(self.bounds):
            if b is None or self.period(axis) is not None:
                continue
            mask = mask | (x[axis] < b[0]) | (x[axis] > b[1])
        return mask

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lo = np.array([self.box(a)[0] for a in range(self.dim)])
        hi = np.array([self.box(a)[1] for a in range(self.dim)])
        return (lo[:, None] + (hi - lo)[:, None] * rng.random((self.dim, count)))


@dataclass(frozen=True)
class FiberPoint:
    """A point ``(x, y)`` of the punctured tangent bundle, possibly batched."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape[0] != y.shape[0]:
            raise ValueError("x and y must have the same number of components")
        shape = np.broadcast_shapes(x.shape, y.shape)
        x = np.broadcast_to(x, shape)
        y = np.broadcast_to(y, shape)
        if np.any(np.all(y == 0.0, axis=0)):
            raise ZeroVector("tangent vector y = 0 is not in TM_0")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.x.shape[1:]

    def scaled(self, lam: float) -> "FiberPoint":
        return FiberPoint(self.x, lam * self.y)


def random_fiber_points(domain: ChartDomain, count: int, seed: int) -> FiberPoint:
    """Seeded random points: x uniform on the domain box, y Gaussian."""
    rng = np.random.default_rng(seed)
    x = domain.sample(rng, count)
    y = rng.standard_normal((domain.dim, count))
    return FiberPoint(x, y)


MatrixField = Callable[[Sequence], Sequence[Sequence]]
CovectorField = Callable[[Sequence], Sequence]


class MetricSpec:
    """Base class of the metric families.  Subclasses implement :meth:`norm`."""

    family: str = "abstract"
    dim: int

    def norm(self, x: Sequence, y: Sequence):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"family": self.family, "dim": self.dim}


def _quadratic(m: Sequence[Sequence], y: Sequence):
    n = len(y)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total = total + m[i][j] * y[i] * y[j]
    return total


@dataclass(frozen=True)
class EuclideanQuadratic(MetricSpec):
    """``F = sqrt(A_ij y^i y^j)`` with a constant SPD matrix ``A``."""

    A: np.ndarray
    family = "euclidean"

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
            raise ValueError("A must be a symmetric square matrix")
        object.__setattr__(self, "A", A)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def norm(self, x, y):
        return jets.sqrt(_quadratic(self.A, y))

    def describe(self) -> dict:
        return {"family": self.family, "dim": self.dim, "A": self.A.tolist()}


def _matrix_from_expressions(rows, dim: int) -> tuple[MatrixField, list[list[str]]]:
    exprs = [[expressions.parse(e, dim, allow_y=False) for e in row] for row in rows]
    if len(exprs) != dim or any(len(r) != dim for r in exprs):
        raise ValueError(f"matrix must be {dim}x{dim}")

    def field_(x):
        return [[e(x) for e in row] for row in exprs]

    return field_, [[e.source for e in row] for row in exprs]


def _covector_from_expressions(entries, dim: int) -> tuple[CovectorField, list[str]]:
    exprs = [expressions.parse(e, dim, allow_y=False) for e in entries]
    if len(exprs) != dim:
        raise ValueError(f"covector must have {dim} entries")

    def field_(x):
        return [e(x) for e in exprs]

    return field_, [e.source for e in exprs]


@dataclass(frozen=True)
class Riemannian(MetricSpec):
    """``F = sqrt(a_ij(x) y^i y^j)``."""

    dim: int
    a: MatrixField
    source: dict = field(default_factory=dict, compare=False)
    family = "riemannian"

    @classmethod
    def from_expressions(cls, rows) -> "Riemannian":
        dim = len(rows)
        a, src = _matrix_from_expressions(rows, dim)
        return cls(dim, a, {"a": src})

    def norm(self, x, y):
        return jets.sqrt(_quadratic(self.a(x), y))

    def describe(self) -> dict:
        return {"family": self.family, "dim": self.dim, **self.source}


@dataclass(frozen=True)
class Randers(MetricSpec):
    """``F = sqrt(a_ij(x) y^i y^j) + b_i(x) y^i``."""

    dim: int
    a: MatrixField
    b: CovectorField
    source: dict = field(default_factory=dict, compare=False)
    family = "randers"

    @classmethod
    def from_expressions(cls, a_rows, b_entries) -> "Randers":
        dim = len(a_rows)
        a, a_src = _matrix_from_expressions(a_rows, dim)
        b, b_src = _covector_from_expressions(b_entries, dim)
        return cls(dim, a, b, {"a": a_src, "b": b_src})

    def norm(self, x, y):
        b = self.b(x)
        linear = 0.0
        for i in range(self.dim):
            linear = linear + b[i] * y[i]
        return jets.sqrt(_quadratic(self.a(x), y)) + linear

    def b_norm_squared(self, x: np.ndarray) -> np.ndarray:
        """``a^{ij} b_i b_j`` at (batched) base points; must stay below 1."""
        a = np.array(np.broadcast_arrays(*[np.asarray(e, float) + 0 * x[0] for row in self.a(x) for e in row]))
        a = a.reshape((self.dim, self.dim) + x.shape[1:])
        b = np.array(np.broadcast_arrays(*[np.asarray(e, float) + 0 * x[0] for e in self.b(x)]))
        a_inv = np.linalg.inv(np.moveaxis(a, (0, 1), (-2, -1)))
        b_last = np.moveaxis(b, 0, -1)
        return np.einsum("...i,...ij,...j->...", b_last, a_inv, b_last)

    def describe(self) -> dict:
        return {"family": self.family, "dim": self.dim, **self.source}


@dataclass(frozen=True)
class CustomAnalytic(MetricSpec):
    """User-supplied ``F(x, y)``, positively 1-homogeneous in ``y``."""

    dim: int
    F: Callable
    source: dict = field(default_factory=dict, compare=False)
    family = "custom"

    @classmethod
    def from_expression(cls, text: str, dim: int) -> "CustomAnalytic":
        expr = expressions.parse(text, dim)
        return cls(dim, expr, {"F": expr.source})

    def norm(self, x, y):
        return self.F(x, y)

    def describe(self) -> dict:
        return {"family": self.family, "dim": self.dim, **self.source}


def stereographic_sphere(radius: float = 1.0) -> Riemannian:
    """Round 2-sphere of the given radius in one stereographic chart."""
    r2 = float(radius) ** 2
    s = f"4*{r2!r}/(1+(x1^2+x2^2)/{r2!r})^2"
    return Riemannian.from_expressions([[s, "0"], ["0", s]])


# ---------------------------------------------------------------------------
# pointwise evaluation


def eval_F(metric: MetricSpec, p: FiberPoint) -> np.ndarray:
    """Finsler norm at ``p``; raises :class:`NonPositiveNorm` if F <= 0 anywhere."""
    F = np.asarray(metric.norm(list(p.x), list(p.y)), dtype=float)
    F = np.broadcast_to(F, p.batch_shape)
    if np.any(~(F > 0)):
        raise NonPositiveNorm(f"F <= 0 at some point (min {np.nanmin(F):.3g})")
    return F


def seed_jets(p: FiberPoint, x_order: int, y_order: int, total: int):
    """Seed jets ``(xs, ys)`` over the 2n variables (x^1..x^n, y^1..y^n)."""
    n = p.dim
    iset = jets.IndexSet.graded(((n, x_order), (n, y_order)), total)
    zs = jets.seed(iset, list(p.x) + list(p.y))
    return zs[:n], zs[n:]


def _matrix_values(m, batch_shape) -> np.ndarray:
    n = len(m)
    out = np.empty((n, n) + tuple(batch_shape))
    for i in range(n):
        for j in range(n):
            out[i, j] = jets.value(m[i][j])
    return out


def batch_last_inv(m: np.ndarray) -> np.ndarray:
    """Inverse of a stack of matrices stored as ``(n, n, *batch)``."""
    inv = np.linalg.inv(np.moveaxis(m, (0, 1), (-2, -1)))
    return np.moveaxis(inv, (-2, -1), (0, 1))


def check_positive_definite(g: np.ndarray) -> None:
    try:
        np.linalg.cholesky(np.moveaxis(g, (0, 1), (-2, -1)))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("fundamental tensor is not positive definite") from exc


def fundamental_tensor(metric: MetricSpec, p: FiberPoint) -> tuple[np.ndarray, np.ndarray]:
    """``g_ij = 1/2 [F^2]_{y^i y^j}`` and its inverse, each of shape ``(n, n, *batch)``."""
    n = p.dim
    xs, ys = seed_jets(p, 0, 2, 2)
    F = metric.norm(xs, ys)
    if np.any(~(jets.value(F) > 0)):
        raise NonPositiveNorm("F <= 0 at some point")
    F2 = F * F
    g = np.empty((n, n) + p.batch_shape)
    for i in range(n):
        for j in range(i, n):
            g[i, j] = g[j, i] = 0.5 * F2.diff(n + i).diff(n + j).value
    check_positive_definite(g)
    return g, batch_last_inv(g)


@dataclass
class ValidationReport:
    samples: int
    homogeneity_error: float
    euler_error: float
    g_homogeneity_error: float
    min_F: float
    min_g_eigenvalue: float
    randers_bound: float | None
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {
            "samples": self.samples,
            "homogeneity_error": self.homogeneity_error,
            "euler_error": self.euler_error,
            "g_homogeneity_error": self.g_homogeneity_error,
            "min_F": self.min_F,
            "min_g_eigenvalue": self.min_g_eigenvalue,
            "randers_bound": self.randers_bound,
            "failures": list(self.failures),
            "passed": self.passed,
        }


def _ray_directions(n: int, rng: np.random.Generator, count: int) -> np.ndarray:
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)])
    d = rng.standard_normal((n, count))
    return np.concatenate([d, np.eye(n), -np.eye(n)], axis=1)


@np.errstate(invalid="ignore", divide="ignore")
def validate_metric(
    metric: MetricSpec,
    domain: ChartDomain,
    sample_count: int = 64,
    seed: int = 0,
    rtol: float = 1e-9,
) -> ValidationReport:
    """Sample the Minkowski-norm axioms; failures are reported, never raised."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    n = domain.dim
    rng = np.random.default_rng(seed)
    x = domain.sample(rng, sample_count)
    y = rng.standard_normal((n, sample_count))
    failures: list[str] = []

    # positivity on the sampled rays plus a ring of directions at every x
    dirs = _ray_directions(n, rng, 64)
    xr = np.repeat(x, dirs.shape[1], axis=1)
    yr = np.tile(dirs, (1, sample_count))
    F_ring = np.asarray(metric.norm(list(xr), list(yr)), dtype=float)
    F_rand = np.broadcast_to(np.asarray(metric.norm(list(x), list(y)), dtype=float), (sample_count,))
    min_F = float(min(np.nanmin(F_ring), np.nanmin(F_rand)))
    if not min_F > 0 or np.isnan(F_ring).any():
        failures.append(f"positivity: F <= 0 on some ray (min {min_F:.6g})")

    hom = 0.0
    for lam in (0.5, 2.0, 7.0):
        F_lam = np.asarray(metric.norm(list(x), list(lam * y)), dtype=float)
        err = np.abs(F_lam - lam * F_rand) / np.maximum(np.abs(lam * F_rand), 1e-300)
        hom = max(hom, float(np.nanmax(err)))
    if not hom <= rtol:
        failures.append(f"homogeneity: relative error {hom:.3g}")

    ok = F_rand > 0
    euler = g_hom = 0.0
    min_eig = float("nan")
    if ok.any():
        p = FiberPoint(x[:, ok], y[:, ok])
        try:
            g, _ = fundamental_tensor(metric, p)
            eig = np.linalg.eigvalsh(np.moveaxis(g, (0, 1), (-2, -1)))
            min_eig = float(eig.min())
            quad = np.einsum("ij...,i...,j...->...", g, p.y, p.y)
            euler = float(np.max(np.abs(quad - F_rand[ok] ** 2) / F_rand[ok] ** 2))
            for lam in (0.5, 2.0):
                g_lam, _ = fundamental_tensor(metric, p.scaled(lam))
                scale = np.max(np.abs(g), axis=(0, 1))
                g_hom = max(g_hom, float(np.max(np.abs(g_lam - g) / scale)))
        except (NotPositiveDefinite, NonPositiveNorm, ValueError) as exc:
            failures.append(f"fundamental tensor: {exc}")
    if not euler <= rtol:
        failures.append(f"euler relation: relative error {euler:.3g}")
    if not g_hom <= rtol:
        failures.append(f"g 0-homogeneity: relative error {g_hom:.3g}")
    if not min_eig > 0:
        failures.append(f"positive definiteness: min eigenvalue {min_eig:.3g}")

    bound = None
    if isinstance(metric, Randers):
        bound = float(np.max(metric.b_norm_squared(x)))
        if not bound < 1:
            failures.append(f"randers: a^ij b_i b_j = {bound:.6g} >= 1")

    return ValidationReport(
        samples=sample_count,
        homogeneity_error=hom,
        euler_error=euler,
        g_homogeneity_error=g_hom,
        min_F=min_F,
        min_g_eigenvalue=min_eig,
        randers_bound=bound,
        failures=failures,
    )

"""Truncated multivariate Taylor arithmetic ("jets"), batched over numpy arrays.

A :class:`Jet` holds the Taylor coefficients of a smooth function around an
expansion point, truncated to a down-closed set of multi-indices.  The
truncation is a quotient ring, so sums, products, quotients and composition
with analytic univariate functions are exact on the retained coefficients.

Coefficients are stored with shape ``(ncoef, *batch)``: one jet can carry the
expansions at many points at once, which is how grid quadrature stays fast.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import product
from typing import Iterable, Sequence

import numpy as np

Number = float | int | np.ndarray


class IndexSet:
    """Down-closed set of multi-indices over ``nvars`` variables.

    Instances are interned, so identity comparison is meaningful.
    """

    def __init__(self, monomials: frozenset[tuple[int, ...]]):
        nvars = len(next(iter(monomials)))
        zero = (0,) * nvars
        if zero not in monomials:
            raise ValueError("index set must contain the zero multi-index")
        for m in monomials:
            for v in range(nvars):
                if m[v] > 0:
                    lower = m[:v] + (m[v] - 1,) + m[v + 1 :]
                    if lower not in monomials:
                        raise ValueError(f"index set not down-closed at {m}")
        self.nvars = nvars
        self.monomials: tuple[tuple[int, ...], ...] = tuple(
            sorted(monomials, key=lambda m: (sum(m), tuple(-k for k in m)))
        )
        self.position = {m: k for k, m in enumerate(self.monomials)}
        self.exponents = np.array(self.monomials, dtype=int)
        self.order = max(sum(m) for m in self.monomials)
        self._mul = None
        self._diff: dict[int, tuple] = {}
        self._nil: dict[bytes, int] = {}

    def __len__(self) -> int:
        return len(self.monomials)

    def __repr__(self) -> str:
        return f"IndexSet(nvars={self.nvars}, size={len(self)}, order={self.order})"

    @staticmethod
    @lru_cache(maxsize=None)
    def of(monomials: frozenset[tuple[int, ...]]) -> "IndexSet":
        return IndexSet(monomials)

    @staticmethod
    @lru_cache(maxsize=None)
    def graded(groups: tuple[tuple[int, int], ...], total: int) -> "IndexSet":
        """Variables split into consecutive groups ``(count, cap)``.

        A multi-index belongs to the set when the degree within each group is at
        most that group's cap and the overall degree is at most ``total``.
        """
        per_group = []
        for count, cap in groups:
            ms = [m for m in product(range(cap + 1), repeat=count) if sum(m) <= cap]
            per_group.append(ms)
        mons = set()
        for parts in product(*per_group):
            m = tuple(k for part in parts for k in part)
            if sum(m) <= total:
                mons.add(m)
        return IndexSet.of(frozenset(mons))

    @staticmethod
    def total_degree(nvars: int, order: int) -> "IndexSet":
        return IndexSet.graded(((nvars, order),), order)

    def mul_tables(self):
        """Pairs ``(i, j)`` with ``m_i + m_j`` in the set, sorted by target."""
        if self._mul is None:
            left, right, target = [], [], []
            for i, a in enumerate(self.monomials):
                for j, b in enumerate(self.monomials):
                    s = tuple(p + q for p, q in zip(a, b))
                    k = self.position.get(s)
                    if k is not None:
                        left.append(i)
                        right.append(j)
                        target.append(k)
            order = np.argsort(np.asarray(target), kind="stable")
            left = np.asarray(left)[order]
            right = np.asarray(right)[order]
            target = np.asarray(target)[order]
            starts = np.flatnonzero(np.r_[True, target[1:] != target[:-1]])
            self._mul = (left, right, starts, target)
        return self._mul

    def nilpotency(self, live: np.ndarray) -> int:
        """Largest k with a nonzero k-th power for a jet whose nonzero rows are ``live``."""
        support = self.exponents[live].any(axis=0)
        key = support.tobytes()
        if key not in self._nil:
            self._nil[key] = int(self.exponents[:, support].sum(axis=1).max()) if support.any() else 0
        return self._nil[key]

    def derivative(self, var: int):
        """Return ``(derived_set, source_positions, factors)`` for d/dz_var."""
        if var not in self._diff:
            mons = []
            for m in self.monomials:
                up = m[:var] + (m[var] + 1,) + m[var + 1 :]
                if up in self.position:
                    mons.append(m)
            if not mons:
                raise ValueError(f"no coefficients survive differentiation in variable {var}")
            derived = IndexSet.of(frozenset(mons))
            src = np.empty(len(derived), dtype=int)
            fac = np.empty(len(derived))
            for k, m in enumerate(derived.monomials):
                up = m[:var] + (m[var] + 1,) + m[var + 1 :]
                src[k] = self.position[up]
                fac[k] = m[var] + 1
            self._diff[var] = (derived, src, fac)
        return self._diff[var]


# zero-row skipping in products applies from this batch size up
SPARSE_MIN_BATCH = 64


@lru_cache(maxsize=None)
def _intersection(a: IndexSet, b: IndexSet) -> IndexSet:
    return IndexSet.of(frozenset(a.monomials) & frozenset(b.monomials))


@lru_cache(maxsize=None)
def _projection(src: IndexSet, dst: IndexSet) -> np.ndarray:
    return np.array([src.position[m] for m in dst.monomials], dtype=int)


def _pad(c: np.ndarray, ndim: int) -> np.ndarray:
    if c.ndim < ndim:
        return c.reshape(c.shape + (1,) * (ndim - c.ndim))
    return c


class Jet:
    """Truncated Taylor expansion; supports ``+ - * / **`` and analytic functions."""

    __slots__ = ("iset", "c")
    __array_priority__ = 1000

    def __init__(self, iset: IndexSet, coeffs: np.ndarray):
        self.iset = iset
        self.c = coeffs

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, iset: IndexSet, value: Number) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((len(iset),) + value.shape)
        c[0] = value
        return cls(iset, c)

    @classmethod
    def variable(cls, iset: IndexSet, var: int, value: Number) -> "Jet":
        jet = cls.constant(iset, value)
        unit = tuple(1 if k == var else 0 for k in range(iset.nvars))
        if unit in iset.position:
            jet.c[iset.position[unit]] = 1.0
        return jet

    # inspection -------------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.c.shape[1:]

    def coefficient(self, alpha: Sequence[int]) -> np.ndarray:
        return self.c[self.iset.position[tuple(alpha)]]

    def partial(self, alpha: Sequence[int]) -> np.ndarray:
        """Partial derivative value d^alpha f at the expansion point."""
        scale = math.prod(math.factorial(k) for k in alpha)
        return scale * self.coefficient(alpha)

    def __repr__(self) -> str:
        return f"Jet(value={self.value!r}, {self.iset!r})"

    # structural ops ---------------------------------------------------
    def restrict(self, iset: IndexSet) -> "Jet":
        if iset is self.iset:
            return self
        return Jet(iset, self.c[_projection(self.iset, iset)])

    def diff(self, var: int) -> "Jet":
        derived, src, fac = self.iset.derivative(var)
        fac = fac.reshape((-1,) + (1,) * (self.c.ndim - 1))
        return Jet(derived, self.c[src] * fac)

    def _coerce(self, other: "Jet") -> tuple[np.ndarray, np.ndarray, IndexSet]:
        if other.iset is self.iset:
            iset = self.iset
            a, b = self.c, other.c
        else:
            if other.iset.nvars != self.iset.nvars:
                raise ValueError("jets over different variable counts")
            iset = _intersection(self.iset, other.iset)
            a = self.restrict(iset).c
            b = other.restrict(iset).c
        ndim = max(a.ndim, b.ndim)
        return _pad(a, ndim), _pad(b, ndim), iset

    def _scalar(self, other) -> np.ndarray:
        """Broadcast a batch-shaped constant against the coefficient axis."""
        other = np.asarray(other, dtype=float)
        return other.reshape((1,) + other.shape)

    # arithmetic -------------------------------------------------------
    def __neg__(self) -> "Jet":
        return Jet(self.iset, -self.c)

    def __pos__(self) -> "Jet":
        return self

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b, iset = self._coerce(other)
            return Jet(iset, a + b)
        other = np.asarray(other, dtype=float)
        c = _pad(self.c, 1 + other.ndim) + np.zeros((1,) + other.shape)
        c[0] += other
        return Jet(self.iset, c)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        return self + (-other)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b, iset = self._coerce(other)
            left, right, starts, target = iset.mul_tables()
            n = len(iset)
            if a[0].size < SPARSE_MIN_BATCH and b[0].size < SPARSE_MIN_BATCH:
                return Jet(iset, np.add.reduceat(a[left] * b[right], starts, axis=0))
            live_a = np.any(a.reshape(n, -1) != 0, axis=1)
            live_b = np.any(b.reshape(n, -1) != 0, axis=1)
            keep = live_a[left] & live_b[right]
            if keep.all():
                return Jet(iset, np.add.reduceat(a[left] * b[right], starts, axis=0))
            shape = (n,) + np.broadcast_shapes(a.shape[1:], b.shape[1:])
            out = np.zeros(shape)
            if keep.any():
                left, right, target = left[keep], right[keep], target[keep]
                first = np.flatnonzero(np.r_[True, target[1:] != target[:-1]])
                out[target[first]] = np.add.reduceat(a[left] * b[right], first, axis=0)
            return Jet(iset, out)
        return Jet(self.iset, _pad(self.c, 1 + np.ndim(other)) * self._scalar(other))

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        a0 = self.value
        if np.any(a0 == 0):
            raise ZeroDivisionError("jet division by a zero constant term")
        k = np.arange(self.iset.order + 1)
        # d^k/da^k (1/a) / k! = (-1)^k a^(-k-1)
        coeffs = [(-1.0) ** j * a0 ** (-j - 1.0) for j in k]
        return self._compose_series(coeffs)

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other) -> "Jet":
        return self.reciprocal() * other

    def __pow__(self, exponent) -> "Jet":
        if isinstance(exponent, Jet):
            return exp(log(self) * exponent)
        e = float(exponent)
        if e.is_integer() and e >= 0:
            return self._ipow(int(e))
        if e.is_integer():
            return self._ipow(int(-e)).reciprocal()
        return self._real_pow(e)

    def __rpow__(self, base) -> "Jet":
        return exp(self * np.log(np.asarray(base, dtype=float)))

    def _ipow(self, k: int) -> "Jet":
        result = None
        base = self
        while k:
            if k & 1:
                result = base if result is None else result * base
            k >>= 1
            if k:
                base = base * base
        if result is None:
            return Jet.constant(self.iset, np.ones(self.batch_shape))
        return result

    def _real_pow(self, e: float) -> "Jet":
        a0 = self.value
        coeffs = []
        binom = 1.0
        for j in range(self.iset.order + 1):
            coeffs.append(binom * a0 ** (e - j))
            binom *= (e - j) / (j + 1)
        return self._compose_series(coeffs)

    def _compose_series(self, coeffs: Sequence[np.ndarray]) -> "Jet":
        """Evaluate sum_k coeffs[k] * (self - value)^k by Horner's rule."""
        h = Jet(self.iset, self.c.copy())
        h.c[0] = 0.0
        live = np.any(h.c.reshape(len(self.iset), -1) != 0, axis=1)
        order = self.iset.nilpotency(live)
        result = Jet.constant(self.iset, coeffs[order] * np.ones(self.batch_shape))
        for k in range(order - 1, -1, -1):
            result = result * h + coeffs[k]
        return result

    def compose(self, subs: Sequence["Jet"]) -> "Jet":
        """Substitute jets (over new variables) for this jet's variables.

        Each ``subs[v]`` must have constant term equal to the expansion point
        of variable ``v``.  The result is exact up to the order of the
        substituted jets' index set.
        """
        if len(subs) != self.iset.nvars:
            raise ValueError("need one substitution per variable")
        target = subs[0].iset
        for s in subs[1:]:
            target = _intersection(target, s.iset)
        k_max = target.order
        shifts = []
        for s in subs:
            h = s.restrict(target)
            h = Jet(target, h.c.copy())
            h.c[0] = 0.0
            shifts.append(h)
        cache: dict[tuple[int, int], Jet] = {}

        def power(v: int, k: int) -> Jet:
            if (v, k) not in cache:
                cache[(v, k)] = shifts[v] if k == 1 else power(v, k - 1) * shifts[v]
            return cache[(v, k)]

        batch = np.broadcast_shapes(self.batch_shape, *[s.batch_shape for s in subs])
        result = Jet.constant(target, np.zeros(batch))
        for alpha, coef in zip(self.iset.monomials, self.c):
            if sum(alpha) > k_max:
                continue
            term = None
            for v, k in enumerate(alpha):
                if k:
                    term = power(v, k) if term is None else term * power(v, k)
            if term is None:
                result = result + coef
            else:
                result = result + term * coef
        return result


def _series(x: Jet, derivs: Iterable[np.ndarray]) -> Jet:
    coeffs = [d / math.factorial(k) for k, d in enumerate(derivs)]
    return x._compose_series(coeffs)


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cycle = (s, c, -s, -c)
    return _series(x, (cycle[k % 4] for k in range(x.iset.order + 1)))


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cycle = (c, -s, -c, s)
    return _series(x, (cycle[k % 4] for k in range(x.iset.order + 1)))


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e = np.exp(x.value)
    return _series(x, (e for _ in range(x.iset.order + 1)))


def log(x):
    if not isinstance(x, Jet):
        return np.log(x)
    a0 = x.value
    derivs = [np.log(a0)]
    for k in range(1, x.iset.order + 1):
        derivs.append((-1.0) ** (k - 1) * math.factorial(k - 1) / a0**k)
    return _series(x, derivs)


def sqrt(x):
    if not isinstance(x, Jet):
        return np.sqrt(x)
    if np.any(x.value <= 0):
        raise ValueError("sqrt of a jet with non-positive constant term")
    return x._real_pow(0.5)


def tanh(x):
    if not isinstance(x, Jet):
        return np.tanh(x)
    return 1.0 - 2.0 / (exp(2.0 * x) + 1.0)


def tan(x):
    if not isinstance(x, Jet):
        return np.tan(x)
    return sin(x) / cos(x)


def value(x) -> np.ndarray:
    """Constant term of a jet, or the number itself."""
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


def seed(iset: IndexSet, point: Sequence[Number]) -> list[Jet]:
    """Independent variables ``z_k = point[k] + dz_k`` as jets."""
    return [Jet.variable(iset, k, v) for k, v in enumerate(point)]


def invert_matrix(m: list[list]) -> list[list]:
    """Inverse of a small matrix of jets by Gauss-Jordan elimination.

    No pivoting: callers pass positive-definite matrices.
    """
    n = len(m)
    a = [list(row) for row in m]
    inv = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = 1.0 / a[col][col]
        a[col] = [e * piv for e in a[col]]
        inv[col] = [e * piv for e in inv[col]]
        for row in range(n):
            if row == col:
                continue
            f = a[row][col]
            a[row] = [e - f * p for e, p in zip(a[row], a[col])]
            inv[row] = [e - f * p for e, p in zip(inv[row], inv[col])]
    return inv

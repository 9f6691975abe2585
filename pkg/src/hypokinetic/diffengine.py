"""Truncated multivariate Taylor arithmetic (forward-mode jets).

A :class:`Jet` stores Taylor coefficients ``d^alpha f / alpha!`` over a fixed
set of monomials (a :class:`JetAlgebra`), with an arbitrary numpy batch shape
trailing the coefficient axis.  Two families of algebras are used:

* ``JetAlgebra.standard(dims, order)``: all monomials of total degree
  ``<= order``.
* ``JetAlgebra.nested(d1, o1, d2, o2)``: an order-``o2`` jet whose
  coefficients are order-``o1`` jets, i.e. truncation is applied separately
  to each group of variables.  Fourth-order mixed derivatives are obtained this
  way without raising the public order cap.
"""
from __future__ import annotations

import functools
import math
from typing import Sequence

import numpy as np

MAX_ORDER = 3


class JetError(ValueError):
    pass


class UnsupportedOrderError(JetError):
    pass


class JetAlgebra:
    """Monomial basis plus a precomputed multiplication table."""

    def __init__(self, monomials: Sequence[tuple[int, ...]], key: tuple):
        self.key = key
        self.monomials = tuple(monomials)
        self.dims = len(self.monomials[0])
        self.index = {m: i for i, m in enumerate(self.monomials)}
        self.degrees = np.array([sum(m) for m in self.monomials])
        self.max_degree = int(self.degrees.max())
        self.size = len(self.monomials)

        pairs = []
        for i, mi in enumerate(self.monomials):
            for j, mj in enumerate(self.monomials):
                prod = tuple(a + b for a, b in zip(mi, mj))
                k = self.index.get(prod)
                if k is not None:
                    pairs.append((k, i, j))
        pairs.sort()
        k_arr = np.array([p[0] for p in pairs])
        self._left = np.array([p[1] for p in pairs])
        self._right = np.array([p[2] for p in pairs])
        # every output slot receives at least the (0, k) pair, so reduceat is safe
        self._starts = np.searchsorted(k_arr, np.arange(self.size))
        self._factorials = np.array(
            [math.prod(math.factorial(a) for a in m) for m in self.monomials],
            dtype=float,
        )

    @property
    def order(self) -> int:
        return self.max_degree

    @staticmethod
    @functools.lru_cache(maxsize=None)
    def standard(dims: int, order: int) -> "JetAlgebra":
        monos = [
            m for deg in range(order + 1)
            for m in _compositions(dims, deg)
        ]
        return JetAlgebra(monos, ("standard", dims, order))

    @staticmethod
    @functools.lru_cache(maxsize=None)
    def nested(outer_dims: int, outer_order: int,
               inner_dims: int, inner_order: int) -> "JetAlgebra":
        outer = JetAlgebra.standard(outer_dims, outer_order).monomials
        inner = JetAlgebra.standard(inner_dims, inner_order).monomials
        monos = sorted((o + i for i in inner for o in outer), key=sum)
        return JetAlgebra(monos, ("nested", outer_dims, outer_order, inner_dims, inner_order))

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        prod = a[self._left] * b[self._right]
        return np.add.reduceat(prod, self._starts, axis=0)

    def __repr__(self):
        return f"JetAlgebra{self.key}"


def _compositions(dims: int, total: int):
    """Multi-indices of length ``dims`` summing to ``total`` (lexicographic)."""
    if dims == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(dims - 1, total - first):
            yield (first,) + rest


class Jet:
    """Truncated Taylor polynomial with coefficients ``coeffs[monomial, *batch]``."""

    __array_priority__ = 100

    def __init__(self, algebra: JetAlgebra, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != algebra.size:
            raise JetError(
                f"coefficient array has {coeffs.shape[0]} entries, "
                f"algebra needs {algebra.size}")
        self.algebra = algebra
        self.coeffs = coeffs

    # construction -----------------------------------------------------------
    @classmethod
    def constant(cls, algebra: JetAlgebra, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((algebra.size,) + value.shape)
        c[0] = value
        return cls(algebra, c)

    @classmethod
    def variable(cls, algebra: JetAlgebra, k: int, value=0.0) -> "Jet":
        jet = cls.constant(algebra, value)
        unit = tuple(int(i == k) for i in range(algebra.dims))
        jet.coeffs[algebra.index[unit]] = 1.0
        return jet

    # introspection ----------------------------------------------------------
    @property
    def order(self) -> int:
        return self.algebra.order

    @property
    def dims(self) -> int:
        return self.algebra.dims

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[1:]

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    def coefficient(self, multi_index: Sequence[int]) -> np.ndarray:
        return self.coeffs[self.algebra.index[tuple(multi_index)]]

    def derivative(self, multi_index: Sequence[int]) -> np.ndarray:
        """Raw mixed partial derivative ``d^alpha f``."""
        k = self.algebra.index[tuple(multi_index)]
        return self.coeffs[k] * self.algebra._factorials[k]

    def derivatives(self) -> np.ndarray:
        return self.coeffs * self.algebra._factorials.reshape((-1,) + (1,) * len(self.shape))

    # batch manipulation -----------------------------------------------------
    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.algebra, self.coeffs[(slice(None),) + idx])

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.algebra, self.coeffs.reshape((self.algebra.size,) + tuple(shape)))

    def sum(self, axis) -> "Jet":
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(a + 1 if a >= 0 else a for a in axes)
        return Jet(self.algebra, self.coeffs.sum(axis=axes))

    def expand_dims(self, axis: int) -> "Jet":
        return Jet(self.algebra, np.expand_dims(self.coeffs, axis + 1 if axis >= 0 else axis))

    # arithmetic ---------------------------------------------------------------
    def _check(self, other: "Jet"):
        if other.algebra is not self.algebra:
            raise JetError(f"jet mismatch: {self.algebra} vs {other.algebra}")

    def _padded(self, ndim: int) -> np.ndarray:
        extra = ndim - len(self.shape)
        if extra <= 0:
            return self.coeffs
        return self.coeffs.reshape((self.algebra.size,) + (1,) * extra + self.shape)

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            nd = max(len(self.shape), len(other.shape))
            return Jet(self.algebra, self._padded(nd) + other._padded(nd))
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.shape, other.shape)
        c = np.broadcast_to(self._padded(len(shape)), (self.algebra.size,) + shape).copy()
        c[0] += other
        return Jet(self.algebra, c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.algebra, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            nd = max(len(self.shape), len(other.shape))
            return Jet(self.algebra, self.algebra.multiply(self._padded(nd), other._padded(nd)))
        other = np.asarray(other, dtype=float)
        return Jet(self.algebra, self._padded(other.ndim) * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        other = np.asarray(other, dtype=float)
        return Jet(self.algebra, self._padded(other.ndim) / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            out = Jet.constant(self.algebra, np.ones(self.shape))
            for _ in range(int(p)):
                out = out * self
            return out
        return self.power(float(p))

    # elementary functions -----------------------------------------------------
    def compose(self, derivs) -> "Jet":
        """Apply a scalar function given its derivatives ``derivs[k]`` at the value."""
        h = Jet(self.algebra, self.coeffs.copy())
        h.coeffs[0] = 0.0
        out = Jet.constant(self.algebra, derivs[0])
        hk = None
        for k in range(1, self.algebra.max_degree + 1):
            hk = h if hk is None else hk * h
            out = out + hk * (derivs[k] / math.factorial(k))
        return out

    def sin(self):
        v = self.value
        s, c = np.sin(v), np.cos(v)
        return self.compose([[s, c, -s, -c][k % 4] for k in range(self.algebra.max_degree + 1)])

    def cos(self):
        v = self.value
        s, c = np.sin(v), np.cos(v)
        return self.compose([[c, -s, -c, s][k % 4] for k in range(self.algebra.max_degree + 1)])

    def exp(self):
        e = np.exp(self.value)
        return self.compose([e] * (self.algebra.max_degree + 1))

    def power(self, p: float):
        v = self.value
        derivs, fall = [], 1.0
        for k in range(self.algebra.max_degree + 1):
            derivs.append(fall * v ** (p - k))
            fall *= p - k
        return self.compose(derivs)

    def reciprocal(self):
        return self.power(-1.0)

    def __repr__(self):
        return f"Jet(order={self.order}, dims={self.dims}, shape={self.shape})"


def stack(jets: Sequence[Jet], axis: int = -1) -> Jet:
    alg = jets[0].algebra
    for j in jets[1:]:
        jets[0]._check(j)
    shape = np.broadcast_shapes(*(j.shape for j in jets))
    arrs = [np.broadcast_to(j._padded(len(shape)), (alg.size,) + shape) for j in jets]
    ax = axis + 1 if axis >= 0 else axis
    return Jet(alg, np.stack(arrs, axis=ax))


def concatenate(jets: Sequence[Jet], axis: int = -1) -> Jet:
    alg = jets[0].algebra
    ax = axis + 1 if axis >= 0 else axis
    return Jet(alg, np.concatenate([j.coeffs for j in jets], axis=ax))


# -- public operations ----------------------------------------------------------

def jet_binary(op: str, a: Jet, b: Jet) -> Jet:
    if a.order != b.order or a.dims != b.dims:
        raise JetError(f"order/dims mismatch: ({a.order},{a.dims}) vs ({b.order},{b.dims})")
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    raise JetError(f"unknown binary op {op!r}")


def jet_unary(op: str, a: Jet, exponent: float | None = None) -> Jet:
    if op == "sin":
        return a.sin()
    if op == "cos":
        return a.cos()
    if op == "exp":
        return a.exp()
    if op == "pow":
        if exponent is None:
            raise JetError("pow needs an exponent")
        return a ** exponent
    raise JetError(f"unknown unary op {op!r}")


def seed_point(point_coords, dirs: Sequence[int], order: int,
               algebra: JetAlgebra | None = None) -> Jet:
    """Jet of the ambient coordinates moved along unit coordinate directions.

    ``point_coords`` has shape ``(*batch, N)``; variable ``k`` perturbs the
    coordinate ``dirs[k]``.
    """
    coords = np.asarray(point_coords, dtype=float)
    alg = algebra or JetAlgebra.standard(len(dirs), order)
    q = Jet.constant(alg, coords)
    for k, d in enumerate(dirs):
        unit = tuple(int(i == k) for i in range(alg.dims))
        q.coeffs[(alg.index[unit],) + (Ellipsis, d)] = 1.0
    return q


def jet_eval(f, p, dirs: Sequence[int], order: int) -> Jet:
    """Truncated Taylor expansion of ``f`` at frame point ``p`` along ambient
    coordinate directions ``dirs`` (indices into ``(x, e.ravel())``)."""
    if order > MAX_ORDER or order < 0:
        raise UnsupportedOrderError(f"order {order} not in 0..{MAX_ORDER}")
    q = seed_point(p.coords, dirs, order)
    return f.on_point_jet(q, p.n)


def jet_of_function(func, x: float, order: int) -> Jet:
    """One-variable helper: jet of ``func`` (acting on jets) at ``x``."""
    if order > MAX_ORDER:
        raise UnsupportedOrderError(f"order {order} not in 0..{MAX_ORDER}")
    alg = JetAlgebra.standard(1, order)
    return func(Jet.variable(alg, 0, x))


def multilinear_index(algebra: JetAlgebra) -> int:
    """Index of the monomial ``t_1 t_2 ... t_m``."""
    return algebra.index[(1,) * algebra.dims]


__all__ = [
    "Jet", "JetAlgebra", "JetError", "UnsupportedOrderError", "MAX_ORDER",
    "jet_binary", "jet_unary", "jet_eval", "seed_point", "stack", "concatenate",
    "jet_of_function", "multilinear_index",
]

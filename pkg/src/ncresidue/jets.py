"""Truncated multivariate Taylor series ("jets") about a base point.

A :class:`Jet` of order K in d variables stores the Taylor coefficients
``c[alpha] = d^alpha f(x0) / alpha!`` for every multi-index with
``|alpha| <= K``.  Coefficients may carry a trailing value shape, so a single
jet can hold a whole matrix (e.g. the metric) and :func:`matmul` multiplies
matrix-valued jets.

Products truncate at the smaller order of the two factors and derivatives
lower the order by one; reading a jet below order 0 raises
:class:`~ncresidue.errors.TruncationTooDeep`.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from .errors import TruncationTooDeep


class JetSpace:
    def __init__(self, dim: int, order: int):
        self.dim = dim
        self.order = order
        monos = [m for deg in range(order + 1) for m in _compositions(deg, dim)]
        self.monomials = monos
        self.index = {m: i for i, m in enumerate(monos)}
        self.degree = np.array([sum(m) for m in monos])
        ii, jj, kk = [], [], []
        for i, a in enumerate(monos):
            for j, b in enumerate(monos):
                s = tuple(x + y for x, y in zip(a, b))
                if sum(s) <= order:
                    ii.append(i)
                    jj.append(j)
                    kk.append(self.index[s])
        self._mul = (np.array(ii), np.array(jj), np.array(kk))
        self._deriv = []
        for k in range(dim):
            src, dst, fac = [], [], []
            for i, a in enumerate(monos):
                if sum(a) == order:
                    continue
                up = list(a)
                up[k] += 1
                src.append(self.index[tuple(up)])
                dst.append(i)
                fac.append(up[k])
            self._deriv.append((np.array(src, dtype=int), np.array(dst, dtype=int),
                                np.array(fac, dtype=float)))

    def __len__(self):
        return len(self.monomials)

    def unit(self, k: int) -> int:
        e = [0] * self.dim
        e[k] = 1
        return self.index[tuple(e)]


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def jet_space(dim: int, order: int) -> JetSpace:
    return JetSpace(dim, order)


class Jet:
    __slots__ = ("space", "c", "order")
    __array_ufunc__ = None

    def __init__(self, space: JetSpace, c, order: int | None = None):
        self.space = space
        self.c = np.asarray(c)
        self.order = space.order if order is None else order

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, space: JetSpace, value, order=None):
        value = np.asarray(value, dtype=complex)
        c = np.zeros((len(space),) + value.shape, dtype=complex)
        c[0] = value
        return cls(space, c, order)

    @classmethod
    def from_derivatives(cls, space: JetSpace, value, first=None, second=None):
        """Build from value, first derivatives ``first[k]`` and ``second[k, l]``."""
        value = np.asarray(value, dtype=complex)
        c = np.zeros((len(space),) + value.shape, dtype=complex)
        c[0] = value
        if space.order >= 1:
            if first is None:
                raise TruncationTooDeep("first derivatives required for jet order >= 1")
            for k in range(space.dim):
                c[space.unit(k)] = first[k]
        if space.order >= 2:
            if second is None:
                raise TruncationTooDeep("second derivatives required for jet order >= 2")
            for k in range(space.dim):
                for l in range(k, space.dim):
                    e = [0] * space.dim
                    e[k] += 1
                    e[l] += 1
                    scale = 0.5 if k == l else 1.0
                    c[space.index[tuple(e)]] = scale * np.asarray(second[k][l])
        if space.order >= 3:
            raise TruncationTooDeep("jets above order 2 need higher metric derivatives")
        return cls(space, c)

    # access ---------------------------------------------------------------
    @property
    def value(self):
        if self.order < 0:
            raise TruncationTooDeep("jet has no valid coefficients left")
        return self.c[0]

    @property
    def shape(self):
        return self.c.shape[1:]

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.space, self.c[(slice(None),) + idx], self.order)

    def is_zero(self) -> bool:
        keep = self.space.degree <= max(self.order, -1)
        return not np.any(self.c[keep])

    def _truncated(self, order):
        c = self.c
        if order < self.space.order:
            c = c.copy()
            c[self.space.degree > order] = 0
        return Jet(self.space, c, order)

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(self.space, other)

    def __add__(self, other):
        other = self._coerce(other)
        order = min(self.order, other.order)
        return Jet(self.space, self.c + other.c, order)._truncated(order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.c, self.order)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other)
            return Jet(self.space, self.c * other, self.order)
        order = min(self.order, other.order)
        if order <= 0:
            c = np.zeros(np.broadcast_shapes(self.c.shape, other.c.shape), dtype=complex)
            c[0] = self.c[0] * other.c[0]
            return Jet(self.space, c, order)
        ii, jj, kk = self.space._mul
        prod = self.c[ii] * other.c[jj]
        c = np.zeros((len(self.space),) + prod.shape[1:], dtype=complex)
        np.add.at(c, kk, prod)
        return Jet(self.space, c, order)._truncated(order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.space, self.c / other, self.order)

    def reciprocal(self):
        a0 = self.c[0]
        delta = Jet(self.space, self.c / a0, self.order) - 1.0
        total = Jet.constant(self.space, np.ones_like(a0), self.order)
        term = total
        for _ in range(self.order):
            term = term * (-delta)
            total = total + term
        return total * (1.0 / a0)

    def d(self, k: int) -> "Jet":
        """Partial derivative in variable ``k`` (lowers the order by one)."""
        if self.order <= 0:
            raise TruncationTooDeep("cannot differentiate a jet of order 0")
        src, dst, fac = self.space._deriv[k]
        c = np.zeros_like(self.c)
        shape = (-1,) + (1,) * (self.c.ndim - 1)
        c[dst] = self.c[src] * fac.reshape(shape)
        return Jet(self.space, c, self.order - 1)._truncated(self.order - 1)

    def conj(self):
        return Jet(self.space, np.conj(self.c), self.order)

    def __repr__(self):
        return f"Jet(dim={self.space.dim}, order={self.order}, shape={self.shape})"


def matmul(a: Jet, b: Jet) -> Jet:
    """Product of matrix-valued jets (value shapes (..., i, j) @ (..., j, k))."""
    order = min(a.order, b.order)
    space = a.space
    ii, jj, kk = space._mul
    keep = space.degree[kk] <= order
    prod = np.einsum("p...ij,p...jk->p...ik", a.c[ii[keep]], b.c[jj[keep]])
    c = np.zeros((len(space),) + prod.shape[1:], dtype=complex)
    np.add.at(c, kk[keep], prod)
    return Jet(space, c, order)


def inverse(a: Jet) -> Jet:
    """Inverse of a matrix-valued jet by Neumann series about its value."""
    a0 = np.asarray(a.c[0])
    inv0 = np.linalg.inv(a0)
    inv_jet = Jet.constant(a.space, inv0, a.order)
    delta = a - Jet.constant(a.space, a0, a.order)
    step = matmul(inv_jet, -delta)
    total = inv_jet
    term = inv_jet
    for _ in range(a.order):
        term = matmul(step, term)
        total = total + term
    return total


def multi_indices(dim: int, degree: int):
    """All exponent tuples of the given total degree (graded lexicographic)."""
    return list(_compositions(degree, dim))


def pairs(dim: int):
    return list(itertools.combinations_with_replacement(range(dim), 2))

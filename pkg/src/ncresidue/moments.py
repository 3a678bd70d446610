"""Exact monomial integrals over the unit sphere S^{n-1} in R^n.

Moments are returned as exact rationals, in units of ``sphere_area(n)``.  They
come from the pairing recursion

    I(g1 g2 ... g2k) = 1/(2k - 2 + n) * sum_{j>1} delta(g1, gj) I(all but g1, gj)

which, for an exponent vector ``alpha`` and a chosen pairing variable ``i``,
collapses to ``I(alpha) = (alpha_i - 1) / (|alpha| - 2 + n) * I(alpha - 2 e_i)``.
"""

from __future__ import annotations

import math
import threading
from fractions import Fraction
from typing import Mapping, Sequence

from .errors import DimensionMismatch


def sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n, 2 pi^{n/2} / Gamma(n/2)."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


class MomentTable:
    """Memoized moments for a fixed ambient dimension ``n``; safe to share across threads."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be a positive integer")
        self.n = n
        self._cache: dict[tuple[int, ...], Fraction] = {(0,) * n: Fraction(1)}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._cache)

    def moment(self, alpha: Sequence[int], first: int | None = None) -> Fraction:
        """Moment of xi^alpha as a fraction of the sphere area.

        ``first`` picks the variable used for the first pairing; the result does
        not depend on it.
        """
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.n:
            raise DimensionMismatch(f"multi-index of length {len(alpha)} for n={self.n}")
        if any(a < 0 for a in alpha):
            raise ValueError("exponents must be non-negative")
        if any(a % 2 for a in alpha):
            return Fraction(0)
        if first is None:
            cached = self._cache.get(alpha)
            if cached is not None:
                return cached
        if not any(alpha):
            return Fraction(1)
        i = first if first is not None else next(k for k, a in enumerate(alpha) if a)
        if alpha[i] == 0:
            raise ValueError(f"pairing variable {i} does not occur in {alpha}")
        lower = list(alpha)
        lower[i] -= 2
        value = Fraction(alpha[i] - 1, sum(alpha) - 2 + self.n) * self.moment(lower)
        if first is None:
            with self._lock:
                self._cache[alpha] = value
        return value


_tables: dict[int, MomentTable] = {}
_tables_lock = threading.Lock()


def moment_table(n: int) -> MomentTable:
    with _tables_lock:
        table = _tables.get(n)
        if table is None:
            table = _tables[n] = MomentTable(n)
        return table


def monomial_moment(alpha: Sequence[int], n: int | None = None) -> Fraction:
    n = len(alpha) if n is None else n
    return moment_table(n).moment(alpha)


def integrate_polynomial_over_sphere(p: Mapping[Sequence[int], complex], n: int) -> complex:
    """Integral over S^{n-1} of ``sum coeff * xi^alpha`` given as ``{alpha: coeff}``."""
    table = moment_table(n)
    total = 0j
    for alpha, coeff in p.items():
        if len(alpha) != n:
            raise DimensionMismatch(f"monomial {alpha} has {len(alpha)} variables, expected {n}")
        mom = table.moment(alpha)
        if mom:
            total += coeff * float(mom)
    return total * sphere_area(n)

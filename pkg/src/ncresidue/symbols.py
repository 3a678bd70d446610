"""Graded symbol algebra for Laplace-type operators and their parametrices.

A :class:`FullSymbol` is a finite sum of terms ``coeff * xi^alpha * Q(xi)^q``
where ``Q(xi) = xi^T G xi`` is a fixed positive quadratic form (the ``norm``,
normally the inverse metric at the base point).  A term has homogeneity
``|alpha| + 2q``.

Coefficients can be complex numbers, numpy arrays (many points at once) or
:class:`~ncresidue.jets.Jet` objects.  Jet coefficients make a symbol into a
local symbol field: ``d_x`` differentiates the coefficients, and an x-dependent
norm ``Q(x, xi)^q`` is expanded about the base point as
``sum_k binom(q, k) Q0^{q-k} (Q - Q0)^k`` with ``Q - Q0`` vanishing at the base.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import jets as jetmod
from .errors import DimensionMismatch, NotElliptic, TruncationTooDeep
from .geometry import (
    CurvatureTensor,
    MetricField,
    WarpedConfig,
    christoffel,
    inverse_metric,
    orthonormal_frame,
)
from .jets import Jet
from .moments import moment_table, sphere_area

Mono = tuple


def _is_zero(c) -> bool:
    if isinstance(c, Jet):
        return c.is_zero()
    if isinstance(c, np.ndarray):
        return not np.any(c)
    return c == 0


def _value(c):
    return c.value if isinstance(c, Jet) else c


def _mono_add(a: Mono, b: Mono) -> Mono:
    return tuple(x + y for x, y in zip(a, b))


def _unit(dim: int, k: int, power: int = 1) -> Mono:
    e = [0] * dim
    e[k] = power
    return tuple(e)


@dataclass(frozen=True)
class SymbolTerm:
    coeff: object
    mono: Mono
    norm_power: int

    @property
    def degree(self) -> int:
        return sum(self.mono) + 2 * self.norm_power


class FullSymbol:
    """Finite graded sum of :class:`SymbolTerm` values over ``dim`` cotangent variables."""

    def __init__(self, dim: int, norm=None, terms: dict | None = None, floor: int | None = None):
        self.dim = dim
        self.norm = np.eye(dim) if norm is None else np.asarray(norm, dtype=float)
        if self.norm.shape[-2:] != (dim, dim):
            raise DimensionMismatch("norm matrix does not match the symbol dimension")
        self.terms: dict[tuple[Mono, int], object] = {}
        self.floor = floor
        for key, c in (terms or {}).items():
            mono, q = key
            if len(mono) != dim:
                raise DimensionMismatch(f"monomial {mono} has the wrong number of variables")
            if floor is not None and sum(mono) + 2 * q < floor:
                continue
            if not _is_zero(c):
                self.terms[(tuple(mono), int(q))] = c

    # construction ---------------------------------------------------------
    @classmethod
    def from_terms(cls, dim, terms: Iterable[SymbolTerm], norm=None, floor=None):
        out = cls(dim, norm, floor=floor)
        for t in terms:
            out._accumulate(t.mono, t.norm_power, t.coeff)
        return out

    @classmethod
    def constant(cls, dim, value, norm=None):
        return cls(dim, norm, {((0,) * dim, 0): value})

    @classmethod
    def norm_power(cls, dim, q: int, coeff=1.0, norm=None):
        return cls(dim, norm, {((0,) * dim, q): coeff})

    @classmethod
    def quadratic(cls, matrix, coeff=1.0, norm=None):
        """sum_ab coeff * A_ab xi_a xi_b for a (possibly batched) symmetric matrix."""
        matrix = np.asarray(matrix)
        dim = matrix.shape[-1]
        out = cls(dim, norm)
        for a in range(dim):
            for b in range(a, dim):
                c = matrix[..., a, b] * (1 if a == b else 2) * coeff
                out._accumulate(_mono_add(_unit(dim, a), _unit(dim, b)), 0, c)
        return out

    @classmethod
    def linear(cls, vector, coeff=1.0, norm=None):
        vector = np.asarray(vector)
        dim = vector.shape[-1]
        out = cls(dim, norm)
        for k in range(dim):
            out._accumulate(_unit(dim, k), 0, vector[..., k] * coeff)
        return out

    def _new(self, terms=None, floor=None):
        return FullSymbol(self.dim, self.norm, terms, self.floor if floor is None else floor)

    def _accumulate(self, mono, q, c):
        key = (tuple(mono), int(q))
        if key in self.terms:
            c = self.terms[key] + c
        if _is_zero(c):
            self.terms.pop(key, None)
        else:
            self.terms[key] = c

    # inspection -----------------------------------------------------------
    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        for (mono, q), c in self.terms.items():
            yield SymbolTerm(c, mono, q)

    def degrees(self) -> list[int]:
        return sorted({sum(m) + 2 * q for (m, q) in self.terms}, reverse=True)

    @property
    def components(self) -> dict[int, list[SymbolTerm]]:
        out: dict[int, list[SymbolTerm]] = {}
        for t in self:
            out.setdefault(t.degree, []).append(t)
        return out

    def component(self, degree: int) -> "FullSymbol":
        return self._new({k: c for k, c in self.terms.items() if sum(k[0]) + 2 * k[1] == degree})

    def truncate(self, floor: int) -> "FullSymbol":
        return self._new(dict(self.terms), floor=floor)

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self):
        return f"FullSymbol(dim={self.dim}, terms={len(self.terms)}, degrees={self.degrees()})"

    # algebra ----------------------------------------------------------------
    def _check(self, other: "FullSymbol"):
        if other.dim != self.dim:
            raise DimensionMismatch("symbols over different numbers of variables")
        if self.norm is not other.norm and not (
            self.norm.shape == other.norm.shape and np.allclose(self.norm, other.norm, rtol=0, atol=1e-14)
        ):
            raise DimensionMismatch("symbols use different norm forms")

    def __add__(self, other):
        if not isinstance(other, FullSymbol):
            other = FullSymbol.constant(self.dim, other, self.norm)
        self._check(other)
        out = self._new(dict(self.terms))
        for (m, q), c in other.terms.items():
            out._accumulate(m, q, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return self._new({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, s):
        return self._new({k: c * s for k, c in self.terms.items()})

    def __mul__(self, other):
        """Pointwise product of symbols (not operator composition)."""
        if not isinstance(other, FullSymbol):
            return self.scale(other)
        self._check(other)
        floor = _max_floor(self.floor, other.floor)
        out = self._new(floor=floor)
        for (ma, qa), ca in self.terms.items():
            da = sum(ma) + 2 * qa
            for (mb, qb), cb in other.terms.items():
                if floor is not None and da + sum(mb) + 2 * qb < floor:
                    continue
                out._accumulate(_mono_add(ma, mb), qa + qb, ca * cb)
        return out

    def __rmul__(self, other):
        return self.scale(other)

    # differentiation -------------------------------------------------------
    def d_xi(self, k: int) -> "FullSymbol":
        """Exact derivative in xi_k; d Q^q = 2q (G xi)_k Q^{q-1}."""
        out = self._new(floor=None)
        for (m, q), c in self.terms.items():
            if m[k]:
                lower = list(m)
                lower[k] -= 1
                out._accumulate(tuple(lower), q, c * m[k])
            if q:
                for b in range(self.dim):
                    gkb = self.norm[..., k, b]
                    if not np.any(gkb):
                        continue
                    out._accumulate(_mono_add(m, _unit(self.dim, b)), q - 1, c * (2 * q * gkb))
        out.floor = None if self.floor is None else self.floor - 1
        return out

    def d_x(self, k: int) -> "FullSymbol":
        """Derivative in the base-point coordinate x_k (coefficients must be jets)."""
        out = self._new()
        for (m, q), c in self.terms.items():
            if not isinstance(c, Jet):
                continue
            out._accumulate(m, q, c.d(k))
        return out

    def at_base(self) -> "FullSymbol":
        """Replace jet coefficients by their values at the base point."""
        return self._new({k: _value(c) for k, c in self.terms.items()})

    # numerics ----------------------------------------------------------------
    def evaluate(self, xi):
        """Value at cotangent vector(s) ``xi`` of shape (..., dim); jets use base values."""
        xi = np.asarray(xi, dtype=float)
        qform = np.einsum("...a,...ab,...b->...", xi, self.norm, xi)
        total = 0j
        for (m, q), c in self.terms.items():
            mono = np.prod(xi ** np.array(m), axis=-1)
            total = total + _value(c) * mono * qform ** q
        return total

    def coefficients(self) -> dict:
        return {k: _value(c) for k, c in self.terms.items()}

    def canonical(self, degree: int):
        """Component ``degree`` written as ``P(xi) * Q^qmin`` with polynomial ``P``.

        Returns ``(qmin, {mono: coeff})``; a component is zero iff ``P`` is.
        """
        comp = self.component(degree).at_base()
        if comp.is_zero():
            return 0, {}
        qmin = min(q for (_, q) in comp.terms)
        poly: dict = {}
        for (m, q), c in comp.terms.items():
            for pm, pc in _qform_power(self.norm, q - qmin).items():
                key = _mono_add(m, pm)
                poly[key] = poly.get(key, 0) + c * pc
        return qmin, poly

    def to_frame(self, c_matrix) -> "FullSymbol":
        """Substitute ``xi = C eta`` where ``C^T G C = I``; the result has identity norm."""
        c_matrix = np.asarray(c_matrix, dtype=float)
        check = np.einsum("...ai,...ab,...bj->...ij", c_matrix, self.norm, c_matrix)
        if not np.allclose(check, np.eye(self.dim), atol=1e-10):
            raise DimensionMismatch("frame matrix does not orthonormalize the norm form")
        out = FullSymbol(self.dim, np.eye(self.dim))
        cache: dict = {}
        for (m, q), coeff in self.terms.items():
            coeff = _value(coeff)
            for pm, pc in _substitute(c_matrix, m, cache).items():
                out._accumulate(pm, q, coeff * pc)
        return out

    def sphere_integral(self):
        """Integral over the unit sphere |xi| = 1; requires an identity norm."""
        if not np.allclose(self.norm, np.eye(self.dim)):
            raise DimensionMismatch("sphere integration needs the symbol in an orthonormal frame")
        table = moment_table(self.dim)
        total = 0j
        for (m, _q), c in self.terms.items():
            mom = table.moment(m)
            if mom:
                total = total + _value(c) * float(mom)
        return total * sphere_area(self.dim)

    def max_abs_coeff(self) -> float:
        vals = [np.max(np.abs(_value(c))) for c in self.terms.values()]
        return float(max(vals)) if vals else 0.0


def _max_floor(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return max(a, b)


def _poly_mul(p, q):
    out: dict = {}
    for ma, ca in p.items():
        for mb, cb in q.items():
            key = _mono_add(ma, mb)
            out[key] = out.get(key, 0) + ca * cb
    return out


def _qform_power(norm, k: int):
    """Polynomial (xi^T G xi)^k as {mono: coeff} for k >= 0."""
    dim = norm.shape[-1]
    result = {(0,) * dim: 1.0}
    if k == 0:
        return result
    qform = {}
    for a in range(dim):
        for b in range(a, dim):
            c = norm[..., a, b] * (1 if a == b else 2)
            if np.any(c):
                qform[_mono_add(_unit(dim, a), _unit(dim, b))] = c
    for _ in range(k):
        result = _poly_mul(result, qform)
    return result


def _substitute(c_matrix, mono, cache):
    """Expand prod_i (sum_j C_ij eta_j)^{m_i} as a polynomial in eta."""
    dim = len(mono)
    result = {(0,) * dim: 1.0}
    for i, power in enumerate(mono):
        if not power:
            continue
        key = (i, power)
        if key not in cache:
            lin = {_unit(dim, j): c_matrix[..., i, j] for j in range(dim) if np.any(c_matrix[..., i, j])}
            p = {(0,) * dim: 1.0}
            for _ in range(power):
                p = _poly_mul(p, lin)
            cache[key] = p
        result = _poly_mul(result, cache[key])
    return result


# ---------------------------------------------------------------------------
# local symbol fields

@dataclass
class SymbolField:
    """A symbol depending on x, available as local jets about any base point."""

    local: Callable[[np.ndarray], FullSymbol]
    dim: int

    def at(self, x) -> FullSymbol:
        return self.local(np.asarray(x, dtype=float))


def _binom(q: int, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= (q - j) / (j + 1)
    return out


def norm_power_field(form: Jet, q: int, coeff=1.0) -> FullSymbol:
    """Local expansion of ``coeff * (xi^T A(x) xi)^q`` for a matrix jet ``A``.

    The norm of the result is ``A`` at the base point.
    """
    a0 = np.real(form.value)
    dim = a0.shape[-1]
    space = form.space
    delta = form - Jet.constant(space, a0, form.order)
    dq = FullSymbol(dim, a0)
    for a in range(dim):
        for b in range(a, dim):
            c = delta[a, b] * (1 if a == b else 2)
            if not c.is_zero():
                dq._accumulate(_mono_add(_unit(dim, a), _unit(dim, b)), 0, c)
    one = Jet.constant(space, 1.0 + 0j)
    result = FullSymbol(dim, a0, {((0,) * dim, q): one * coeff})
    power = FullSymbol(dim, a0, {((0,) * dim, 0): one})
    for k in range(1, form.order + 1):
        power = power * dq
        b = _binom(q, k)
        if b == 0:
            break
        for (m, p), c in power.terms.items():
            result._accumulate(m, p + q - k, c * (b * coeff))
    return result


def metric_jet(metric: MetricField, x0, order: int = 2, frame=None):
    """Metric as a matrix jet about ``x0`` in linear coordinates ``x = x0 + frame @ y``."""
    x0 = np.asarray(x0, dtype=float)
    g, dg, ddg = metric.derivatives(x0)
    d = metric.dim
    e = np.eye(d) if frame is None else np.asarray(frame, dtype=float)
    g = e.T @ g @ e
    dg = np.einsum("ka,kij,ip,jq->apq", e, dg, e, e)
    ddg = np.einsum("ka,lb,klij,ip,jq->abpq", e, e, ddg, e, e)
    return Jet.from_derivatives(jetmod.jet_space(d, order), g, dg, ddg)


def _laplace_local(g_jet: Jet) -> FullSymbol:
    dim = g_jet.shape[-1]
    g_inv = jetmod.inverse(g_jet)
    dg = [g_jet.d(k) for k in range(dim)]  # d_k g_ij
    gamma_contracted = []
    for k in range(dim):
        total = None
        for i in range(dim):
            for j in range(dim):
                s_lij = [dg[i][j, l] + dg[j][i, l] - dg[l][i, j] for l in range(dim)]
                inner = sum((g_inv[k, l] * s_lij[l] for l in range(dim)), start=Jet.constant(g_jet.space, 0j)) * 0.5
                term = g_inv[i, j] * inner
                total = term if total is None else total + term
        gamma_contracted.append(total)
    p2 = FullSymbol(dim, np.real(g_inv.value))
    for a in range(dim):
        for b in range(a, dim):
            c = g_inv[a, b] * (1 if a == b else 2)
            p2._accumulate(_mono_add(_unit(dim, a), _unit(dim, b)), 0, c)
    for k in range(dim):
        c = gamma_contracted[k] * 1j
        p2._accumulate(_unit(dim, k), 0, c)
    return p2


def laplace_field(metric: MetricField, frame: str = "coordinate", order: int = 2) -> SymbolField:
    """Local symbol field of the Laplacian.

    ``frame="orthonormal"`` uses linear coordinates in which the metric is the
    identity at the base point, so the norm of every local symbol is ``I``.
    """

    def local(x0):
        e = None
        if frame == "orthonormal":
            _, e = orthonormal_frame(metric.eval(x0))
        elif frame != "coordinate":
            raise ValueError(f"unknown frame {frame!r}")
        return _laplace_local(metric_jet(metric, x0, order, e))

    return SymbolField(local, metric.dim)


def laplace_symbol(metric: MetricField, x) -> FullSymbol:
    """sigma_2 = g^{jl} xi_j xi_l, sigma_1 = i g^{jl} Gamma^a_{jl} xi_a, sigma_0 = 0."""
    g = metric.eval(x)
    g_inv = inverse_metric(g)
    ct = christoffel(metric, x)
    norm = g_inv if metric.signature == "riemannian" else np.eye(metric.dim)
    return FullSymbol.quadratic(g_inv, norm=norm) + FullSymbol.linear(ct.contracted, 1j, norm=norm)


def warped_laplace_symbol(gm: MetricField, gn: MetricField, cfg: WarpedConfig, x, frame=None) -> FullSymbol:
    """Symbol of the Laplacian of eps*g_M (+) f^2*g_N from the factor data.

    sigma_2 = |xi_M|^2 / eps + |xi_N|^2 / f^2 and sigma_1 collects the factor
    Christoffel traces plus the warp term -(i n / (eps f)) d_j f g_M^{jk} xi_k.
    The norm is the inverse of the Riemannian product metric.  With
    ``frame=C`` (``xi = C eta``, ``C`` block Cholesky factor of the product
    metric) the symbol is returned in orthonormal variables.
    """
    m, n = gm.dim, gn.dim
    x = np.asarray(x, dtype=float)
    xm, xn = x[..., :m], x[..., m:]
    eps = cfg.epsilon
    f = cfg.f(xm)
    df = cfg.grad_f(xm)
    gm_inv = inverse_metric(gm.eval(xm))
    gn_inv = inverse_metric(gn.eval(xn))
    d = m + n
    quad = np.zeros(x.shape[:-1] + (d, d))
    quad[..., :m, :m] = gm_inv / eps
    quad[..., m:, m:] = gn_inv / (f**2)[..., None, None]
    lin = np.zeros(x.shape[:-1] + (d,))
    lin[..., :m] = christoffel(gm, xm).contracted / eps
    lin[..., :m] -= (n / (eps * f))[..., None] * np.einsum("...j,...jk->...k", df, gm_inv)
    lin[..., m:] = christoffel(gn, xn).contracted / (f**2)[..., None]
    norm = np.zeros_like(quad)
    norm[..., :m, :m] = gm_inv
    norm[..., m:, m:] = gn_inv
    if frame is not None:
        c = np.asarray(frame, dtype=float)
        quad = np.einsum("...ai,...ab,...bj->...ij", c, quad, c)
        lin = np.einsum("...ai,...a->...i", c, lin)
        norm = np.eye(d)
    return FullSymbol.quadratic(quad, norm=norm) + FullSymbol.linear(lin, 1j, norm=norm)


# ---------------------------------------------------------------------------
# composition and parametrix

MAX_X_ORDER = 2


def _alphas(dim: int, order: int):
    if order == 0:
        return [((), 1.0)]
    out = []
    for combo in itertools.combinations_with_replacement(range(dim), order):
        counts = [combo.count(k) for k in set(combo)]
        fact = math.prod(math.factorial(c) for c in counts)
        out.append((combo, 1.0 / fact))
    return out


def compose(a, b, x=None, floor: int = -10**6, ceil: int | None = None,
            max_order: int = MAX_X_ORDER) -> FullSymbol:
    """Symbol of the operator product A o B, truncated to degrees in [floor, ceil].

    sum_{|alpha| <= max_order} (1/alpha!) d_xi^alpha A * (-i)^|alpha| d_x^alpha B,
    where the x-derivatives act on the jet coefficients of ``B``.
    """
    if isinstance(a, SymbolField):
        a = a.at(x)
    if isinstance(b, SymbolField):
        b = b.at(x)
    a._check(b)
    if max_order > MAX_X_ORDER:
        raise TruncationTooDeep(f"composition supports |alpha| <= {MAX_X_ORDER}")
    a_degs = a.degrees()
    b_degs = b.degrees()
    if not a_degs or not b_degs:
        return FullSymbol(a.dim, a.norm)
    top = a_degs[0] + b_degs[0]
    ceil = top if ceil is None else ceil
    needed = min(max_order, top - floor)
    if needed > max_order:
        raise TruncationTooDeep("requested floor needs x-derivatives beyond the supported order")
    result = FullSymbol(a.dim, a.norm)
    b_comps = {d: b.component(d) for d in b_degs}
    a_comps = {d: a.component(d) for d in a_degs}
    for order in range(0, max(0, needed) + 1):
        for combo, inv_fact in _alphas(a.dim, order):
            da_cache = {}
            for dega, comp_a in a_comps.items():
                for degb, comp_b in b_comps.items():
                    deg = dega + degb - order
                    if deg < floor or deg > ceil:
                        continue
                    if dega not in da_cache:
                        s = comp_a
                        for k in combo:
                            s = s.d_xi(k)
                        da_cache[dega] = s
                    left = da_cache[dega]
                    if left.is_zero():
                        continue
                    right = comp_b
                    for k in combo:
                        right = right.d_x(k)
                    if right.is_zero():
                        continue
                    product = left * right
                    result = result + product.scale(inv_fact * (-1j) ** order)
    return result


def _leading_form(p: FullSymbol) -> Jet | np.ndarray:
    """Quadratic-form matrix of the degree-2 polynomial part of ``p``."""
    dim = p.dim
    mats = [[None] * dim for _ in range(dim)]
    for (m, q), c in p.component(2).terms.items():
        if q != 0:
            raise NotElliptic("leading symbol must be a polynomial quadratic form")
        idx = [k for k in range(dim) for _ in range(m[k])]
        a, b = idx
        val = c if a == b else c * 0.5
        mats[a][b] = val
        mats[b][a] = val
    sample = next((c for row in mats for c in row if c is not None), None)
    if sample is None:
        raise NotElliptic("symbol has no degree-2 part")
    if isinstance(sample, Jet):
        space = sample.space
        zero = Jet.constant(space, 0j)
        coeffs = np.stack([np.stack([(mats[a][b] if mats[a][b] is not None else zero).c
                                     for b in range(dim)], axis=-1) for a in range(dim)], axis=-2)
        order = min(c.order for row in mats for c in row if c is not None)
        return Jet(space, coeffs, order)
    return np.array([[0 if mats[a][b] is None else mats[a][b] for b in range(dim)] for a in range(dim)])


def parametrix(a, x=None, depth: int = 4) -> FullSymbol:
    """q_{-2}, ..., q_{-depth} of the parametrix of an elliptic second-order symbol.

    q_{-2} = p_2^{-1} and q_{-2-j} = -p_2^{-1} * [degree -j part of p o (q_{-2} + ... + q_{-1-j})].
    """
    if depth not in (2, 3, 4):
        raise ValueError("parametrix depth must be 2, 3 or 4")
    if isinstance(a, SymbolField):
        a = a.at(x)
    form = _leading_form(a)
    if not isinstance(form, Jet):
        space = jetmod.jet_space(a.dim, 0)
        form = Jet.constant(space, form)
        a = FullSymbol(a.dim, a.norm, {k: Jet.constant(space, c) for k, c in a.terms.items()})
    a0 = np.real(form.value)
    if not np.allclose(np.imag(form.value), 0) or np.any(np.linalg.eigvalsh(a0) <= 0):
        raise NotElliptic("leading symbol is not positive definite")
    if not np.allclose(a0, a.norm, atol=1e-12):
        raise NotElliptic("symbol norm must equal the leading form at the base point")
    q2 = norm_power_field(form, -1)
    parts = [q2]
    for j in range(1, depth - 1):
        partial = parts[0]
        for extra in parts[1:]:
            partial = partial + extra
        r = compose(a, partial, floor=-j, ceil=-j)
        parts.append(-(q2 * r))
    total = parts[0]
    for extra in parts[1:]:
        total = total + extra
    return total


def lemma_q3(metric: MetricField, x) -> FullSymbol:
    """Closed form of q_{-3} in coordinates at x:

    -i |xi|^{-4} Gamma^k xi_k - 2i |xi|^{-6} xi^j xi_a xi_b d_j g^{ab}.
    """
    g = metric.eval(x)
    g_inv = inverse_metric(g)
    ct = christoffel(metric, x)
    dg = metric.d1(x)
    dg_inv = -np.einsum("ka,jab,bl->jkl", g_inv, dg, g_inv)  # d_j g^{kl}
    dim = metric.dim
    out = FullSymbol(dim, g_inv)
    for k in range(dim):
        out._accumulate(_unit(dim, k), -2, -1j * ct.contracted[k])
    # xi^j = g^{jc} xi_c
    for c in range(dim):
        for a in range(dim):
            for b in range(dim):
                coef = np.einsum("j,j->", g_inv[:, c], dg_inv[:, a, b])
                if coef:
                    mono = _mono_add(_mono_add(_unit(dim, c), _unit(dim, a)), _unit(dim, b))
                    out._accumulate(mono, -3, -2j * coef)
    return out


# ---------------------------------------------------------------------------
# normal-coordinate jets of the inverse power

@dataclass
class NormalJet:
    """Symbols of (Laplacian)^{-mbar} and their x-derivatives at a normal-coordinate centre."""

    mbar: int
    s0: FullSymbol
    s1: FullSymbol
    s2: FullSymbol
    d_s0: list
    d_s1: list
    dd_s0: list


def normal_jet(curv: CurvatureTensor, mbar: int) -> NormalJet:
    """Populate the jet from curvature contractions (identity norm, batched coefficients allowed).

    s0 = |xi|^{-2mbar};  s1 = 0;  s2 = mbar(mbar+1)/3 |xi|^{-2mbar-4} Ric(xi, xi);
    d_lambda s1 = -(2 mbar i / 3) |xi|^{-2mbar-2} sum_t Ric_{lambda t} xi_t;
    d_lambda d_nu s0 = -(2 mbar / 3) |xi|^{-2mbar-2} sum_ab R_{a lambda b nu} xi_a xi_b;
    d_lambda s0 = 0.
    """
    if mbar < 1:
        raise ValueError("mbar must be positive")
    r = curv.r
    dim = curv.dim
    ric = curv.ricci
    batch = r.shape[:-4]
    ones = np.ones(batch) if batch else 1.0
    norm = np.eye(dim)
    zero_mono = (0,) * dim

    def quad(mat, q, scale):
        s = FullSymbol(dim, norm)
        for a in range(dim):
            for b in range(a, dim):
                c = mat[..., a, b] + (mat[..., b, a] if a != b else 0)
                s._accumulate(_mono_add(_unit(dim, a), _unit(dim, b)), q, c * scale)
        return s

    def lin(vec, q, scale):
        s = FullSymbol(dim, norm)
        for t in range(dim):
            s._accumulate(_unit(dim, t), q, vec[..., t] * scale)
        return s

    s0 = FullSymbol(dim, norm, {(zero_mono, -mbar): ones})
    s2 = quad(ric, -mbar - 2, mbar * (mbar + 1) / 3)
    d_s1 = [lin(ric[..., lam, :], -mbar - 1, -2j * mbar / 3) for lam in range(dim)]
    dd_s0 = [[quad(r[..., :, lam, :, nu], -mbar - 1, -2 * mbar / 3) for nu in range(dim)]
             for lam in range(dim)]
    empty = FullSymbol(dim, norm)
    return NormalJet(mbar, s0, empty, s2, [FullSymbol(dim, norm) for _ in range(dim)], d_s1, dd_s0)


def inverse_power_jet(field: SymbolField, x, mbar: int) -> FullSymbol:
    """Local symbol of (Laplacian)^{-mbar} down to degree -2mbar-2 by repeated composition."""
    p = field.at(x)
    q = parametrix(p, depth=4)
    # the k-th power is only needed down to degree -2k-2
    power = q
    for k in range(2, mbar + 1):
        power = compose(q, power, floor=-2 * k - 2)
    return power.truncate(-2 * mbar - 2)


def parametrix_defect(metric: MetricField, x, depth: int = 4) -> dict[int, float]:
    """Largest canonical coefficient of (p o q) - 1 in degrees 0, -1, -2 at ``x``.

    ``q`` is the depth-4 parametrix of the coordinate Laplacian symbol ``p``;
    every value is zero for an exact parametrix.
    """
    field_ = laplace_field(metric)
    p = field_.at(x)
    q = parametrix(p, depth=depth)
    defect = compose(p, q, floor=-2) - FullSymbol.constant(p.dim, 1.0, p.norm)
    out = {}
    for degree in (0, -1, -2):
        _, poly = defect.canonical(degree)
        out[degree] = float(max((abs(v) for v in poly.values()), default=0.0))
    return out

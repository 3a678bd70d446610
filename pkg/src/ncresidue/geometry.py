"""Metrics on coordinate charts, warped products and their curvature.

Index conventions used throughout the package:

* ``dg[..., k, i, j] = d_k g_ij`` and ``ddg[..., k, l, i, j] = d_k d_l g_ij``.
* ``gamma[..., k, i, j]`` is the Christoffel symbol Gamma^k_ij.
* ``R_abcd = <R(d_c, d_d) d_b, d_a>`` with ``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]``.
  Then ``R_abab`` is the sectional curvature of the (a, b) plane, so the unit
  round S^n has ``sum_{a,b} R_abab = n(n - 1)``.  Ricci is ``R_jl = sum_c R_cjcl``.

Every evaluator is vectorized over leading point dimensions: ``x`` has shape
``(..., dim)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DerivativeUnavailable,
    DimensionMismatch,
    NonPositiveWarp,
    NotPositiveDefinite,
    SingularMetric,
)
from .exprlang import Expression

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class MetricField:
    """Evaluator of g_ij(x) on a single coordinate chart."""

    dim: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    first_deriv: Optional[Callable[[np.ndarray], np.ndarray]] = None
    second_deriv: Optional[Callable[[np.ndarray], np.ndarray]] = None
    deriv_mode: str = "analytic"
    fd_step: float = 1e-4
    fd_step2: float = 1e-3
    signature: str = "riemannian"
    bounds: tuple = ()
    periodic: tuple = ()
    name: str = "metric"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("metric dimension must be positive")
        if self.deriv_mode not in ("analytic", "fd"):
            raise ValueError(f"unknown derivative mode {self.deriv_mode!r}")
        if self.fd_step <= 0 or self.fd_step2 <= 0:
            raise ValueError("finite-difference steps must be positive")
        if self.signature not in ("riemannian", "indefinite"):
            raise ValueError(f"unknown signature {self.signature!r}")
        if not self.bounds:
            object.__setattr__(self, "bounds", tuple((0.0, 2 * np.pi) for _ in range(self.dim)))
        if not self.periodic:
            object.__setattr__(self, "periodic", tuple(False for _ in range(self.dim)))

    def _points(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DimensionMismatch(f"{self.name}: expected points of dimension {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("point coordinates must be finite")
        return x

    def eval(self, x) -> np.ndarray:
        x = self._points(x)
        return np.asarray(self.evaluator(x), dtype=float)

    __call__ = eval

    def with_mode(self, deriv_mode: str, fd_step: float | None = None, fd_step2: float | None = None):
        return dataclasses.replace(
            self,
            deriv_mode=deriv_mode,
            fd_step=self.fd_step if fd_step is None else fd_step,
            fd_step2=self.fd_step2 if fd_step2 is None else fd_step2,
        )

    # derivative access ---------------------------------------------------
    def d1(self, x) -> np.ndarray:
        x = self._points(x)
        if self.deriv_mode == "analytic":
            if self.first_deriv is None:
                raise DerivativeUnavailable(f"{self.name}: no analytic first derivative")
            return np.asarray(self.first_deriv(x), dtype=float)
        h = self.fd_step
        out = []
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            out.append((self.eval(x + e) - self.eval(x - e)) / (2 * h))
        return np.stack(out, axis=-3)

    def d2(self, x) -> np.ndarray:
        x = self._points(x)
        if self.deriv_mode == "analytic":
            if self.second_deriv is None:
                raise DerivativeUnavailable(f"{self.name}: no analytic second derivative")
            return np.asarray(self.second_deriv(x), dtype=float)
        h = self.fd_step2
        d = self.dim
        g0 = self.eval(x)
        out = np.zeros(x.shape[:-1] + (d, d, d, d))
        for k in range(d):
            ek = np.zeros(d)
            ek[k] = h
            out[..., k, k, :, :] = (self.eval(x + ek) - 2 * g0 + self.eval(x - ek)) / h**2
            for l in range(k + 1, d):
                el = np.zeros(d)
                el[l] = h
                val = (self.eval(x + ek + el) - self.eval(x + ek - el)
                       - self.eval(x - ek + el) + self.eval(x - ek - el)) / (4 * h**2)
                out[..., k, l, :, :] = val
                out[..., l, k, :, :] = val
        return out

    def derivatives(self, x):
        """Return ``(g, dg, ddg)`` at ``x`` in the configured derivative mode."""
        return self.eval(x), self.d1(x), self.d2(x)

    # sampling ------------------------------------------------------------
    def sample(self, rng: np.random.Generator, count: int, margin: float = 0.1) -> np.ndarray:
        """Random chart points away from non-periodic chart boundaries."""
        lo = np.array([b[0] for b in self.bounds], dtype=float)
        hi = np.array([b[1] for b in self.bounds], dtype=float)
        span = hi - lo
        pad = np.where(np.array(self.periodic), 0.0, margin * span)
        return lo + pad + rng.random((count, self.dim)) * (span - 2 * pad)


def expression_metric(entries, variables: Sequence[str] | None = None, *, bounds=(), periodic=(),
                      name: str = "custom", **kwargs) -> MetricField:
    """Metric whose entries are expression-language strings.

    ``entries`` is either a full square matrix of sources or a mapping
    ``{(i, j): source}`` (0-based, upper triangle suffices; missing entries are 0).
    Analytic first and second derivatives come from symbolic differentiation.
    """
    if isinstance(entries, dict):
        dim = 1 + max(max(k) for k in entries)
        table = {}
        for (i, j), src in entries.items():
            a, b = min(i, j), max(i, j)
            if (a, b) in table and table[(a, b)] != src:
                raise ValueError(f"entry ({i},{j}) given twice with different values")
            table[(a, b)] = src
    else:
        dim = len(entries)
        table = {}
        for i in range(dim):
            if len(entries[i]) != dim:
                raise DimensionMismatch("metric entry matrix must be square")
            for j in range(i, dim):
                table[(i, j)] = entries[i][j]
    variables = tuple(variables) if variables is not None else tuple(f"x{i + 1}" for i in range(dim))
    if len(variables) != dim:
        raise DimensionMismatch("number of variables must equal the metric dimension")
    exprs = {key: Expression(src, variables) for key, src in table.items()}

    def _fill(x, derivs):
        out = np.zeros(x.shape[:-1] + (dim, dim))
        for (i, j), e in exprs.items():
            if e.is_constant() and derivs:
                continue
            val = e(x, *derivs)
            out[..., i, j] = val
            out[..., j, i] = val
        return out

    def ev(x):
        return _fill(x, ())

    def d1(x):
        return np.stack([_fill(x, (k,)) for k in range(dim)], axis=-3)

    def d2(x):
        rows = [np.stack([_fill(x, (k, l)) for l in range(dim)], axis=-3) for k in range(dim)]
        return np.stack(rows, axis=-4)

    return MetricField(dim, ev, d1, d2, bounds=tuple(bounds), periodic=tuple(periodic),
                       name=name, **kwargs)


# ---------------------------------------------------------------------------
# basic tensors

def inverse_metric(g) -> np.ndarray:
    """Inverse of a symmetric matrix (or a stack of them)."""
    g = np.asarray(g, dtype=float)
    if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=1e-12, atol=1e-12):
        raise ValueError("metric matrix is not symmetric")
    cond = np.linalg.cond(g)
    if np.any(~np.isfinite(cond)) or np.any(cond > COND_LIMIT):
        raise SingularMetric(f"metric is singular or ill-conditioned (cond={np.max(cond):.3g})")
    return np.linalg.inv(g)


def orthonormal_frame(g) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(C, E)`` with ``g = C C^T`` (Cholesky) and ``E = C^{-T}``.

    The columns of ``E`` are a g-orthonormal tangent frame; cotangent vectors
    transform as ``xi = C eta`` so that ``|xi|_g = |eta|``.
    """
    try:
        c = np.linalg.cholesky(np.asarray(g, dtype=float))
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("metric is not positive definite") from None
    e = np.swapaxes(np.linalg.inv(c), -1, -2)
    return c, e


@dataclass
class ChristoffelTable:
    gamma: np.ndarray  # [..., k, i, j] = Gamma^k_ij
    contracted: np.ndarray  # [..., k] = g^ij Gamma^k_ij


@dataclass
class CurvatureTensor:
    """Orthonormal-frame Riemann components at one or more points."""

    r: np.ndarray  # [..., i, j, k, l]

    @property
    def dim(self) -> int:
        return self.r.shape[-1]

    @property
    def ricci(self) -> np.ndarray:
        return np.einsum("...cjcl->...jl", self.r)

    @property
    def scalar(self) -> np.ndarray:
        return np.einsum("...jj->...", self.ricci)

    def block_scalar(self, lo: int, hi: int) -> np.ndarray:
        """sum_{a, b in [lo, hi)} R_abab, the block trace used for factor curvatures."""
        sub = self.r[..., lo:hi, lo:hi, lo:hi, lo:hi]
        return np.einsum("...abab->...", sub)

    def __mul__(self, s):
        return CurvatureTensor(self.r * s)

    __rmul__ = __mul__


def _christoffel_from(g_inv, dg):
    s = dg[..., :, :, :]  # d_a g_bc
    # S_lij = d_i g_jl + d_j g_il - d_l g_ij
    s_lij = np.einsum("...ijl->...lij", s) + np.einsum("...jil->...lij", s) - s
    return 0.5 * np.einsum("...kl,...lij->...kij", g_inv, s_lij)


def christoffel(metric: MetricField, x) -> ChristoffelTable:
    g = metric.eval(x)
    g_inv = inverse_metric(g)
    dg = metric.d1(x)
    gamma = _christoffel_from(g_inv, dg)
    contracted = np.einsum("...ij,...kij->...k", g_inv, gamma)
    return ChristoffelTable(gamma, contracted)


def coordinate_riemann(metric: MetricField, x) -> np.ndarray:
    """All-lower coordinate components R_abcd (any signature)."""
    g, dg, ddg = metric.derivatives(x)
    g_inv = inverse_metric(g)
    gamma = _christoffel_from(g_inv, dg)
    # d_m S_lij
    ds = (np.einsum("...mijl->...mlij", ddg) + np.einsum("...mjil->...mlij", ddg)
          - ddg)
    s_lij = (np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg)
    dg_inv = -np.einsum("...ka,...mab,...bl->...mkl", g_inv, dg, g_inv)
    dgamma = 0.5 * (np.einsum("...mkl,...lij->...mkij", dg_inv, s_lij)
                    + np.einsum("...kl,...mlij->...mkij", g_inv, ds))
    # R^a_bcd = d_c Gamma^a_db - d_d Gamma^a_cb + Gamma^a_ce Gamma^e_db - Gamma^a_de Gamma^e_cb
    r_up = (np.einsum("...cadb->...abcd", dgamma) - np.einsum("...dacb->...abcd", dgamma)
            + np.einsum("...ace,...edb->...abcd", gamma, gamma)
            - np.einsum("...ade,...ecb->...abcd", gamma, gamma))
    return np.einsum("...ae,...ebcd->...abcd", g, r_up)


def riemann_orthonormal(metric: MetricField, x) -> CurvatureTensor:
    if metric.signature != "riemannian":
        raise NotPositiveDefinite(f"{metric.name}: curvature requires a Riemannian metric")
    g = metric.eval(x)
    _, e = orthonormal_frame(g)
    r = coordinate_riemann(metric, x)
    r_o = np.einsum("...abcd,...ai,...bj,...ck,...dl->...ijkl", r, e, e, e, e, optimize=True)
    return CurvatureTensor(r_o)


def scalar_curvature(metric: MetricField, x):
    return riemann_orthonormal(metric, x).scalar


# ---------------------------------------------------------------------------
# warped products

@dataclass
class WarpedConfig:
    """Parameters of the warped metric eps*g_M (+) f^2*g_N."""

    epsilon: float
    warp: Expression
    m_dim: int
    n_dim: int

    def __post_init__(self):
        if self.epsilon == 0:
            raise ValueError("epsilon must be nonzero")
        if self.m_dim < 1 or self.n_dim < 1:
            raise ValueError("factor dimensions must be positive")
        if not isinstance(self.warp, Expression):
            self.warp = Expression(self.warp, [f"x{i + 1}" for i in range(self.m_dim)])
        if len(self.warp.variables) != self.m_dim:
            raise DimensionMismatch("warp variables must match the base dimension")

    @classmethod
    def make(cls, epsilon, warp, m_dim, n_dim):
        return cls(float(epsilon), warp, m_dim, n_dim)

    def f(self, x_m):
        val = self.warp(x_m)
        if np.any(val <= 0):
            raise NonPositiveWarp(f"warp function {self.warp.source!r} is not positive at every point")
        return val

    def grad_f(self, x_m):
        return self.warp.gradient(x_m)

    def hess_f(self, x_m):
        return self.warp.hessian(x_m)

    def describe(self) -> str:
        return self.warp.source


@dataclass(frozen=True, eq=False)
class WarpedProduct:
    """A base/fiber pair with its warp data; ``metric()`` builds g^{eps,f}."""

    base: MetricField
    fiber: MetricField
    config: WarpedConfig

    def __post_init__(self):
        if self.config.m_dim != self.base.dim or self.config.n_dim != self.fiber.dim:
            raise DimensionMismatch("warped config dimensions disagree with the factors")

    @property
    def dim(self):
        return self.base.dim + self.fiber.dim

    def metric(self) -> MetricField:
        return build_warped_product(self.base, self.fiber, self.config)

    def product(self) -> MetricField:
        """The Riemannian product metric g = g_M (+) g_N."""
        cfg = WarpedConfig(1.0, Expression(1.0, self.config.warp.variables), self.base.dim, self.fiber.dim)
        return build_warped_product(self.base, self.fiber, cfg)

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., : self.base.dim], x[..., self.base.dim:]


def build_warped_product(gm: MetricField, gn: MetricField, cfg: WarpedConfig) -> MetricField:
    if cfg.m_dim != gm.dim or cfg.n_dim != gn.dim:
        raise DimensionMismatch("warped config dimensions disagree with the factors")
    m, n = gm.dim, gn.dim
    d = m + n
    eps = cfg.epsilon

    def ev(x):
        xm, xn = x[..., :m], x[..., m:]
        f = cfg.f(xm)
        out = np.zeros(x.shape[:-1] + (d, d))
        out[..., :m, :m] = eps * gm.eval(xm)
        out[..., m:, m:] = (f**2)[..., None, None] * gn.eval(xn)
        return out

    def d1(x):
        xm, xn = x[..., :m], x[..., m:]
        f = cfg.f(xm)
        df = cfg.grad_f(xm)
        gn0 = gn.eval(xn)
        out = np.zeros(x.shape[:-1] + (d, d, d))
        out[..., :m, :m, :m] = eps * gm.d1(xm)
        out[..., :m, m:, m:] = (2 * f[..., None] * df)[..., None, None] * gn0[..., None, :, :]
        out[..., m:, m:, m:] = (f**2)[..., None, None, None] * gn.d1(xn)
        return out

    def d2(x):
        xm, xn = x[..., :m], x[..., m:]
        f = cfg.f(xm)
        df = cfg.grad_f(xm)
        hf = cfg.hess_f(xm)
        gn0, gn1 = gn.eval(xn), gn.d1(xn)
        ddf2 = 2 * np.einsum("...k,...l->...kl", df, df) + 2 * f[..., None, None] * hf
        out = np.zeros(x.shape[:-1] + (d, d, d, d))
        out[..., :m, :m, :m, :m] = eps * gm.d2(xm)
        out[..., :m, :m, m:, m:] = ddf2[..., None, None] * gn0[..., None, None, :, :]
        cross = np.einsum("...k,...lij->...klij", 2 * f[..., None] * df, gn1)
        out[..., :m, m:, m:, m:] = cross
        out[..., m:, :m, m:, m:] = np.swapaxes(cross, -4, -3)
        out[..., m:, m:, m:, m:] = (f**2)[..., None, None, None, None] * gn.d2(xn)
        return out

    analytic = gm.deriv_mode == "analytic" and gn.deriv_mode == "analytic"
    return MetricField(
        d, ev, d1, d2,
        deriv_mode="analytic" if analytic else "fd",
        fd_step=min(gm.fd_step, gn.fd_step),
        fd_step2=min(gm.fd_step2, gn.fd_step2),
        signature="riemannian" if eps > 0 else "indefinite",
        bounds=tuple(gm.bounds) + tuple(gn.bounds),
        periodic=tuple(gm.periodic) + tuple(gn.periodic),
        name=f"{eps:g}*{gm.name} x_({cfg.describe()}) {gn.name}",
    )


def warped_christoffel_closed_form(gm: MetricField, gn: MetricField, cfg: WarpedConfig, x) -> ChristoffelTable:
    """Christoffel symbols of g^{eps,f} from the base/fiber connections.

    Blocks (i, j, k on the base; a, b, c on the fiber):
    Gamma^k_ij = Gamma^{M,k}_ij, Gamma^c_ia = Gamma^c_ai = (d_i f / f) delta^c_a,
    Gamma^k_ab = -(f / eps) (g_M^{-1} grad f)^k g^N_ab, Gamma^c_ab = Gamma^{N,c}_ab.
    """
    m, n = gm.dim, gn.dim
    x = np.asarray(x, dtype=float)
    xm, xn = x[..., :m], x[..., m:]
    f = cfg.f(xm)
    df = cfg.grad_f(xm)
    eps = cfg.epsilon
    cm = christoffel(gm, xm)
    cn = christoffel(gn, xn)
    gm_inv = inverse_metric(gm.eval(xm))
    gn0 = gn.eval(xn)
    d = m + n
    gamma = np.zeros(x.shape[:-1] + (d, d, d))
    gamma[..., :m, :m, :m] = cm.gamma
    gamma[..., m:, m:, m:] = cn.gamma
    mixed = (df / f[..., None])[..., :, None, None] * np.eye(n)  # [i, c, a]
    gamma[..., m:, :m, m:] = np.einsum("...ica->...cia", mixed)
    gamma[..., m:, m:, :m] = np.einsum("...ica->...cai", mixed)
    grad_up = np.einsum("...kj,...j->...k", gm_inv, df)
    gamma[..., :m, m:, m:] = -(f / eps)[..., None, None, None] * grad_up[..., :, None, None] * gn0[..., None, :, :]
    g_inv = np.zeros(x.shape[:-1] + (d, d))
    g_inv[..., :m, :m] = gm_inv / eps
    g_inv[..., m:, m:] = inverse_metric(gn0) / (f**2)[..., None, None]
    contracted = np.einsum("...ij,...kij->...k", g_inv, gamma)
    return ChristoffelTable(gamma, contracted)

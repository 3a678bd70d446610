"""Oracle checks run by ``ncresidue check`` on a configured geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import residue, symbols
from .geometry import (
    MetricField,
    WarpedConfig,
    WarpedProduct,
    christoffel,
    riemann_orthonormal,
    warped_christoffel_closed_form,
)
from .moments import integrate_polynomial_over_sphere, monomial_moment, sphere_area


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}: {self.value:.3e} (tol {self.tolerance:.1e})"
        return text + (f"  {self.detail}" if self.detail else "")


def _result(name, value, tol, detail=""):
    value = float(value)
    return CheckResult(name, bool(value <= tol), value, tol, detail)


def curvature_symmetries(r: np.ndarray) -> float:
    """Largest violation of antisymmetry, pair symmetry and the first Bianchi identity."""
    anti1 = r + np.swapaxes(r, -4, -3)
    anti2 = r + np.swapaxes(r, -2, -1)
    pair = r - np.einsum("...abcd->...cdab", r)
    bianchi = r + np.einsum("...abcd->...acdb", r) + np.einsum("...abcd->...adbc", r)
    return float(max(np.max(np.abs(t), initial=0.0) for t in (anti1, anti2, pair, bianchi)))


def expected_scalar(metric: MetricField) -> float | None:
    """Scalar curvature of the standard charts, n(n-1)/r^2 for round spheres."""
    name = metric.name
    if name.startswith("circle") or name.startswith("torus"):
        return 0.0
    if name.startswith("sphere("):
        dim_s, r_s = name[len("sphere("):-1].split(",")
        k = int(dim_s)
        return k * (k - 1) / float(r_s) ** 2
    return None


def run_checks(gm: MetricField, gn: MetricField, cfg: WarpedConfig, samples: int = 8,
               seed: int = 0) -> list[CheckResult]:
    analytic = gm.deriv_mode == "analytic"
    tol_geo = 1e-6 if analytic else 1e-4
    tol_density = 1e-6 if analytic else 1e-3
    rng = np.random.default_rng(seed)
    wp = WarpedProduct(gm, gn, cfg)
    warped = wp.metric()
    xs = warped.sample(rng, samples)
    xm, xn = wp.split(xs)
    out = []

    closed = warped_christoffel_closed_form(gm, gn, cfg, xs)
    generic = christoffel(warped, xs)
    out.append(_result("warped Christoffel closed form vs generic",
                       np.max(np.abs(closed.gamma - generic.gamma)), tol_geo))
    out.append(_result("warped contracted Christoffel closed form vs generic",
                       np.max(np.abs(closed.contracted - generic.contracted)), tol_geo))

    for label, metric, pts in (("M", gm, xm), ("N", gn, xn), ("M x N", wp.product(), xs)):
        curv = riemann_orthonormal(metric, pts)
        out.append(_result(f"curvature symmetries on {label}", curvature_symmetries(curv.r), tol_geo))
    for label, metric, pts in (("M", gm, xm), ("N", gn, xn)):
        expect = expected_scalar(metric)
        s = riemann_orthonormal(metric, pts).scalar
        if expect is None:
            out.append(CheckResult(f"scalar curvature of {label}", True, float(np.mean(s)), 0.0,
                                   "no reference value for a custom chart"))
        else:
            out.append(_result(f"scalar curvature of {label} = {expect:g}", np.max(np.abs(s - expect)),
                               tol_geo, f"{metric.name}"))

    d = gm.dim + gn.dim
    quad = monomial_moment((2,) + (0,) * (d - 1))
    out.append(_result(f"moment of xi_1^2 on S^{d - 1} is 1/{d}", abs(float(quad) - 1 / d), 0.0))
    eye = {tuple(2 if k == j else 0 for k in range(d)): 1.0 for j in range(d)}
    area = sphere_area(d)
    out.append(_result("integral of |xi|^2 equals the sphere area",
                       abs(integrate_polynomial_over_sphere(eye, d) - area) / area, 1e-14))
    quartic = {}
    for a in range(d):
        for b in range(d):
            key = tuple((k == a) * 2 + (k == b) * 2 for k in range(d))
            quartic[key] = quartic.get(key, 0.0) + 1.0
    out.append(_result("integral of |xi|^4 equals the sphere area",
                       abs(integrate_polynomial_over_sphere(quartic, d) - area) / area, 1e-14))

    worst = 0.0
    for x in xs[: min(3, samples)]:
        defect = symbols.parametrix_defect(wp.product(), x)
        worst = max(worst, *defect.values())
    out.append(_result("parametrix composition identity through degree -2", worst,
                       1e-6 if analytic else 1e-3))

    terms = residue.point_terms(wp, xs)
    assembled = residue.assembled_density(terms)
    closed_d = residue.point_closed_form(wp, xs)
    gap = np.abs(assembled - closed_d) / np.maximum(np.abs(closed_d), 1.0)
    out.append(_result("six-term density vs closed form", np.max(gap), tol_density))
    vanishing = np.max(np.abs(terms.as_array()[:, [0, 1, 4]]))
    out.append(_result("terms I, II and V vanish", vanishing, 1e-10))
    return out

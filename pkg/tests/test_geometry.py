import math

import numpy as np
import pytest

from ncresidue import charts
from ncresidue.checks import curvature_symmetries
from ncresidue.errors import NonPositiveWarp, NotPositiveDefinite, SingularMetric
from ncresidue.geometry import (
    WarpedConfig,
    WarpedProduct,
    christoffel,
    coordinate_riemann,
    expression_metric,
    inverse_metric,
    orthonormal_frame,
    riemann_orthonormal,
    scalar_curvature,
    warped_christoffel_closed_form,
)

from oracles import symbolic_riemann, symbolic_scalar

CUSTOM_2D = [["1", "0"], ["0", "(2 + sin(x1))^2"]]
CUSTOM_3D = [["1 + x2^2", "0.3*x1", "0"],
             ["0.3*x1", "2 + cos(x1)", "0.1*x2*x3"],
             ["0", "0.1*x2*x3", "1.5 + 0.2*sin(x1 + x3)"]]


def test_sphere2_christoffels(rng):
    s2 = charts.sphere(2)
    x = s2.sample(rng, 10)
    t = christoffel(s2, x)
    th = x[:, 0]
    np.testing.assert_allclose(t.gamma[:, 0, 1, 1], -np.sin(th) * np.cos(th), atol=1e-13)
    np.testing.assert_allclose(t.gamma[:, 1, 0, 1], np.cos(th) / np.sin(th), atol=1e-13)
    np.testing.assert_allclose(t.gamma[:, 1, 1, 0], np.cos(th) / np.sin(th), atol=1e-13)
    np.testing.assert_allclose(t.gamma[:, 0, 0, 0], 0, atol=1e-13)


def test_christoffel_fd_mode_matches_analytic(rng):
    s2 = charts.sphere(2)
    x = s2.sample(rng, 10)
    a = christoffel(s2, x).gamma
    f = christoffel(s2.with_mode("fd"), x).gamma
    np.testing.assert_allclose(a, f, atol=1e-7)


@pytest.mark.parametrize("metric, expected", [
    (charts.circle(), 0.0), (charts.circle(3.0), 0.0), (charts.torus(2), 0.0), (charts.torus(3), 0.0),
    (charts.sphere(2), 2.0), (charts.sphere(3), 6.0), (charts.sphere(4, 2.0), 3.0), (charts.sphere(5), 20.0),
])
@pytest.mark.parametrize("mode, tol", [("analytic", 1e-9), ("fd", 1e-4)])
def test_scalar_curvature_of_standard_charts(metric, expected, mode, tol, rng):
    x = metric.sample(rng, 12)
    s = scalar_curvature(metric.with_mode(mode), x)
    np.testing.assert_allclose(s, expected, atol=tol)


def test_unit_sphere3_constant_curvature(rng):
    s3 = charts.sphere(3)
    r = riemann_orthonormal(s3, s3.sample(rng, 5)).r
    eye = np.eye(3)
    expected = np.einsum("ac,bd->abcd", eye, eye) - np.einsum("ad,bc->abcd", eye, eye)
    np.testing.assert_allclose(r, np.broadcast_to(expected, r.shape), atol=1e-12)


@pytest.mark.parametrize("entries", [CUSTOM_2D, CUSTOM_3D])
def test_riemann_matches_symbolic_oracle(entries, rng):
    # [DERIVED] sympy differentiation of the textbook formulas
    dim = len(entries)
    metric = expression_metric(entries, bounds=[(0.1, 1.0)] * dim)
    for x in rng.uniform(0.1, 1.0, size=(5, dim)):
        np.testing.assert_allclose(coordinate_riemann(metric, x), symbolic_riemann(entries, x), atol=1e-10)
        assert scalar_curvature(metric, x) == pytest.approx(symbolic_scalar(entries, x), abs=1e-10)
        fd = scalar_curvature(metric.with_mode("fd"), x)
        assert fd == pytest.approx(symbolic_scalar(entries, x), abs=1e-4)


def _warped_s1_s3(eps=1.0, warp="2 + 0.3*sin(x1)", mode="analytic"):
    gm, gn = charts.circle(deriv_mode=mode), charts.sphere(3, deriv_mode=mode)
    return WarpedProduct(gm, gn, WarpedConfig(eps, warp, 1, 3))


@pytest.mark.parametrize("metric", [charts.sphere(2), charts.sphere(3), charts.torus(2),
                                    _warped_s1_s3().metric(), expression_metric(CUSTOM_3D, bounds=[(0.1, 1)] * 3)])
def test_riemann_symmetries(metric, rng):
    x = metric.sample(rng, 10)
    r = riemann_orthonormal(metric, x).r if metric.signature == "riemannian" else coordinate_riemann(metric, x)
    assert curvature_symmetries(r) <= 1e-9
    assert curvature_symmetries(coordinate_riemann(metric.with_mode("fd"), x)) <= 1e-4


@pytest.mark.parametrize("eps, warp", [(1, "1"), (2, "3"), (-1, "2"), (1, "2 + 0.3*sin(x1)")])
def test_warped_christoffel_closed_form_on_s1_s3(eps, warp, rng):
    wp = _warped_s1_s3(eps, warp)
    x = wp.metric().sample(rng, 50)
    closed = warped_christoffel_closed_form(wp.base, wp.fiber, wp.config, x)
    generic = christoffel(wp.metric(), x)
    assert np.max(np.abs(closed.gamma - generic.gamma)) <= 1e-10
    assert np.max(np.abs(closed.contracted - generic.contracted)) <= 1e-10


def test_warped_christoffel_closed_form_two_dimensional_base(rng):
    gm, gn = charts.sphere(2), charts.sphere(2, 1.5)
    cfg = WarpedConfig(0.7, "1.5 + 0.2*cos(x1)*sin(x2)", 2, 2)
    wp = WarpedProduct(gm, gn, cfg)
    x = wp.metric().sample(rng, 20)
    closed = warped_christoffel_closed_form(gm, gn, cfg, x)
    np.testing.assert_allclose(closed.gamma, christoffel(wp.metric(), x).gamma, atol=1e-10)


def test_warped_scalar_curvature_formula(rng):
    # [DERIVED] S = S_M - 2n (Delta f)/f + S_N / f^2 - n(n-1) |grad f|^2 / f^2 on a Riemannian warped product
    wp = _warped_s1_s3(1.0, "2 + 0.3*sin(x1)")
    x = wp.metric().sample(rng, 10)
    t = x[:, 0]
    f = 2 + 0.3 * np.sin(t)
    fp, fpp = 0.3 * np.cos(t), -0.3 * np.sin(t)
    n = 3
    expected = -2 * n * fpp / f + 6 / f**2 - n * (n - 1) * fp**2 / f**2
    np.testing.assert_allclose(scalar_curvature(wp.metric(), x), expected, rtol=1e-10)


def test_lorentzian_warped_metric_is_indefinite(rng):
    wp = _warped_s1_s3(-1.0, "2")
    g = wp.metric()
    assert g.signature == "indefinite"
    with pytest.raises(NotPositiveDefinite):
        riemann_orthonormal(g, g.sample(rng, 1))


def test_orthonormal_frame(rng):
    s3 = charts.sphere(3)
    g = s3.eval(s3.sample(rng, 4))
    c, e = orthonormal_frame(g)
    np.testing.assert_allclose(c @ np.swapaxes(c, -1, -2), g, atol=1e-13)
    np.testing.assert_allclose(np.swapaxes(e, -1, -2) @ g @ e, np.broadcast_to(np.eye(3), g.shape), atol=1e-13)
    with pytest.raises(NotPositiveDefinite):
        orthonormal_frame(np.diag([1.0, -1.0]))


def test_singular_metric():
    with pytest.raises(SingularMetric):
        inverse_metric(np.diag([1.0, 0.0]))


def test_nonpositive_warp():
    cfg = WarpedConfig(1.0, "sin(x1)", 1, 3)
    with pytest.raises(NonPositiveWarp):
        cfg.f(np.array([[4.0]]))


def test_zero_epsilon_rejected():
    with pytest.raises(ValueError):
        WarpedConfig(0.0, "1", 1, 1)


def test_warped_metric_blocks(rng):
    wp = _warped_s1_s3(2.0, "2 + 0.3*sin(x1)")
    x = wp.metric().sample(rng, 3)
    g = wp.metric().eval(x)
    f = 2 + 0.3 * np.sin(x[:, 0])
    np.testing.assert_allclose(g[:, 0, 0], 2.0)
    np.testing.assert_allclose(g[:, 1:, 1:], f[:, None, None] ** 2 * charts.sphere(3).eval(x[:, 1:]))
    np.testing.assert_allclose(g[:, 0, 1:], 0)
    assert math.isclose(wp.product().eval(x)[0, 0, 0], 1.0)

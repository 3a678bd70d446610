import itertools

import numpy as np
import pytest

from ncresidue import charts
from ncresidue import symbols as S
from ncresidue.errors import DimensionMismatch, NotElliptic
from ncresidue.geometry import expression_metric, riemann_orthonormal

CUSTOM_3D = [["1 + x2^2", "0.3*x1", "0"],
             ["0.3*x1", "2 + cos(x1)", "0.1*x2*x3"],
             ["0", "0.1*x2*x3", "1.5 + 0.2*sin(x1 + x3)"]]


def curved_metrics():
    return [charts.sphere(3), charts.sphere(2, 1.7), expression_metric(CUSTOM_3D, bounds=[(0.1, 1.0)] * 3)]


def random_xi(rng, dim, count=6):
    return rng.normal(size=(count, dim))


@pytest.mark.parametrize("metric", curved_metrics())
@pytest.mark.parametrize("mode, tol", [("analytic", 1e-7), ("fd", 1e-6)])
def test_parametrix_composition_is_identity(metric, mode, tol, rng):
    for x in metric.sample(rng, 3):
        defect = S.parametrix_defect(metric.with_mode(mode), x)
        assert max(defect.values()) <= tol


@pytest.mark.parametrize("metric", curved_metrics())
def test_leading_parametrix_term_is_inverse_norm(metric, rng):
    x = metric.sample(rng, 1)[0]
    q = S.parametrix(S.laplace_field(metric), x, depth=2)
    xi = random_xi(rng, metric.dim)
    g_inv = np.linalg.inv(metric.eval(x))
    expected = 1 / np.einsum("ka,ab,kb->k", xi, g_inv, xi)
    np.testing.assert_allclose(q.component(-2).at_base().evaluate(xi), expected, rtol=1e-13)


@pytest.mark.parametrize("metric", curved_metrics())
def test_q3_matches_closed_form(metric, rng):
    for x in metric.sample(rng, 3):
        q = S.parametrix(S.laplace_field(metric), x, depth=4)
        xi = random_xi(rng, metric.dim)
        got = q.component(-3).at_base().evaluate(xi)
        want = S.lemma_q3(metric, x).evaluate(xi)
        assert np.max(np.abs(got - want)) <= 1e-10


def test_d_xi_matches_finite_differences(rng):
    s3 = charts.sphere(3)
    x = s3.sample(rng, 1)[0]
    q = S.parametrix(S.laplace_field(s3), x, depth=4).at_base()
    xi = random_xi(rng, 3, 4)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (q.evaluate(xi + e) - q.evaluate(xi - e)) / (2 * h)
        np.testing.assert_allclose(q.d_xi(k).evaluate(xi), fd, rtol=1e-6, atol=1e-8)


def test_pointwise_product_evaluates_to_product(rng):
    norm = np.array([[2.0, 0.3], [0.3, 1.0]])
    a = S.FullSymbol(2, norm, {((1, 0), -1): 2.0, ((0, 2), 0): -1.0})
    b = S.FullSymbol(2, norm, {((0, 1), -2): 0.5j, ((0, 0), 1): 3.0})
    xi = random_xi(rng, 2)
    np.testing.assert_allclose((a * b).evaluate(xi), a.evaluate(xi) * b.evaluate(xi), rtol=1e-13)
    np.testing.assert_allclose((a + b).evaluate(xi), a.evaluate(xi) + b.evaluate(xi), rtol=1e-13)


def test_degrees_and_components():
    a = S.FullSymbol(2, None, {((1, 0), -1): 2.0, ((0, 2), 0): -1.0, ((0, 0), -2): 1.0})
    assert a.degrees() == [2, -1, -4]
    assert len(a.component(-1)) == 1
    assert a.truncate(-2).degrees() == [2, -1]


def test_to_frame_substitution(rng):
    s3 = charts.sphere(3)
    x = s3.sample(rng, 1)[0]
    g = s3.eval(x)
    q = S.parametrix(S.laplace_field(s3), x, depth=4).at_base()
    c = np.linalg.cholesky(g)
    framed = q.to_frame(c)
    eta = random_xi(rng, 3)
    np.testing.assert_allclose(framed.evaluate(eta), q.evaluate(eta @ c.T), rtol=1e-12)
    with pytest.raises(DimensionMismatch):
        q.to_frame(np.eye(3) * 3)


def test_compose_with_unit_is_identity_map(rng):
    s2 = charts.sphere(2)
    x = s2.sample(rng, 1)[0]
    p = S.laplace_field(s2).at(x)
    one = S.FullSymbol.constant(2, 1.0, p.norm)
    xi = random_xi(rng, 2)
    np.testing.assert_allclose(S.compose(p, one).evaluate(xi), p.evaluate(xi))
    np.testing.assert_allclose(S.compose(one, p).evaluate(xi), p.evaluate(xi))


def test_coordinate_laplace_symbol(rng):
    s2 = charts.sphere(2)
    x = s2.sample(rng, 1)[0]
    p = S.laplace_symbol(s2, x)
    xi = random_xi(rng, 2)
    g_inv = np.linalg.inv(s2.eval(x))
    gamma_up = np.array([-np.cos(x[0]) / np.sin(x[0]), 0.0])  # g^{jk} Gamma^a_jk on the round sphere
    expected = np.einsum("ka,ab,kb->k", xi, g_inv, xi) + 1j * xi @ gamma_up
    np.testing.assert_allclose(p.evaluate(xi), expected, rtol=1e-12)


def test_non_elliptic_symbol_rejected():
    bad = S.FullSymbol.quadratic(np.diag([1.0, -1.0]), norm=np.eye(2))
    with pytest.raises(NotElliptic):
        S.parametrix(bad)


def test_mismatched_symbols():
    with pytest.raises(DimensionMismatch):
        S.FullSymbol(2) + S.FullSymbol(3)
    with pytest.raises(DimensionMismatch):
        S.FullSymbol(2) * S.FullSymbol(2, np.diag([1.0, 2.0]))


# -- normal-coordinate jet ---------------------------------------------------------

def constant_curvature_blocks(sizes, kappas):
    dim = sum(sizes)
    r = np.zeros((dim,) * 4)
    start = 0
    for size, k in zip(sizes, kappas):
        idx = range(start, start + size)
        for a, b in itertools.permutations(idx, 2):
            r[a, b, a, b] += k
            r[a, b, b, a] -= k
        start += size
    return r


def normal_coordinate_metric(r):
    """g_ij = delta_ij - (1/3) R_iajb x^a x^b, exact through second order at the origin."""
    dim = r.shape[0]
    entries = [["0"] * dim for _ in range(dim)]
    for i in range(dim):
        for j in range(dim):
            parts = ["1"] if i == j else ["0"]
            for a in range(dim):
                for b in range(dim):
                    c = r[i, a, j, b] / 3
                    if c:
                        parts.append(f"{-float(c)!r}*x{a + 1}*x{b + 1}")
            entries[i][j] = " + ".join(parts)
    return expression_metric(entries, bounds=[(-0.5, 0.5)] * dim)


@pytest.mark.parametrize("sizes, kappas", [((2, 2), (1.0, 0.5)), ((1, 3), (0.0, 1.0)), ((3, 3), (1.0, -0.5))])
def test_normal_jet_matches_composed_inverse_power(sizes, kappas, rng):
    r = constant_curvature_blocks(sizes, kappas)
    metric = normal_coordinate_metric(r)
    dim = metric.dim
    mbar = dim // 2
    origin = np.zeros(dim)
    curv = riemann_orthonormal(metric, origin)
    np.testing.assert_allclose(curv.r, r, atol=1e-12)

    jet = S.normal_jet(curv, mbar)
    power = S.inverse_power_jet(S.laplace_field(metric), origin, mbar)
    top, mid, low = (power.component(-2 * mbar - k) for k in (0, 1, 2))
    xi = random_xi(rng, dim)
    close = lambda a, b: np.testing.assert_allclose(a.evaluate(xi), b.evaluate(xi), atol=1e-10)
    close(top.at_base(), jet.s0)
    close(mid.at_base(), jet.s1)
    close(low.at_base(), jet.s2)
    for lam in range(dim):
        close(top.d_x(lam).at_base(), jet.d_s0[lam])
        close(mid.d_x(lam).at_base(), jet.d_s1[lam])
        for nu in range(dim):
            close(top.d_x(lam).d_x(nu).at_base(), jet.dd_s0[lam][nu])

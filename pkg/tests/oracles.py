"""Independent reference computations used by several test modules."""

import functools

import numpy as np
import sympy as sp


@functools.lru_cache(maxsize=None)
def _symbolic_riemann(entries: tuple, dim: int):
    xs = sp.symbols(f"x1:{dim + 1}")
    g = sp.Matrix(dim, dim, lambda i, j: sp.sympify(entries[i][j].replace("^", "**"), locals=dict(zip(
        [f"x{k + 1}" for k in range(dim)], xs))))
    ginv = g.inv(method="LU")
    gam = [[[sum(ginv[a, l] * (sp.diff(g[l, b], xs[c]) + sp.diff(g[l, c], xs[b]) - sp.diff(g[b, c], xs[l]))
                 for l in range(dim)) / 2 for c in range(dim)] for b in range(dim)] for a in range(dim)]
    r_up = {}
    for a in range(dim):
        for b in range(dim):
            for c in range(dim):
                for d in range(dim):
                    expr = sp.diff(gam[a][d][b], xs[c]) - sp.diff(gam[a][c][b], xs[d])
                    expr += sum(gam[a][c][e] * gam[e][d][b] - gam[a][d][e] * gam[e][c][b] for e in range(dim))
                    r_up[a, b, c, d] = expr
    low = [[[[sum(g[a, e] * r_up[e, b, c, d] for e in range(dim)) for d in range(dim)]
             for c in range(dim)] for b in range(dim)] for a in range(dim)]
    ric = [[sum(ginv[c, d] * low[c][j][d][l] for c in range(dim) for d in range(dim))
            for l in range(dim)] for j in range(dim)]
    scalar = sum(ginv[j, l] * ric[j][l] for j in range(dim) for l in range(dim))
    return (sp.lambdify(xs, sp.Array(low), "numpy", cse=True), sp.lambdify(xs, scalar, "numpy", cse=True))


def symbolic_riemann(entries, x):
    """All-lower R_abcd by sympy, R^a_bcd = d_c G^a_db - d_d G^a_cb + G^a_ce G^e_db - G^a_de G^e_cb."""
    entries = tuple(tuple(row) for row in entries)
    fn, _ = _symbolic_riemann(entries, len(entries))
    return np.array(fn(*x), dtype=float)


def symbolic_scalar(entries, x):
    entries = tuple(tuple(row) for row in entries)
    _, fn = _symbolic_riemann(entries, len(entries))
    return float(fn(*x))

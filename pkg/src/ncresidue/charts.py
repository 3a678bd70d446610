"""Standard single-chart manifolds: circle(r), torus(k), sphere(n, r) and custom."""

from __future__ import annotations

import math
import re

from .errors import ConfigError
from .geometry import MetricField, expression_metric

TWO_PI = 2 * math.pi


def circle(r: float = 1.0, **kwargs) -> MetricField:
    if r <= 0:
        raise ValueError("circle radius must be positive")
    return expression_metric([[repr(float(r) ** 2)]], bounds=[(0.0, TWO_PI)], periodic=[True],
                             name=f"circle({r:g})", **kwargs)


def torus(k: int = 1, **kwargs) -> MetricField:
    """Flat torus R^k / (2 pi Z)^k."""
    if k < 1:
        raise ValueError("torus dimension must be positive")
    entries = [["1" if i == j else "0" for j in range(k)] for i in range(k)]
    return expression_metric(entries, bounds=[(0.0, TWO_PI)] * k, periodic=[True] * k,
                             name=f"torus({k})", **kwargs)


def sphere(n: int = 2, r: float = 1.0, **kwargs) -> MetricField:
    """Round S^n of radius r in hyperspherical coordinates.

    g = r^2 (dx1^2 + sin^2 x1 dx2^2 + ... + sin^2 x1 ... sin^2 x_{n-1} dx_n^2)
    with x1..x_{n-1} in (0, pi) and x_n periodic in [0, 2 pi).
    """
    if n < 1:
        raise ValueError("sphere dimension must be positive")
    if n == 1:
        return circle(r, **kwargs)
    if r <= 0:
        raise ValueError("sphere radius must be positive")
    r2 = repr(float(r) ** 2)
    entries = [["0"] * n for _ in range(n)]
    for i in range(n):
        factors = [r2] + [f"sin(x{j + 1})^2" for j in range(i)]
        entries[i][i] = " * ".join(factors)
    bounds = [(0.0, math.pi)] * (n - 1) + [(0.0, TWO_PI)]
    periodic = [False] * (n - 1) + [True]
    return expression_metric(entries, bounds=bounds, periodic=periodic, name=f"sphere({n}, {r:g})", **kwargs)


def custom(entries, bounds, periodic=None, name="custom", **kwargs) -> MetricField:
    dim = len(entries) if not isinstance(entries, dict) else 1 + max(max(k) for k in entries)
    periodic = periodic if periodic is not None else [False] * dim
    return expression_metric(entries, bounds=bounds, periodic=periodic, name=name, **kwargs)


_CALL = re.compile(r"^\s*([a-z]+)\s*(?:\((.*)\))?\s*$")


def from_spec(spec: str, **kwargs) -> MetricField:
    """Build a standard chart from ``"circle(r)"``, ``"torus(k)"`` or ``"sphere(n, r)"``."""
    m = _CALL.match(spec)
    if not m:
        raise ConfigError(f"bad chart spec {spec!r}")
    kind, args = m.group(1), m.group(2)
    try:
        values = [float(a) for a in args.split(",")] if args and args.strip() else []
    except ValueError:
        raise ConfigError(f"bad chart arguments in {spec!r}") from None
    if kind == "circle":
        return circle(*values, **kwargs)
    if kind == "torus":
        return torus(*(int(v) for v in values), **kwargs)
    if kind == "sphere":
        if values:
            values[0] = int(values[0])
        return sphere(*values, **kwargs)
    raise ConfigError(f"unknown chart kind {kind!r} (expected circle, torus, sphere or custom)")

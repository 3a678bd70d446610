"""Run configuration: INI files with dotted sections.

    [run]         mode, epsilon, warp, deriv_mode, fd_step
    [factor.M]    kind = circle | torus | sphere | custom, plus radius / dim / entries
    [factor.N]    same keys as factor.M
    [grid]        M, N (nodes per axis, or comma-separated per-axis lists)
    [tolerances]  rel, abs, convergence
    [output]      json, csv, nodes
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import charts
from .errors import ConfigError
from .geometry import MetricField, WarpedConfig
from .residue import Tolerances

MODES = ("assembled", "closed", "verify")
MIN_NODES = 8


@dataclass
class FactorSpec:
    kind: str
    radius: float = 1.0
    dim: int = 1
    entries: list | None = None
    bounds: list | None = None
    periodic: list | None = None

    def build(self, deriv_mode="analytic", fd_step=None) -> MetricField:
        kwargs = {"deriv_mode": deriv_mode}
        if fd_step is not None:
            kwargs["fd_step"] = fd_step
        if self.kind == "circle":
            return charts.circle(self.radius, **kwargs)
        if self.kind == "torus":
            return charts.torus(self.dim, **kwargs)
        if self.kind == "sphere":
            return charts.sphere(self.dim, self.radius, **kwargs)
        return charts.custom(self.entries, self.bounds, self.periodic, **kwargs)


@dataclass
class RunConfig:
    factor_m: FactorSpec
    factor_n: FactorSpec
    epsilon: float = 1.0
    warp: str = "1"
    mode: str = "verify"
    grid_m: tuple = (48,)
    grid_n: tuple = (48,)
    deriv_mode: str = "analytic"
    fd_step: float | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    json_path: str | None = None
    csv_path: str | None = None
    include_nodes: bool = False
    source: str | None = None

    def factors(self) -> tuple[MetricField, MetricField]:
        return (self.factor_m.build(self.deriv_mode, self.fd_step),
                self.factor_n.build(self.deriv_mode, self.fd_step))

    def warped_config(self) -> WarpedConfig:
        return WarpedConfig(self.epsilon, self.warp, self.factor_m.dim, self.factor_n.dim)

    def validate(self) -> "RunConfig":
        m, n = self.factor_m.dim, self.factor_n.dim
        if (m + n) % 2:
            raise ConfigError(f"m + n = {m + n} must be even")
        if self.epsilon == 0 or not math.isfinite(self.epsilon):
            raise ConfigError("epsilon must be a finite nonzero number")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if self.deriv_mode not in ("analytic", "fd"):
            raise ConfigError("deriv_mode must be analytic or fd")
        for name, counts, dim in (("M", self.grid_m, m), ("N", self.grid_n, n)):
            if len(counts) not in (1, dim):
                raise ConfigError(f"grid {name}: give one count or {dim} counts")
            if min(counts) < MIN_NODES:
                raise ConfigError(f"grid {name}: node counts must be at least {MIN_NODES}")
        tol = self.tolerances
        if not (tol.rel >= 0 and tol.abs >= 0) or (tol.convergence is not None and not tol.convergence >= 0):
            raise ConfigError("tolerances must be non-negative")
        if self.fd_step is not None and not self.fd_step > 0:
            raise ConfigError("fd_step must be positive")
        return self

    def node_counts(self):
        m, n = self.factor_m.dim, self.factor_n.dim
        gm = self.grid_m * m if len(self.grid_m) == 1 else self.grid_m
        gn = self.grid_n * n if len(self.grid_n) == 1 else self.grid_n
        return tuple(gm), tuple(gn)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def parse_counts(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad node counts {text!r}") from None
    if not vals:
        raise ConfigError("empty node count list")
    return vals


def _factor(cp: configparser.ConfigParser, section: str) -> FactorSpec:
    if not cp.has_section(section):
        raise ConfigError(f"missing section [{section}]")
    sec = cp[section]
    kind = sec.get("kind", "").strip()
    try:
        if kind == "circle":
            return FactorSpec("circle", radius=sec.getfloat("radius", 1.0), dim=1)
        if kind == "torus":
            return FactorSpec("torus", dim=sec.getint("dim", 1))
        if kind == "sphere":
            return FactorSpec("sphere", radius=sec.getfloat("radius", 1.0), dim=sec.getint("dim", 2))
        if kind == "custom":
            dim = sec.getint("dim")
            if dim is None or dim < 1:
                raise ConfigError(f"[{section}] custom factors need a positive dim")
            entries = [["0"] * dim for _ in range(dim)]
            for i in range(dim):
                for j in range(i, dim):
                    key = f"g{i + 1}{j + 1}"
                    val = sec.get(key, sec.get(f"g{j + 1}{i + 1}", "1" if i == j else "0"))
                    entries[i][j] = entries[j][i] = val
            bounds_raw = _floats(sec.get("bounds", ""))
            if len(bounds_raw) != 2 * dim:
                raise ConfigError(f"[{section}] bounds needs {2 * dim} numbers (lo, hi per axis)")
            bounds = [(bounds_raw[2 * k], bounds_raw[2 * k + 1]) for k in range(dim)]
            per_raw = [v.strip().lower() for v in sec.get("periodic", "").split(",") if v.strip()]
            periodic = [v in ("1", "true", "yes") for v in per_raw] or [False] * dim
            if len(periodic) != dim:
                raise ConfigError(f"[{section}] periodic needs {dim} flags")
            return FactorSpec("custom", dim=dim, entries=entries, bounds=bounds, periodic=periodic)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from None
    raise ConfigError(f"[{section}] unknown kind {kind!r} (expected circle, torus, sphere or custom)")


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} not found")
    return parse_config(path.read_text(), source=str(path))


def parse_config(text: str, source: str | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    run = cp["run"] if cp.has_section("run") else {}
    grid = cp["grid"] if cp.has_section("grid") else {}
    tol_sec = cp["tolerances"] if cp.has_section("tolerances") else {}
    out = cp["output"] if cp.has_section("output") else {}
    try:
        deriv_mode = run.get("deriv_mode", "analytic").strip()
        fd_step = run.get("fd_step")
        fd_step = float(fd_step) if fd_step else None
        tol = Tolerances.for_mode(deriv_mode)
        if "rel" in tol_sec:
            tol.rel = float(tol_sec["rel"])
        if "abs" in tol_sec:
            tol.abs = float(tol_sec["abs"])
        if "convergence" in tol_sec:
            tol.convergence = float(tol_sec["convergence"])
        cfg = RunConfig(
            factor_m=_factor(cp, "factor.M"),
            factor_n=_factor(cp, "factor.N"),
            epsilon=float(run.get("epsilon", "1")),
            warp=run.get("warp", "1").strip(),
            mode=run.get("mode", "verify").strip(),
            grid_m=parse_counts(grid.get("M", "48")),
            grid_n=parse_counts(grid.get("N", "48")),
            deriv_mode=deriv_mode,
            fd_step=fd_step,
            tolerances=tol,
            json_path=out.get("json") or None,
            csv_path=out.get("csv") or None,
            include_nodes=str(out.get("nodes", "false")).strip().lower() in ("1", "true", "yes"),
            source=source,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def shipped_configs() -> dict[str, Path]:
    """Configs bundled with the package, by file name."""
    base = Path(__file__).parent / "configs"
    return {p.name: p for p in sorted(base.glob("*.cfg"))}

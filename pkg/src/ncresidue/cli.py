"""Command-line entry point.

    ncresidue run <config> [--out PATH] [--mode assembled|closed|verify]
                           [--grid M,N] [--fd-step H] [--quiet]
    ncresidue check <config>

Exit status: 0 success, 1 verification failed, 2 configuration error,
3 any other error raised while computing.  ``NCRESIDUE_THREADS`` sets the
number of worker threads for per-node evaluation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import checks
from .config import RunConfig, load_config, parse_counts
from .errors import ConfigError, ResidueError
from .residue import QuadratureGrid, ResidueReport, wres

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3


def _grid_override(cfg: RunConfig, text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError("--grid expects M,N")
    cfg.grid_m = parse_counts(parts[0])
    cfg.grid_n = parse_counts(parts[1])


def execute(cfg: RunConfig) -> ResidueReport:
    gm, gn = cfg.factors()
    counts_m, counts_n = cfg.node_counts()
    grid = QuadratureGrid.build(gm, gn, counts_m, counts_n)
    return wres(gm, gn, cfg.warped_config(), grid, mode=cfg.mode, tolerances=cfg.tolerances,
                keep_nodes=cfg.include_nodes or bool(cfg.csv_path))


def summary(report: ResidueReport) -> str:
    md, tot = report.metadata, report.totals
    lines = [
        f"{md['factor_m']} x {md['factor_n']}  (m={md['m']}, n={md['n']}, mbar={md['mbar']})",
        f"epsilon = {md['epsilon']:g}, f = {md['warp']}, mode = {md['mode']}, derivatives = {md['deriv_mode']}",
        f"grid {md['grid_m']} x {md['grid_n']} ({md['nodes']} nodes), volume = {tot['volume']:.12g}",
    ]
    if "wres_assembled" in tot:
        lines.append(f"Wres (six-term assembly) = {tot['wres_assembled']:.12g}")
    if "wres_closed" in tot:
        lines.append(f"Wres (closed form)       = {tot['wres_closed']:.12g}")
    if "max_rel_gap" in tot:
        lines.append(f"max pointwise rel gap = {tot['max_rel_gap']:.3e}, total rel gap = {tot['total_rel_gap']:.3e}")
    if report.comparison:
        c = report.comparison
        lines.append(f"S^1 x S^3: engine total {c['engine_total_from_integrand']:.12g} "
                     f"(prefactor 2 pi^4); printed prefactor 4 pi^4 gives {c['printed_total']:.12g}")
    lines.append("verification " + ("passed" if report.passed else "FAILED") if md["mode"] == "verify"
                 else "done")
    return "\n".join(lines)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.mode:
        cfg.mode = args.mode
    if args.grid:
        _grid_override(cfg, args.grid)
    if args.fd_step is not None:
        cfg.deriv_mode = "fd"
        cfg.fd_step = args.fd_step
    if args.out:
        cfg.json_path = args.out
    cfg.validate()
    report = execute(cfg)
    if cfg.json_path:
        Path(cfg.json_path).write_text(report.to_json(cfg.include_nodes))
    if cfg.csv_path:
        Path(cfg.csv_path).write_text(report.to_csv())
    if not args.quiet:
        print(summary(report))
    if not cfg.json_path and args.quiet:
        sys.stdout.write(report.to_json(cfg.include_nodes))
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    gm, gn = cfg.factors()
    results = checks.run_checks(gm, gn, cfg.warped_config())
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncresidue",
                                description="Noncommutative residue densities of warped-product Laplacians")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="integrate the residue density over M x N")
    r.add_argument("config")
    r.add_argument("--out", help="write the JSON report here")
    r.add_argument("--mode", choices=["assembled", "closed", "verify"])
    r.add_argument("--grid", help="nodes per axis for M and N, e.g. 64,12")
    r.add_argument("--fd-step", type=float, dest="fd_step",
                   help="use finite-difference metric derivatives with this step")
    r.add_argument("--quiet", action="store_true", help="no summary; print JSON if no output path")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="run the oracle checks on the configured geometry")
    c.add_argument("config")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResidueError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

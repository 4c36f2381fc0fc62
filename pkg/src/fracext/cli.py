"""Command-line entry point: ``fracext <command> [options]``.

Exit codes: 0 success (all audits pass), 1 an audit verdict failed,
2 usage, configuration or data error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, dumps_report, layer_profile, load_config, parse_phi, write_report
from .errors import FracExtError
from .extension import dn_operator_fit, extend
from .fractional import FracOrder, frac_lap_pv, frac_lap_spectral
from .geometry import bump, capacity_phi, poincare_audit, symmetry_fit
from .grid import GridFunction, HalfSpaceGrid, read_csv, write_csv
from .nonlinear import bulk, reaction
from .solver import BoundaryReactionProblem, energy_growth, solve, validate_structure
from .stability import assemble, is_stable, min_rayleigh, monotone_certificate

log = logging.getLogger("fracext")


class UsageError(FracExtError, ValueError):
    pass


# -- io helpers --------------------------------------------------------------


def _read_table(path) -> tuple[list, np.ndarray]:
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise UsageError(f"{path}: empty file")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r])
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return rows[0], data


def _read_samples(path) -> tuple[np.ndarray, list, np.ndarray]:
    """Boundary samples from ``y[,y2],v``: values reshaped onto the y-grid."""
    header, data = _read_table(path)
    ncoord = len(header) - 1
    if ncoord not in (1, 2) or data.ndim != 2 or data.shape[1] != ncoord + 1:
        raise UsageError(f"{path}: expected columns y[,y2],v")
    axes = [np.unique(data[:, k]) for k in range(ncoord)]
    shape = tuple(a.size for a in axes)
    if int(np.prod(shape)) != data.shape[0]:
        raise UsageError(f"{path}: samples do not form a tensor grid")
    order = np.lexsort(tuple(data[:, k] for k in reversed(range(ncoord))))
    values = data[order, -1].reshape(shape)
    return values, axes, data[order, :ncoord]


def _period(axis: np.ndarray) -> float:
    h = float(np.mean(np.diff(axis)))
    return h * axis.size


def infer_grid(path) -> HalfSpaceGrid:
    """Rebuild the grid of a solution CSV from its coordinate columns."""
    header, data = _read_table(path)
    n = len(header) - 2
    if n not in (1, 2) or header[-2:] != ["x", "value"]:
        raise UsageError(f"{path}: not a field CSV (header {header})")
    ys = [np.unique(data[:, k]) for k in range(n)]
    xs = np.unique(data[:, n])
    if len({y.size for y in ys}) != 1:
        raise UsageError(f"{path}: y-axes must have equal node counts")
    periodic, L = [], []
    for y in ys:
        closed = math.isclose(y[0], -y[-1], rel_tol=1e-12, abs_tol=1e-12)
        periodic.append(not closed)
        L.append(y[-1] - y[0] if closed else _period(y))
    M = xs.size - 1
    L_x = float(xs[-1])
    gamma = math.log(xs[1] / L_x) / math.log(1.0 / M) if M > 1 else 1.0
    grid = HalfSpaceGrid(n, float(L[0]), ys[0].size, L_x, M, round(gamma, 12), tuple(periodic))
    if not np.allclose(grid.x_nodes, xs, rtol=1e-9, atol=1e-12):
        raise UsageError(f"{path}: x-nodes are not a power-graded mesh")
    return grid


def _grid_from_json(path) -> HalfSpaceGrid:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read grid {path}: {exc}") from None
    if isinstance(data, dict) and "grid" in data:
        data = data["grid"]
    return HalfSpaceGrid.from_dict(data)


def _problem(cfg: RunConfig, grid: HalfSpaceGrid, base_dir: Path | None, u0: GridFunction | None = None) -> BoundaryReactionProblem:
    p = BoundaryReactionProblem(grid, cfg.make_weight(base_dir), reaction(cfg.f["name"]), bulk(cfg.g["name"]))
    far = cfg.far_field
    if far == "layer":
        return p.with_dirichlet(layer_profile(grid))
    if far == "zero":
        return p.with_dirichlet(np.zeros(grid.shape))
    if far == "initial":
        return p.with_dirichlet((u0 or cfg.make_u0(grid)).values)
    return p.with_dirichlet(p.default_dirichlet(u0 or cfg.make_u0(grid)))


def _load(args) -> tuple[RunConfig, Path]:
    if not args.config:
        raise UsageError("--config is required for this command")
    return load_config(args.config), Path(args.config).parent


def _solution(args, cfg: RunConfig | None) -> GridFunction:
    if not args.solution:
        raise UsageError("--solution is required")
    grid = cfg.make_grid() if cfg is not None else infer_grid(args.solution)
    return read_csv(args.solution, grid)


def _emit(report: dict, args) -> None:
    if args.report:
        write_report(report, args.report)
    else:
        sys.stdout.write(dumps_report(report))


# -- commands ----------------------------------------------------------------


def cmd_extend(args) -> int:
    if not (args.input and args.grid and args.out):
        raise UsageError("extend needs --input, --grid and --out")
    grid = _grid_from_json(args.grid)
    v, axes, _ = _read_samples(args.input)
    if len(axes) != grid.n or any(
        a.size != grid.N_y or not np.allclose(a, grid.y_nodes(k), rtol=0, atol=1e-9 * grid.L_y) for k, a in enumerate(axes)
    ):
        raise UsageError(f"{args.input}: sample coordinates do not match the grid's y-nodes")
    u = extend(v, grid, FracOrder.from_alpha(args.alpha))
    write_csv(u, args.out)
    return 0


def cmd_fraclap(args) -> int:
    if not (args.input and args.out):
        raise UsageError("fraclap needs --input and --out")
    v, axes, coords = _read_samples(args.input)
    L = _period(axes[0]) if args.length is None else args.length
    if args.method == "spectral":
        w = frac_lap_spectral(v, args.s, L)
        extra = {}
    else:
        res = frac_lap_pv(v, args.s, L)
        w = res.values
        extra = {"constant": res.constant, "tail_bound": res.tail_bound, "accuracy_warning": res.accuracy_warning}
    names = ["y"] if len(axes) == 1 else ["y1", "y2"]
    with Path(args.out).open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(names + ["value"])
        for c, val in zip(coords, w.ravel()):
            wr.writerow([format(float(x), ".17g") for x in c] + [format(float(val), ".17g")])
    if args.report:
        write_report({"s": args.s, "method": args.method, "length": L} | extra, args.report)
    return 0


def cmd_dnfit(args) -> int:
    modes = tuple(int(k) for k in args.modes.split(","))
    fit = dn_operator_fit(FracOrder.from_alpha(args.alpha), modes, N_y=args.N_y, M=args.M)
    _emit(fit.to_dict() | {"resolved": fit.resolved, "crosscheck": fit.crosscheck}, args)
    return 0


def cmd_solve(args) -> int:
    cfg, base = _load(args)
    grid = cfg.make_grid()
    u0 = cfg.make_u0(grid)
    p = _problem(cfg, grid, base, u0)
    sol = solve(p, u0, tol=cfg.tol, max_iter=cfg.max_iter)
    if args.out:
        write_csv(sol.u, args.out)
    _emit(
        {
            "converged": sol.converged,
            "energy": sol.energy,
            "residual_inf": sol.residual_inf,
            "newton_iters": sol.newton_iters,
            "message": sol.message,
            "history": [dict(h) for h in sol.history],
        },
        args,
    )
    return 0 if sol.converged else 1


def cmd_stability(args) -> int:
    cfg, base = _load(args)
    u = _solution(args, cfg)
    p = _problem(cfg, u.grid, base, u)
    res = min_rayleigh(assemble(p, u, args.shift), tol=cfg.stability.tol, max_iter=cfg.stability.max_iter, seed=args.seed)
    cert = monotone_certificate(u, cfg.stability.direction, cfg.stability.window)
    scale = max(1.0, float(np.max(np.abs(cfg.make_u0(u.grid).values))))
    stable = is_stable(res.lam, scale)
    _emit({"lambda_min": res.lam, "converged": res.converged, "monotone_certificate": cert, "stable": stable, "iters": res.iters}, args)
    # a monotone solution certified stable must not have a negative quotient
    return 1 if (cert and not stable) else 0


def _phi(spec: str, grid: HalfSpaceGrid) -> GridFunction:
    kind, R = parse_phi(spec)
    return capacity_phi(R, grid) if kind == "capacity" else bump(R, grid)


def cmd_poincare(args) -> int:
    cfg, base = _load(args)
    u = _solution(args, cfg)
    specs = [args.phi] if args.phi else list(cfg.audit.phi)
    out = {}
    holds = True
    for spec in specs:
        b = poincare_audit(u, cfg.make_weight(base), _phi(spec, u.grid), cfg.audit.eps_grad)
        out[spec] = b.to_dict()
        holds &= b.holds
    _emit(out[specs[0]] if len(specs) == 1 else {"budgets": out, "holds": holds}, args)
    return 0 if holds else 1


def cmd_symmetry(args) -> int:
    cfg = load_config(args.config) if args.config else None
    u = _solution(args, cfg)
    w = cfg.make_weight(Path(args.config).parent) if cfg else None
    _emit(symmetry_fit(u, w).to_dict(), args)
    return 0


def cmd_energy_growth(args) -> int:
    cfg, base = _load(args)
    u = _solution(args, cfg)
    radii = [float(r) for r in args.radii.split(",")] if args.radii else list(cfg.audit.energy_radii)
    g = energy_growth(u, cfg.make_weight(base), radii)
    _emit({"radii": list(g.radii), "values": list(g.values), "fitted_exponent": g.fitted_exponent, "status": g.status}, args)
    return 0


def cmd_validate(args) -> int:
    cfg, base = _load(args)
    grid = cfg.make_grid()
    p = BoundaryReactionProblem(grid, cfg.make_weight(base), reaction(cfg.f["name"]), bulk(cfg.g["name"]))
    rep = validate_structure(p).to_dict()
    _emit(rep, args)
    verdicts = [v for k, v in rep.items() if k != "details"]
    return 1 if "violated-at-sample" in verdicts else 0


def cmd_verify_all(args) -> int:
    from .acceptance import CRITERIA

    selected = sorted(CRITERIA) if not args.criteria else [int(k) for k in args.criteria.split(",")]
    unknown = [k for k in selected if k not in CRITERIA]
    if unknown:
        raise UsageError(f"unknown criteria {unknown}")
    results = []
    for k in selected:
        r = CRITERIA[k]()
        print(r.line(), flush=True)
        results.append(r)
    report = {"passed": all(r.passed for r in results), "criteria": [r.to_dict() for r in results]}
    if args.report:
        write_report(report, args.report)
    return 0 if report["passed"] else 1


COMMANDS = {
    "extend": cmd_extend,
    "fraclap": cmd_fraclap,
    "dnfit": cmd_dnfit,
    "solve": cmd_solve,
    "stability": cmd_stability,
    "poincare": cmd_poincare,
    "symmetry": cmd_symmetry,
    "energy-growth": cmd_energy_growth,
    "validate": cmd_validate,
    "verify-all": cmd_verify_all,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--out", help="output field (CSV)")
    common.add_argument("--report", help="output report (JSON)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="BLAS threads (0 = auto; env FRACEXT_THREADS)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="fracext", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"fracext {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extend", parents=[common])
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--input")
    s.add_argument("--grid")

    s = sub.add_parser("fraclap", parents=[common])
    s.add_argument("--s", type=float, required=True)
    s.add_argument("--input")
    s.add_argument("--method", choices=["pv", "spectral"], default="spectral")
    s.add_argument("--length", type=float, default=None, help="period (default: inferred from y spacing)")

    s = sub.add_parser("dnfit", parents=[common])
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--modes", default="1,2,3,4")
    s.add_argument("--N_y", type=int, default=256)
    s.add_argument("--M", type=int, default=128)

    sub.add_parser("solve", parents=[common])

    s = sub.add_parser("stability", parents=[common])
    s.add_argument("--solution")
    s.add_argument("--shift", type=float, default=0.0, help="constant added to f' (destabilization experiments)")

    s = sub.add_parser("poincare", parents=[common])
    s.add_argument("--solution")
    s.add_argument("--phi", help="capacity:R or bump:R (default: the config's family)")

    s = sub.add_parser("symmetry", parents=[common])
    s.add_argument("--solution")

    s = sub.add_parser("energy-growth", parents=[common])
    s.add_argument("--solution")
    s.add_argument("--radii")

    sub.add_parser("validate", parents=[common])

    s = sub.add_parser("verify-all", parents=[common])
    s.add_argument("--criteria", help="comma-separated subset, e.g. 1,2,3")
    return ap


def _thread_limit(args):
    n = args.threads
    if n is None:
        env = os.environ.get("FRACEXT_THREADS")
        n = int(env) if env else 0
    if n and n > 0:
        from threadpoolctl import threadpool_limits

        return threadpool_limits(limits=n)
    return contextlib.nullcontext()


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(args):
            return COMMANDS[args.command](args)
    except (FracExtError, ValueError) as exc:
        print(f"fracext {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point.

Exit codes: 0 success, 1 usage error (bad flag or config), 2 invariant violation.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .core import BoundaryPath, SimulationConfig, in_uniqueness_regime, law_from_dict
from .density import gamma_map_with_ledger, physical_jump
from .harness import (
    ExperimentReport,
    OrderingViolation,
    left_limit_probe,
    right_continuity_probe,
    shift_scan,
)
from .io import dumps, read_json, read_path_csv, read_subprobability_csv, write_json, write_path_csv
from .m1 import levy_m1_distance
from .particles import simulate
from .solvers import PicardOrderingError, minimal_picard, run_physical, solve_residual

log = logging.getLogger("mvstefan")

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT = 0, 1, 2


class UsageError(Exception):
    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config (grid parameters and law)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="format of path outputs")
    p.add_argument("--plot", action="store_true", help="also write PNG figures")
    p.add_argument("--alpha", type=float, help="override the config alpha")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvstefan", description="Minimal and physical solutions of the supercooled Stefan McKean-Vlasov problem")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="minimal (Picard) or physical solution")
    _common(p)
    p.add_argument("--solver", choices=("picard", "physical"), help="default: config 'solver' or picard")

    p = sub.add_parser("particles", help="N-particle system with cascades")
    _common(p)
    p.add_argument("--n", type=int, help="number of particles (config 'n_particles')")
    p.add_argument("--workers", type=int, help="threads (results do not depend on it)")

    p = sub.add_parser("shift-scan", help="solutions for shifted initial laws")
    _common(p)
    p.add_argument("--solver", choices=("picard", "physical"))

    p = sub.add_parser("converge-scan", help="ordered laws converging from the right")
    _common(p)

    p = sub.add_parser("left-limit", help="left limit of minimal solutions and the gap to the minimal one")
    _common(p)

    p = sub.add_parser("m1", help="Levy-type M1 distance between two path CSVs")
    _common(p)
    p.add_argument("paths", nargs="*", type=Path, help="two CSV files with header t,lambda")

    p = sub.add_parser("jump", help="physical jump of a surviving-mass density")
    _common(p)
    p.add_argument("--density", type=Path, help="CSV (x, density) of nu on (0, x_max], x at cell midpoints")
    p.add_argument("--seed-loss", type=float, default=0.0, help="boundary movement already owed")
    p.add_argument("--no-refine", action="store_true", help="grid edge instead of the in-cell crossing")
    return parser


# ------------------------------------------------------------------ helpers


def _load_config(args) -> tuple[dict, SimulationConfig]:
    raw: dict = {}
    if args.config is not None:
        try:
            raw = read_json(args.config)
        except FileNotFoundError:
            raise UsageError("--config", f"no such file {args.config}")
        except ValueError as exc:
            raise UsageError("--config", f"not valid JSON ({exc})")
        if not isinstance(raw, dict):
            raise UsageError("--config", "top level must be an object")
    if args.alpha is not None:
        raw["alpha"] = args.alpha
    if args.seed is not None:
        raw["seed"] = args.seed
    if "alpha" not in raw:
        raise UsageError("--config", "missing 'alpha' (or pass --alpha)")
    try:
        cfg = SimulationConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError("--config", str(exc))
    return raw, cfg


def _law(raw: dict, key: str = "law"):
    if key not in raw:
        raise UsageError("--config", f"missing '{key}'")
    try:
        return law_from_dict(raw[key])
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError("--config", f"bad '{key}': {exc}")


def _require(raw: dict, key: str):
    if key not in raw:
        raise UsageError("--config", f"missing '{key}'")
    return raw[key]


def _write_path(path: BoundaryPath, out: Path, stem: str, fmt: str, grid: dict) -> Path:
    if fmt == "csv":
        f = out / f"{stem}.csv"
        write_path_csv(path, f)
    else:
        f = out / f"{stem}.json"
        write_json({"grid": grid, "t": path.grid_times, "lambda": path.grid_values}, f)
    return f


def _maybe_plot(args, paths: dict, stem: str, title: str) -> None:
    if args.plot:
        from .plotting import plot_paths

        plot_paths(paths, args.out / f"{stem}.png", title)


def _write_report(rep: ExperimentReport, args, stem: str = "report") -> int:
    write_json(rep.to_dict(), args.out / f"{stem}.json")
    for i, (label, p) in enumerate(rep.paths.items()):
        _write_path(p, args.out, f"lambda_{i:02d}", args.format, rep.grid)
    _maybe_plot(args, rep.paths, stem, rep.experiment)
    if not rep.ok:
        failed = [k for k, v in rep.checks.items() if not v]
        print(f"invariant violation: {', '.join(failed)}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


# ------------------------------------------------------------------ commands


def cmd_solve(args) -> int:
    raw, cfg = _load_config(args)
    law = _law(raw)
    solver = args.solver or raw.get("solver", "picard")
    if solver not in ("picard", "physical"):
        raise UsageError("--solver", f"unknown solver {solver!r}")
    cfg = cfg.with_updates(x_max=cfg.resolve_x_max(law))
    grid = cfg.grid_metadata(law)
    summary: dict = {"command": "solve", "solver": solver, "config": cfg.to_dict(), "grid": grid, "law": law.to_dict()}
    if solver == "picard":
        path, trace = minimal_picard(law, cfg)
        summary.update(
            iterations=trace.iterations,
            converged=trace.converged,
            sup_deltas=trace.sup_deltas,
            time_zero_floor=trace.floor,
        )
    else:
        run = run_physical(law, cfg)
        path = run.path
        summary.update(
            cascades=[vars(j) for j in run.jumps],
            boundary_mismatch=run.boundary_mismatch,
        )
    _, ledger = gamma_map_with_ledger(law, path, cfg)
    thr = 5 * cfg.dt**0.5
    summary.update(
        jumps=[{"t": t, "size": s} for t, s in path.jumps(thr)],
        jump_threshold=thr,
        residual=solve_residual(law, path, cfg),
        mass_ledger_error=ledger.max_error(),
        lambda_T=float(path.values[-1]),
        uniqueness_regime=in_uniqueness_regime(law, cfg.alpha),
    )
    _write_path(path, args.out, "lambda", args.format, grid)
    write_json(summary, args.out / "summary.json")
    _maybe_plot(args, {solver: path}, "lambda", f"{solver} solution")
    return EXIT_OK


def cmd_particles(args) -> int:
    raw, cfg = _load_config(args)
    n = args.n if args.n is not None else raw.get("n_particles")
    if n is None:
        raise UsageError("--n", "number of particles missing (flag or config 'n_particles')")
    if int(n) < 1:
        raise UsageError("--n", "must be at least 1")
    workers = args.workers if args.workers is not None else cfg.workers
    if workers < 1:
        raise UsageError("--workers", "must be at least 1")
    law = _law(raw)
    path, casc = simulate(law, int(n), cfg, workers=workers)
    grid = dict(cfg.grid_metadata(law), n_particles=int(n))
    _write_path(path, args.out, "lambda", args.format, grid)
    write_json({"grid": grid, "seed": int(cfg.seed), "cascades": casc.to_dict()}, args.out / "cascades.json")
    write_json(
        {"command": "particles", "config": cfg.to_dict(), "grid": grid, "law": law.to_dict(), "lambda_T": float(path.values[-1])},
        args.out / "summary.json",
    )
    _maybe_plot(args, {f"N={n}": path}, "lambda", "particle system")
    return EXIT_OK


def cmd_shift_scan(args) -> int:
    raw, cfg = _load_config(args)
    law = _law(raw)
    shifts = _require(raw, "shifts")
    solver = args.solver or raw.get("solver", "picard")
    try:
        rep = shift_scan(law, shifts, solver, cfg)
    except ValueError as exc:
        raise UsageError("--config", str(exc))
    return _write_report(rep, args)


def cmd_converge_scan(args) -> int:
    raw, cfg = _load_config(args)
    law = _law(raw)
    mode = raw.get("mode", "shift")
    if mode == "shift":
        seq = _require(raw, "shifts")
    elif mode == "rate":
        seq = _require(raw, "rates")
    elif mode == "laws":
        seq = [law_from_dict(d) for d in _require(raw, "laws")]
    else:
        raise UsageError("--config", f"unknown mode {mode!r}")
    try:
        rep = right_continuity_probe(law, seq, cfg, mode=mode)
    except OrderingViolation as exc:
        body = exc.report.to_dict() if exc.report is not None else {}
        body["error"] = {"type": "OrderingViolation", "message": str(exc)}
        write_json(body, args.out / "report.json")
        print(f"OrderingViolation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return _write_report(rep, args)


def cmd_left_limit(args) -> int:
    raw, cfg = _load_config(args)
    law = _law(raw)
    shifts = _require(raw, "shifts")
    try:
        rep = left_limit_probe(law, shifts, cfg)
    except ValueError as exc:
        raise UsageError("--config", str(exc))
    return _write_report(rep, args)


def cmd_m1(args) -> int:
    files = list(args.paths)
    if not files and args.config is not None:
        files = [Path(p) for p in read_json(args.config).get("paths", [])]
    if len(files) != 2:
        raise UsageError("paths", "need exactly two CSV paths")
    try:
        f, g = (read_path_csv(x) for x in files)
    except (OSError, ValueError) as exc:
        raise UsageError("paths", str(exc))
    try:
        d = levy_m1_distance(f, g)
    except ValueError as exc:
        raise UsageError("paths", str(exc))
    print(f"{d:.12g}")
    write_json({"command": "m1", "paths": [str(x) for x in files], "distance": d}, args.out / "m1.json")
    return EXIT_OK


def cmd_jump(args) -> int:
    if args.density is None:
        raise UsageError("--density", "required")
    alpha = args.alpha
    if alpha is None and args.config is not None:
        alpha = read_json(args.config).get("alpha")
    if alpha is None or not alpha > 0:
        raise UsageError("--alpha", "a positive alpha is required")
    try:
        nu = read_subprobability_csv(args.density)
    except (OSError, ValueError) as exc:
        raise UsageError("--density", str(exc))
    d = physical_jump(nu, float(alpha), refine=not args.no_refine, seed=args.seed_loss)
    print(f"{d:.12g}")
    if args.config is not None or args.out != Path("."):
        write_json({"command": "jump", "alpha": alpha, "dx": nu.dx, "refine": not args.no_refine, "jump": d}, args.out / "jump.json")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "particles": cmd_particles,
    "shift-scan": cmd_shift_scan,
    "converge-scan": cmd_converge_scan,
    "left-limit": cmd_left_limit,
    "m1": cmd_m1,
    "jump": cmd_jump,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and argparse usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mvstefan {args.command}: error: argument {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OrderingViolation, PicardOrderingError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

"""Sensitivity of solutions to the initial law: shift scans, ordered convergence, left limits, limit jumps.

Every experiment returns an :class:`ExperimentReport`. Minimal solutions of a
family of laws are computed in lockstep so that pointwise comparisons between
them are exact and a failed comparison means a real ordering problem.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    BoundaryPath,
    InitialLaw,
    SimulationConfig,
    dominance_check,
    in_uniqueness_regime,
    kolmogorov_distance,
    shift_law,
    smooth_law_exponential,
)
from .density import AbsorbingStepPlan, physical_jump, state_before_increment
from .m1 import dense_convergence_report, levy_m1_distance
from .solvers import minimal_picard_family, run_physical, solve_residual

log = logging.getLogger(__name__)

ORDER_TOL = 1e-12


class OrderingViolation(RuntimeError):
    """A required stochastic or pointwise ordering does not hold."""

    def __init__(self, message: str, report: "ExperimentReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    grid: dict
    solutions: list[dict] = field(default_factory=list)
    distances: list[dict] = field(default_factory=list)
    gap: float | None = None
    checks: dict[str, bool] = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    paths: dict[str, BoundaryPath] = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "grid": self.grid,
            "solutions": self.solutions,
            "distances": self.distances,
            "gap": self.gap,
            "checks": self.checks,
            "ok": self.ok,
            "details": self.details,
        }


def common_config(cfg: SimulationConfig, laws: Sequence[InitialLaw]) -> SimulationConfig:
    """Fix x_max to one value that suits every law, so all solves share a grid."""
    if cfg.x_max is not None:
        return cfg
    return cfg.with_updates(x_max=max(cfg.resolve_x_max(law) for law in laws))


def default_jump_threshold(cfg: SimulationConfig) -> float:
    return 5.0 * math.sqrt(cfg.dt)


def _new_report(name: str, cfg: SimulationConfig) -> ExperimentReport:
    return ExperimentReport(name, cfg.to_dict(), cfg.grid_metadata())


def summarize(
    label,
    law: InitialLaw,
    path: BoundaryPath,
    cfg: SimulationConfig,
    threshold: float,
    trace=None,
    plan: AbsorbingStepPlan | None = None,
) -> dict:
    out = {
        "label": label,
        "grid": cfg.grid_metadata(),
        "lambda_0": float(path.grid_values[0]),
        "lambda_T": float(path.values[-1]),
        "jumps": [{"t": t, "size": s} for t, s in path.jumps(threshold)],
        "residual": solve_residual(law, path, cfg, plan),
    }
    if trace is not None:
        out.update(iterations=trace.iterations, converged=trace.converged, floor=trace.floor)
    return out


def solve_family(laws: Sequence[InitialLaw], cfg: SimulationConfig, solver: str = "picard"):
    """Paths (and Picard traces, or None) for several laws on one grid."""
    if solver == "picard":
        return minimal_picard_family(laws, cfg)
    if solver == "physical":
        return [(run_physical(law, cfg).path, None) for law in laws]
    raise ValueError(f"unknown solver {solver!r}")


def _min_diff(upper: BoundaryPath, lower: BoundaryPath) -> float:
    return float(np.min(upper.values - lower.values))


def shift_scan(
    law: InitialLaw,
    shifts: Sequence[float],
    solver: str,
    cfg: SimulationConfig,
    jump_threshold: float | None = None,
) -> ExperimentReport:
    """Solve for every shifted law; check x < y => Lambda^x >= Lambda^y and tabulate M1 distances."""
    shifts = [float(x) for x in shifts]
    if shifts != sorted(shifts):
        raise ValueError("shifts must be sorted ascending")
    laws = [shift_law(law, x) for x in shifts]
    cfg = common_config(cfg, laws)
    thr = jump_threshold or default_jump_threshold(cfg)
    plan = AbsorbingStepPlan.from_config(cfg)
    rep = _new_report("shift_scan", cfg)
    rep.details.update(solver=solver, shifts=shifts)
    sols = solve_family(laws, cfg, solver)
    paths = [p for p, _ in sols]
    for x, lw, (p, tr) in zip(shifts, laws, sols):
        s = summarize(x, lw, p, cfg, thr, tr, plan)
        s["shift"] = x
        rep.solutions.append(s)
        rep.paths[f"shift={x:.12g}"] = p
    ordered = True
    for i in range(len(shifts) - 1):
        md = _min_diff(paths[i], paths[i + 1])
        ordered &= md >= -ORDER_TOL
        rep.distances.append(
            {
                "from": shifts[i],
                "to": shifts[i + 1],
                "m1": levy_m1_distance(paths[i], paths[i + 1]),
                "min_diff": md,
                "grid": rep.grid,
            }
        )
    if 0.0 in shifts:
        ref = paths[shifts.index(0.0)]
        rep.details["m1_to_zero"] = [
            {"shift": x, "m1": levy_m1_distance(p, ref), "grid": rep.grid} for x, p in zip(shifts, paths)
        ]
    rep.checks["dominance"] = bool(ordered)
    return rep


def _sequence_laws(law: InitialLaw, values: Sequence, mode: str) -> list[InitialLaw]:
    if mode == "shift":
        return [shift_law(law, float(x)) for x in values]
    if mode == "rate":
        return [smooth_law_exponential(law, float(r)) for r in values]
    if mode == "laws":
        return list(values)
    raise ValueError(f"unknown mode {mode!r}")


def right_continuity_probe(
    law: InitialLaw,
    sequence: Sequence,
    cfg: SimulationConfig,
    mode: str = "shift",
    jump_threshold: float | None = None,
) -> ExperimentReport:
    """Minimal solutions for laws approaching ``law`` from the right.

    The laws must satisfy F >= F^n >= F^m for m < n (checked; OrderingViolation
    otherwise). Reports pointwise monotonicity of the solutions in n and their
    M1 distances to the solution for ``law``.
    """
    laws = _sequence_laws(law, sequence, mode)
    cfg = common_config(cfg, laws + [law])
    thr = jump_threshold or default_jump_threshold(cfg)
    rep = _new_report("right_continuity", cfg)
    rep.details.update(mode=mode, sequence=[v if mode != "laws" else i for i, v in enumerate(sequence)])
    bad = []
    for n, ln in enumerate(laws):
        if not dominance_check(law, ln):
            bad.append(["limit", n])
        for m in range(n):
            if not dominance_check(ln, laws[m]):
                bad.append([m, n])
    rep.checks["law_ordering"] = not bad
    if bad:
        rep.details["ordering_failures"] = bad
        raise OrderingViolation(f"laws are not ordered as F >= F^n >= F^m: pairs {bad[:5]}", rep)
    rep.details["cdf_distance"] = [kolmogorov_distance(ln, law) for ln in laws]
    plan = AbsorbingStepPlan.from_config(cfg)
    sols = solve_family(laws + [law], cfg, "picard")
    paths = [p for p, _ in sols]
    limit = paths[-1]
    for i, (ln, (p, tr)) in enumerate(zip(laws + [law], sols)):
        label = "limit" if i == len(laws) else i
        rep.solutions.append(summarize(label, ln, p, cfg, thr, tr, plan))
        rep.paths[f"n={label}"] = p
    mono = all(_min_diff(paths[i + 1], paths[i]) >= -ORDER_TOL for i in range(len(paths) - 1))
    rep.checks["pointwise_monotone"] = bool(mono)
    dists = [levy_m1_distance(p, limit) for p in paths[:-1]]
    rep.distances = [{"n": i, "m1_to_limit": d, "grid": rep.grid} for i, d in enumerate(dists)]
    rep.checks["distances_nonincreasing"] = bool(all(b <= a + ORDER_TOL for a, b in zip(dists, dists[1:])))
    strict_from = len(dists)
    for i in range(len(dists) - 1, 0, -1):
        if dists[i] < dists[i - 1]:
            strict_from = i - 1
        else:
            break
    rep.details["strictly_decreasing_from"] = strict_from if strict_from < len(dists) - 1 else None
    conv = dense_convergence_report(paths[:-1], limit, jump_threshold=thr) if dists else None
    if conv is not None:
        rep.details["dense_convergence"] = conv.to_dict()
    return rep


def left_limit_probe(
    law: InitialLaw,
    shifts: Sequence[float],
    cfg: SimulationConfig,
    jump_threshold: float | None = None,
) -> ExperimentReport:
    """Estimate the left limit Lambda^0 of the minimal solutions for X0- + x_n, x_n increasing to 0.

    The estimate is the solution for the last shift (no extrapolation; the
    grid path is already right continuous). Reports its fixed-point residual
    for ``law``, its ordering against the minimal solution for ``law`` and the
    gap sup_t (Lambda^0 - minimal)(t).
    """
    xs = [float(x) for x in shifts]
    if not xs or any(x >= 0 for x in xs) or any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError("left-limit shifts must be negative and strictly increasing")
    laws = [shift_law(law, x) for x in xs]
    cfg = common_config(cfg, laws + [law])
    thr = jump_threshold or default_jump_threshold(cfg)
    tol = max(5 * cfg.dx, 2 * cfg.picard_tol)
    plan = AbsorbingStepPlan.from_config(cfg)
    rep = _new_report("left_limit", cfg)
    rep.details.update(shifts=xs, tolerance=tol)
    sols = solve_family(laws + [law], cfg, "picard")
    paths = [p for p, _ in sols]
    minimal = paths[-1]
    estimate = paths[-2]
    for x, ln, (p, tr) in zip(xs + [0.0], laws + [law], sols):
        rep.solutions.append(summarize(x, ln, p, cfg, thr, tr, plan))
        rep.paths[f"shift={x:.12g}"] = p
    rep.checks["sequence_ordered"] = bool(
        all(_min_diff(paths[i], paths[i + 1]) >= -ORDER_TOL for i in range(len(laws) - 1))
    )
    diff = estimate.values - minimal.values
    rep.gap = float(np.max(diff))
    rep.details["min_diff"] = float(np.min(diff))
    rep.checks["left_limit_above_minimal"] = bool(np.min(diff) >= -ORDER_TOL)
    resid = solve_residual(law, estimate, cfg, plan)
    rep.details["left_limit_residual"] = resid
    rep.checks["left_limit_residual_small"] = bool(resid < tol)
    rep.details["uniqueness_regime"] = in_uniqueness_regime(law, cfg.alpha)
    rep.details["gap_within_tolerance"] = bool(rep.gap < tol)
    rep.distances = [
        {"shift": x, "m1_to_minimal": levy_m1_distance(p, minimal), "grid": rep.grid} for x, p in zip(xs, paths[:-1])
    ]
    rep.paths["left_limit"] = estimate
    return rep


def physical_limit_residual(
    laws: Sequence[InitialLaw],
    limit_law: InitialLaw,
    cfg: SimulationConfig,
    jump_threshold: float | None = None,
) -> ExperimentReport:
    """Check that the limit of physical solutions jumps by the physical amount under the limit law.

    The limit path is estimated by the last solution of the sequence. At every
    detected jump the surviving mass just before it is recomputed under
    ``limit_law`` with that path frozen, and the recorded jump is compared with
    the physical jump of that mass.
    """
    laws = list(laws)
    cfg = common_config(cfg, laws + [limit_law])
    thr = jump_threshold or default_jump_threshold(cfg)
    plan = AbsorbingStepPlan.from_config(cfg)
    rep = _new_report("physical_limit", cfg)
    paths = []
    for i, ln in enumerate(laws):
        p = run_physical(ln, cfg).path
        paths.append(p)
        s = summarize(i, ln, p, cfg, thr, None, plan)
        s["cdf_distance"] = kolmogorov_distance(ln, limit_law)
        rep.solutions.append(s)
        rep.paths[f"n={i}"] = p
    limit = paths[-1]
    rep.paths["limit"] = limit
    rep.details["dense_convergence"] = dense_convergence_report(paths, limit, jump_threshold=thr).to_dict()
    inc = limit.increments()
    is_jump = inc > thr
    resolution = float(np.max(inc[~is_jump])) if np.any(~is_jump) else 0.0
    tol = max(5 * cfg.dx, resolution)
    rep.details["tolerance"] = tol
    rows = []
    for k in np.nonzero(is_jump)[0]:
        st = state_before_increment(limit_law, limit, cfg, int(k), plan)
        seed = max(cfg.alpha * st.nu.lost_mass - st.level, 0.0)
        predicted = physical_jump(st.relative(), cfg.alpha, refine=cfg.jump_refine, seed=seed)
        rows.append(
            {
                "t": float(k * cfg.dt),
                "jump": float(inc[k]),
                "physical": predicted,
                "physical_lattice": st.jump(cfg.alpha, seed),
                "residual": abs(float(inc[k]) - predicted),
                "grid": rep.grid,
            }
        )
    rep.details["jumps"] = rows
    rep.checks["jump_condition"] = all(r["residual"] < tol for r in rows)
    return rep

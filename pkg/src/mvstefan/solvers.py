"""Minimal solution by monotone Picard iteration, physical solution by time stepping."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BoundaryPath, InitialLaw, SimulationConfig, SubProbabilityGrid
from .density import (
    AbsorbingStepPlan,
    alive_start,
    diffuse_below_level,
    gamma_map,
    initial_grid,
    level_crossing,
)

log = logging.getLogger(__name__)

ORDER_TOL = 1e-12
_JUMP_EPS = 1e-13
_MAX_CASCADE_ROUNDS = 100


class PicardOrderingError(RuntimeError):
    """Successive Picard iterates decreased somewhere: the discrete Gamma lost monotonicity."""


@dataclass
class PicardTrace:
    """Retained iterates (first, every 10th, last) and all sup-norm increments."""

    iterates: list[BoundaryPath] = field(default_factory=list)
    iterate_index: list[int] = field(default_factory=list)
    sup_deltas: list[float] = field(default_factory=list)
    converged: bool = False
    floor: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.sup_deltas)

    def keep(self, k: int, path: BoundaryPath) -> None:
        if k == 0 or k % 10 == 0:
            self.iterates.append(path)
            self.iterate_index.append(k)

    def finish(self, k: int, path: BoundaryPath) -> None:
        if not self.iterate_index or self.iterate_index[-1] != k:
            self.iterates.append(path)
            self.iterate_index.append(k)


def time_zero_floor(nu0: SubProbabilityGrid, alpha: float) -> float:
    """Right limit at t = 0 of the minimal solution.

    The nonpositive mass is lost at once and the cascade stops at the first
    crossing of alpha (atom + killed mass) with the diagonal.
    """
    return level_crossing(np.asarray(nu0.cell_masses), nu0.dx, 0.0, alpha, seed=alpha * nu0.lost_mass)[0]


class _PicardRun:
    def __init__(self, law: InitialLaw, cfg: SimulationConfig, plan: AbsorbingStepPlan):
        self.law = law
        self.cfg = cfg
        self.plan = plan
        self.nu0 = initial_grid(law, cfg)
        self.floor = time_zero_floor(self.nu0, cfg.alpha)
        self.current = BoundaryPath.zero(cfg)
        self.trace = PicardTrace(floor=self.floor)
        self.trace.keep(0, self.current)
        self.k = 0

    @property
    def last_delta(self) -> float:
        return self.trace.sup_deltas[-1] if self.trace.sup_deltas else np.inf

    def step(self) -> float:
        prev = self.current
        ell = prev.with_values(np.where(prev.times >= 0, np.maximum(prev.values, self.floor), 0.0))
        new = gamma_map(self.law, ell, self.cfg, self.plan, self.nu0)
        drop = float(np.min(new.values - prev.values))
        if drop < -ORDER_TOL:
            raise PicardOrderingError(f"iterate {self.k + 1} decreased by {-drop:.3e}")
        delta = float(np.max(np.abs(new.values - prev.values)))
        self.k += 1
        self.current = new
        self.trace.sup_deltas.append(delta)
        self.trace.keep(self.k, new)
        return delta

    def done(self) -> tuple[BoundaryPath, PicardTrace]:
        self.trace.converged = self.last_delta < self.cfg.picard_tol
        self.trace.finish(self.k, self.current)
        if not self.trace.converged:
            log.warning(
                "Picard iteration stopped after %d iterates with sup-delta %.3e > tol %.1e",
                self.k,
                self.last_delta,
                self.cfg.picard_tol,
            )
        else:
            log.debug("Picard converged in %d iterates", self.k)
        return self.current, self.trace


def minimal_picard(law: InitialLaw, cfg: SimulationConfig) -> tuple[BoundaryPath, PicardTrace]:
    """Iterate Gamma from the zero path until the sup-norm increment drops below tolerance.

    Every iterate is floored at the time-zero right limit of the minimal
    solution, so time-zero blow-ups are captured. ``trace.converged`` is False
    when ``picard_max_iters`` was hit first.
    """
    run = _PicardRun(law, cfg, AbsorbingStepPlan.from_config(cfg))
    while run.k < cfg.picard_max_iters and run.last_delta >= cfg.picard_tol:
        run.step()
    return run.done()


def minimal_picard_family(
    laws: Sequence[InitialLaw], cfg: SimulationConfig, workers: int | None = None
) -> list[tuple[BoundaryPath, PicardTrace]]:
    """Picard for several laws in lockstep: all stop at the same iteration count.

    Sharing the iteration count keeps pointwise orderings between the
    solutions exact (Gamma^k is monotone in the law for every k).
    """
    plan = AbsorbingStepPlan.from_config(cfg)
    runs = [_PicardRun(law, cfg, plan) for law in laws]
    workers = workers or cfg.workers
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while runs and runs[0].k < cfg.picard_max_iters and max(r.last_delta for r in runs) >= cfg.picard_tol:
            if pool is None:
                for r in runs:
                    r.step()
            else:
                list(pool.map(lambda r: r.step(), runs))
    finally:
        if pool is not None:
            pool.shutdown()
    return [r.done() for r in runs]


@dataclass
class JumpRecord:
    time: float
    size: float
    seed: float  # continuous loss of the step (times alpha) plus carried boundary debt
    rounds: int
    slack: float  # seed + alpha nu((0, size - dx]) - (size - dx), >= 0 when the jump is admissible


@dataclass
class PhysicalRun:
    path: BoundaryPath
    jumps: list[JumpRecord]
    boundary_mismatch: float  # max |alpha * lost - total shift| over the run
    ledger_error: float


def run_physical(law: InitialLaw, cfg: SimulationConfig, jump_threshold: float | None = None) -> PhysicalRun:
    """Time stepping with the physical jump rule; see :func:`physical_timestep`."""
    plan = AbsorbingStepPlan.from_config(cfg)
    nu0 = initial_grid(law, cfg)
    alpha, dx = cfg.alpha, cfg.dx
    threshold = dx if jump_threshold is None else jump_threshold
    m = np.array(nu0.cell_masses, dtype=float)
    lost = nu0.lost_mass
    esc = nu0.escaped_mass
    level = 0.0
    vals = np.empty(cfg.n_steps + 1)
    jumps: list[JumpRecord] = []
    mismatch = 0.0
    prev_value = 0.0
    for k in range(cfg.n_steps + 1):
        if k > 0:
            m, a, e = diffuse_below_level(m, plan, level)
            lost += a
            esc += e
        pre = m
        pre_level = level
        seed0 = max(alpha * lost - level, 0.0)
        rounds = 0
        while rounds < _MAX_CASCADE_ROUNDS:
            owed = max(alpha * lost - level, 0.0)
            jump, stop = level_crossing(m, dx, level, alpha, seed=owed)
            c0 = min(alive_start(level, dx), m.size)
            level += jump
            if stop <= c0 or jump <= _JUMP_EPS:
                break
            if m is pre:
                m = m.copy()
            lost += float(m[c0:stop].sum())
            m[c0:stop] = 0.0
            rounds += 1
        value = min(alpha * lost, alpha)
        mismatch = max(mismatch, abs(alpha * lost - level))
        # the next step diffuses against the recorded boundary
        level = value
        vals[k] = value
        size = value - prev_value
        if size > threshold:
            x = size - dx
            jumps.append(JumpRecord(k * cfg.dt, size, seed0, rounds, _seeded_slack(pre, dx, pre_level, alpha, seed0, x)))
        prev_value = value
    path = BoundaryPath.on_grid(cfg.dt, np.maximum.accumulate(vals))
    ledger = abs(m.sum() + lost + esc - nu0.initial_total)
    return PhysicalRun(path, jumps, mismatch, ledger)


def _seeded_slack(m: np.ndarray, dx: float, level: float, alpha: float, seed: float, x: float) -> float:
    """seed + alpha nu((0, x]) - x with nu the live mass above ``level`` (piecewise uniform)."""
    c0 = min(alive_start(level, dx), m.size)
    offset = c0 * dx - level
    cum = np.concatenate([[0.0], np.cumsum(m[c0:])])
    held = float(np.interp(x - offset, np.arange(cum.size) * dx, cum, left=0.0, right=cum[-1]))
    return seed + alpha * held - x


def physical_timestep(law: InitialLaw, cfg: SimulationConfig) -> BoundaryPath:
    """Physical solution: diffuse, then resolve the jump cascade at every grid time.

    At each grid time the surviving mass is diffused over one step; the
    boundary then moves by the first crossing of ``s + alpha A(x)`` with the
    diagonal, ``s`` being what the boundary still owes (alpha times the loss
    just incurred) and A(x) the live mass a move of size x kills. The crossing
    is re-evaluated after every absorption until it returns no further kill.
    At t = 0 there is no diffusion and the seed is alpha times the nonpositive
    mass.
    """
    return run_physical(law, cfg).path


def solve_residual(
    law: InitialLaw, candidate: BoundaryPath, cfg: SimulationConfig, plan: AbsorbingStepPlan | None = None
) -> float:
    """sup_t |candidate(t) - Gamma[candidate](t)| over the grid."""
    out = gamma_map(law, candidate, cfg, plan)
    return float(np.max(np.abs(out.grid_values - candidate.grid_values)))

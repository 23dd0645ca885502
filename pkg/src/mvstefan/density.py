"""Deterministic evolution of the surviving mass and the operator ell -> Gamma[ell].

The surviving sub-probability is stored as cell masses on (0, x_max]. One time
step of Brownian motion killed at 0 uses the method of images on the cell
lattice, so the killed transition from cell i to cell j is
``w(j - i) - w(i + j + 1)`` with ``w`` the normalised Gaussian cell weights.
A boundary increment translates the piecewise-uniform density to the left.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BoundaryPath, InitialLaw, SimulationConfig, SubProbabilityGrid

_FFT_MIN_KERNEL = 129
_SNAP = 1e-12


@dataclass(frozen=True, eq=False)
class AbsorbingStepPlan:
    """Precomputed kernel for one absorbing diffusion step of length ``dt``."""

    dt: float
    dx: float
    kernel_halfwidth: int | None = None
    weights: np.ndarray = field(init=False, repr=False)
    norm: float = field(init=False, repr=False)
    survival: np.ndarray = field(init=False, repr=False)
    _spectra: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if not (self.dt > 0 and self.dx > 0):
            raise ValueError("dt and dx must be positive")
        h = self.kernel_halfwidth
        if h is None:
            h = max(1, int(math.ceil(8.0 * math.sqrt(self.dt) / self.dx)))
        if h < 1:
            raise ValueError("kernel_halfwidth must be a positive integer")
        object.__setattr__(self, "kernel_halfwidth", int(h))
        k = np.arange(-h, h + 1) * self.dx
        w = np.exp(-0.5 * k * k / self.dt)
        norm = float(w.sum())
        w /= norm
        object.__setattr__(self, "norm", norm)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        # survival of one step from cell i < h: sum_{|k| <= i} w(k)
        c = np.cumsum(w)
        i = np.arange(h)
        surv = c[h + i] - np.concatenate([[0.0], c])[h - i]
        surv.setflags(write=False)
        object.__setattr__(self, "survival", surv)

    @classmethod
    def from_config(cls, cfg: SimulationConfig) -> "AbsorbingStepPlan":
        return cls(cfg.dt, cfg.dx)

    def _convolve(self, m: np.ndarray) -> np.ndarray:
        w = self.weights
        if w.size < _FFT_MIN_KERNEL:
            return np.convolve(m, w)
        length = m.size + w.size - 1
        nfft = _fast_len(length)
        spec = self._spectra.get(nfft)
        if spec is None:
            spec = np.fft.rfft(w, nfft)
            self._spectra[nfft] = spec
        return np.fft.irfft(np.fft.rfft(m, nfft) * spec, nfft)[:length]


def _fast_len(n: int) -> int:
    from scipy.fft import next_fast_len

    return next_fast_len(n, real=True)


def diffuse_masses(m: np.ndarray, plan: AbsorbingStepPlan) -> tuple[np.ndarray, float, float]:
    """One killed diffusion step on raw cell masses: (new masses, absorbed, escaped)."""
    h = plan.kernel_halfwidth
    n = m.size
    out = plan._convolve(m)
    new = out[h : h + n].copy()
    r = min(h, n)
    # image of cell j sits at cell -1-j
    new[:r] -= out[h - 1 :: -1][:r]
    np.clip(new, 0.0, None, out=new)
    escaped = float(np.clip(out[h + n :], 0.0, None).sum())
    absorbed = float(np.dot(m[:r], 1.0 - plan.survival[:r]))
    return new, max(absorbed, 0.0), escaped


def shift_masses(m: np.ndarray, delta: float, dx: float) -> tuple[np.ndarray, float]:
    """Translate the piecewise-uniform density left by ``delta``: (new masses, absorbed)."""
    if delta < 0:
        raise ValueError(f"boundary increments must be nonnegative, got {delta}")
    n = m.size
    if delta == 0 or n == 0:
        return m, 0.0
    q = delta / dx
    s = math.floor(q)
    f = q - s
    if abs(q - round(q)) < _SNAP:
        s, f = int(round(q)), 0.0
    s = int(s)
    if s >= n:
        return np.zeros(n), float(m.sum())
    new = np.zeros(n)
    new[: n - s] = (1.0 - f) * m[s:]
    if f > 0:
        new[: n - s - 1] += f * m[s + 1 :]
    absorbed = float(m[:s].sum() + f * m[s])
    return new, absorbed


def absorbing_step(nu: SubProbabilityGrid, plan: AbsorbingStepPlan) -> tuple[SubProbabilityGrid, float]:
    """Evolve the surviving mass over ``plan.dt`` with killing at 0."""
    new, absorbed, escaped = diffuse_masses(np.asarray(nu.cell_masses), plan)
    out = SubProbabilityGrid(
        nu.dx,
        new,
        lost_mass=nu.lost_mass + absorbed,
        escaped_mass=nu.escaped_mass + escaped,
        initial_total=nu.initial_total,
    )
    return out, absorbed


def apply_boundary_increment(nu: SubProbabilityGrid, delta: float) -> tuple[SubProbabilityGrid, float]:
    """Move the boundary up by ``delta``; mass pushed to or below 0 is absorbed."""
    new, absorbed = shift_masses(np.asarray(nu.cell_masses), float(delta), nu.dx)
    out = SubProbabilityGrid(
        nu.dx,
        new,
        lost_mass=nu.lost_mass + absorbed,
        escaped_mass=nu.escaped_mass,
        initial_total=nu.initial_total,
    )
    return out, absorbed


# ------------------------------------------------------------------ physical jump


def first_crossing(m: np.ndarray, dx: float, alpha: float, seed: float = 0.0, refine: bool = True) -> float:
    """inf{x > 0 : seed + alpha * nu((0, x]) < x} for piecewise-uniform cell masses."""
    n = m.size
    cum = np.concatenate([[0.0], np.cumsum(m)])
    edges = np.arange(n + 1) * dx
    g = seed + alpha * cum - edges
    neg = np.nonzero(g[1:] < 0)[0]
    total = float(cum[-1])
    cap = seed + alpha * total + dx
    if neg.size == 0:
        # past the grid the cumulative is flat; the crossing sits at seed + alpha * total
        target = seed + alpha * total
        if refine:
            return min(target, cap)
        return float(min((math.floor(target / dx) + 1) * dx, cap))
    j = int(neg[0]) + 1  # first edge with g < 0
    if refine:
        g0, g1 = g[j - 1], g[j]
        root = edges[j - 1] + g0 * dx / (g0 - g1)
    elif j == 1 and seed == 0:
        root = 0.0
    else:
        root = edges[j]
    return float(min(max(root, 0.0), cap))


def physical_jump(nu: SubProbabilityGrid, alpha: float, refine: bool = True, seed: float = 0.0) -> float:
    """Jump size from the physical condition on the pre-jump surviving mass.

    ``seed`` is boundary movement already owed at this instant (e.g. the
    time-zero loss of nonpositive mass); with ``seed = 0`` this is exactly
    inf{x > 0 : alpha nu((0, x]) < x}. With ``refine`` the crossing is solved
    inside the cell, otherwise the first grid edge past it is returned.
    """
    return first_crossing(np.asarray(nu.cell_masses), nu.dx, alpha, seed, refine)




# ------------------------------------------------------------------ level form
#
# Gamma runs in the original coordinates y = X0- + B_t. Masses stay on the fixed
# lattice and the boundary acts as a killing level L = ell(t): cell c is dead as
# soon as L > c dx (its lower edge). Over a step the level is frozen and mass
# moving from cell i to cell j survives with the bridge factor
# 1 - exp(-2 d_i d_j / dt), d = centre - L, i.e. the image kernel about L.
# Each piece is monotone in the masses and in L, so Gamma is monotone in ell.
# At L = 0 the step coincides with ``diffuse_masses``.

_EDGE_TOL = 1e-9


def alive_start(level: float, dx: float) -> int:
    """Index of the first cell whose lower edge is at or above ``level``."""
    if level <= 0:
        return 0
    return int(math.ceil(level / dx - _EDGE_TOL))


def kill_below(m: np.ndarray, level: float, dx: float) -> tuple[np.ndarray, float]:
    """Absorb every cell whose lower edge lies below ``level``."""
    c0 = min(alive_start(level, dx), m.size)
    if c0 == 0:
        return m, 0.0
    absorbed = float(m[:c0].sum())
    if absorbed == 0.0:
        return m, 0.0
    m = m.copy()
    m[:c0] = 0.0
    return m, absorbed


def diffuse_below_level(m: np.ndarray, plan: AbsorbingStepPlan, level: float) -> tuple[np.ndarray, float, float]:
    """One diffusion step killed at the frozen ``level``: (new masses, absorbed, escaped).

    Arrivals in cells that are dead at ``level`` are absorbed as well.
    """
    h = plan.kernel_halfwidth
    n = m.size
    dx = plan.dx
    c0 = min(alive_start(level, dx), n)
    out = plan._convolve(m)
    new = out[h : h + n].copy()
    escaped = float(np.clip(out[h + n :], 0.0, None).sum())
    new[:c0] = 0.0
    r = min(h, n - c0)
    if r > 0:
        # image about the level: d_i + d_j = (a + b) dx + shift for cells c0 + a, c0 + b
        shift = (2 * c0 + 1) * dx - 2.0 * level
        z = np.arange(2 * h) * dx + shift
        g = np.exp(-0.5 * z * z / plan.dt) / plan.norm
        g[z > (h + _EDGE_TOL) * dx] = 0.0
        image = np.convolve(m[c0 : c0 + r][::-1], g[: 2 * r])[r - 1 : 2 * r - 1]
        new[c0 : c0 + r] -= image
    np.clip(new, 0.0, None, out=new)
    absorbed = float(m.sum()) - float(new.sum()) - escaped
    return new, max(absorbed, 0.0), escaped


def level_crossing(
    m: np.ndarray, dx: float, level: float, alpha: float, seed: float = 0.0
) -> tuple[float, int]:
    """Jump from ``level``: inf{x > 0 : seed + alpha A(x) < x}.

    A(x) is the mass of the live cells whose lower edge lies below level + x,
    the mass a move of size x kills. Returns the jump and the index one past
    the last cell it kills.
    """
    n = m.size
    c0 = min(alive_start(level, dx), n)
    a = np.concatenate([[0.0], np.cumsum(m[c0:])])
    # piece k is x in (E_k, E_{k+1}] where the first k live cells are dead
    upper = np.concatenate([np.arange(c0, n) * dx - level, [np.inf]])
    ok = seed + alpha * a < upper
    k = int(np.argmax(ok))
    lower = 0.0 if k == 0 else (c0 + k - 1) * dx - level
    jump = max(lower, seed + alpha * float(a[k]), 0.0)
    return float(jump), c0 + k


# ------------------------------------------------------------------ Gamma


@dataclass
class MassLedger:
    times: np.ndarray
    remaining: np.ndarray
    lost: np.ndarray
    escaped: np.ndarray

    def max_error(self, total: float = 1.0) -> float:
        return float(np.max(np.abs(self.remaining + self.lost + self.escaped - total)))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "remaining", "lost", "escaped"])
            for row in zip(self.times, self.remaining, self.lost, self.escaped):
                w.writerow([f"{v:.12g}" for v in row])


@dataclass
class FrozenState:
    """Surviving mass at a grid time after diffusing, before the boundary moves there.

    ``nu`` holds masses on the fixed lattice; cells below ``level`` are empty.
    """

    index: int
    time: float
    level: float
    nu: SubProbabilityGrid
    step_loss: float  # mass absorbed by diffusion during the step ending here

    def relative(self) -> SubProbabilityGrid:
        """Live cells re-indexed from the level, so cell 0 is the first live one."""
        c0 = min(alive_start(self.level, self.nu.dx), self.nu.n_cells)
        m = np.asarray(self.nu.cell_masses)
        return SubProbabilityGrid(
            self.nu.dx,
            np.concatenate([m[c0:], np.zeros(c0)]),
            self.nu.lost_mass,
            self.nu.escaped_mass,
            self.nu.initial_total,
        )

    def jump(self, alpha: float, seed: float = 0.0) -> float:
        """Physical jump at this time in the solver's own lattice convention."""
        return level_crossing(np.asarray(self.nu.cell_masses), self.nu.dx, self.level, alpha, seed)[0]


def initial_grid(law: InitialLaw, cfg: SimulationConfig) -> SubProbabilityGrid:
    return SubProbabilityGrid.from_law(law, cfg.dx, cfg.resolve_x_max(law))


def _run_frozen(
    nu0: SubProbabilityGrid,
    ell: BoundaryPath,
    cfg: SimulationConfig,
    plan: AbsorbingStepPlan,
    stop: int | None = None,
    ledger: bool = False,
):
    levels = np.asarray(ell.grid_values, dtype=float)
    nsteps = cfg.n_steps
    if levels.size != nsteps + 1:
        raise ValueError(f"path has {levels.size} grid times, config expects {nsteps + 1}")
    levels = np.maximum.accumulate(np.maximum(levels, 0.0))
    m = np.asarray(nu0.cell_masses, dtype=float)
    lost = nu0.lost_mass
    esc = nu0.escaped_mass
    dx = cfg.dx
    vals = np.empty(nsteps + 1)
    rem_l = np.empty(nsteps + 1) if ledger else None
    lost_l = np.empty(nsteps + 1) if ledger else None
    esc_l = np.empty(nsteps + 1) if ledger else None
    step_end = cfg.increment_at == "step_end"

    def frozen(k: int, level: float, a: float) -> FrozenState:
        return FrozenState(k, k * cfg.dt, level, SubProbabilityGrid(dx, m, lost, esc, nu0.initial_total), a)

    if stop == 0:
        return frozen(0, 0.0, 0.0)
    m, a = kill_below(m, levels[0], dx)
    lost += a
    vals[0] = lost
    if ledger:
        rem_l[0], lost_l[0], esc_l[0] = m.sum(), lost, esc
    for k in range(1, nsteps + 1):
        if step_end:
            m, a, e = diffuse_below_level(m, plan, levels[k - 1])
            lost += a
            esc += e
            if stop == k:
                return frozen(k, levels[k - 1], a)
            m, a2 = kill_below(m, levels[k], dx)
            lost += a2
        else:
            m, a2 = kill_below(m, levels[k], dx)
            lost += a2
            m, a, e = diffuse_below_level(m, plan, levels[k])
            lost += a
            esc += e
        vals[k] = lost
        if ledger:
            rem_l[k], lost_l[k], esc_l[k] = m.sum(), lost, esc
    values = np.minimum(cfg.alpha * np.maximum.accumulate(vals), cfg.alpha)
    path = BoundaryPath.on_grid(cfg.dt, values)
    if ledger:
        return path, MassLedger(cfg.grid_times, rem_l, lost_l, esc_l)
    return path


def gamma_map(
    law: InitialLaw,
    ell: BoundaryPath,
    cfg: SimulationConfig,
    plan: AbsorbingStepPlan | None = None,
    nu0: SubProbabilityGrid | None = None,
) -> BoundaryPath:
    """t -> alpha * P(tau^ell <= t) for the frozen boundary ``ell``."""
    plan = plan or AbsorbingStepPlan.from_config(cfg)
    nu0 = nu0 if nu0 is not None else initial_grid(law, cfg)
    return _run_frozen(nu0, ell, cfg, plan)


def gamma_map_with_ledger(
    law: InitialLaw, ell: BoundaryPath, cfg: SimulationConfig, plan: AbsorbingStepPlan | None = None
) -> tuple[BoundaryPath, MassLedger]:
    plan = plan or AbsorbingStepPlan.from_config(cfg)
    return _run_frozen(initial_grid(law, cfg), ell, cfg, plan, ledger=True)


def state_before_increment(
    law: InitialLaw, ell: BoundaryPath, cfg: SimulationConfig, index: int, plan: AbsorbingStepPlan | None = None
) -> FrozenState:
    """Surviving mass at grid time ``index`` after diffusing, before ell moves there."""
    if cfg.increment_at != "step_end":
        raise ValueError("pre-jump states are defined for increment_at='step_end'")
    plan = plan or AbsorbingStepPlan.from_config(cfg)
    return _run_frozen(initial_grid(law, cfg), ell, cfg, plan, stop=index)

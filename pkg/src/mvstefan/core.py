"""Domain types shared by the solvers: configuration, initial laws, paths and grids.

Initial laws are immutable values. Continuous laws are put on the solver grid by
exact per-cell mass; atomic laws (Dirac mixtures, empirical samples) split each
atom between the two neighbouring cell centres so the grid law moves
continuously with the atom.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import special

MASS_TOL = 1e-12
DEFAULT_X_MAX = 6.0


def _frozen(a: Iterable[float] | np.ndarray, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SimulationConfig:
    """Grid and solver parameters.

    ``x_max`` may be left as ``None``; solvers then call :meth:`resolve_x_max`
    with the initial law. ``increment_at`` selects where a boundary increment
    sits inside a time step (``"step_end"``: the increment at ``t_k`` acts on
    the state reached by diffusing up to ``t_k``; ``"step_start"``: the
    increment of step ``k -> k+1`` is applied before that step's diffusion).
    """

    alpha: float
    horizon: float = 1.0
    dt: float = 1e-3
    dx: float = 1e-3
    x_max: float | None = None
    seed: int = 0
    picard_tol: float = 1e-10
    picard_max_iters: int = 500
    jump_refine: bool = True
    increment_at: str = "step_end"
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.horizon > 0 or not self.dt > 0 or not self.dx > 0:
            raise ValueError("horizon, dt and dx must be positive")
        if not self.dt < self.horizon:
            raise ValueError(f"dt={self.dt} must be smaller than horizon={self.horizon}")
        if self.x_max is not None and not self.dx < self.x_max:
            raise ValueError(f"dx={self.dx} must be smaller than x_max={self.x_max}")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if int(self.picard_max_iters) < 1:
            raise ValueError("picard_max_iters must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.increment_at not in ("step_end", "step_start"):
            raise ValueError(f"unknown increment_at {self.increment_at!r}")
        if int(self.workers) < 1:
            raise ValueError("workers must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def grid_times(self) -> np.ndarray:
        """Grid times 0, dt, ..., n_steps*dt (without the left extension)."""
        return np.arange(self.n_steps + 1) * self.dt

    def resolve_x_max(self, law: "InitialLaw | None" = None) -> float:
        if self.x_max is not None:
            return float(self.x_max)
        return default_x_max(law, self.horizon, self.dx)

    def with_updates(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)

    def grid_metadata(self, law: "InitialLaw | None" = None) -> dict:
        return {
            "alpha": self.alpha,
            "horizon": self.horizon,
            "dt": self.dt,
            "dx": self.dx,
            "x_max": self.resolve_x_max(law),
            "increment_at": self.increment_at,
        }

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "horizon": self.horizon,
            "dt": self.dt,
            "dx": self.dx,
            "x_max": self.x_max,
            "seed": int(self.seed),
            "picard_tol": self.picard_tol,
            "picard_max_iters": int(self.picard_max_iters),
            "jump_refine": bool(self.jump_refine),
            "increment_at": self.increment_at,
            "workers": int(self.workers),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in data.items() if k in known}
        return cls(**kwargs)


def default_x_max(law: "InitialLaw | None", horizon: float, dx: float) -> float:
    """Spatial cutoff with P(X0- > x_max - 3 sqrt(T)) < 1e-8, never below 6."""
    x = DEFAULT_X_MAX
    if law is not None:
        x = max(x, law.upper_quantile(1e-8) + 3.0 * math.sqrt(horizon))
    return math.ceil(x / dx - 1e-9) * dx


# --------------------------------------------------------------------------- laws


@dataclass(frozen=True)
class Discretized:
    """An initial law on the solver cells of (0, x_max]."""

    atom: float  # mass at or below zero, absorbed at t = 0
    masses: np.ndarray
    beyond: float  # mass above x_max


class InitialLaw:
    """Law of X0-. Subclasses are frozen dataclasses."""

    variant: str = ""

    def cdf(self, x):
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    def shifted(self, x: float) -> "InitialLaw":
        raise NotImplementedError

    def upper_quantile(self, tail: float) -> float:
        raise NotImplementedError

    def discretize(self, dx: float, x_max: float) -> Discretized:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @property
    def max_density(self) -> float:
        """Supremum of the Lebesgue density on (0, inf); inf for laws with atoms."""
        return math.inf

    @property
    def atom_mass(self) -> float:
        """P(X0- <= 0): mass absorbed at time zero."""
        return float(self.cdf(0.0))

    @cached_property
    def mean_abs(self) -> float:
        return float(self._mean_abs())

    def _mean_abs(self) -> float:
        raise NotImplementedError

    def to_grid(self, dx: float, x_max: float | None = None) -> "GridDensity":
        """Grid representation on cells (0, x_max] with nonpositive mass as atom."""
        if x_max is None:
            x_max = max(self.upper_quantile(1e-15), 0.0) + 2 * dx
        n = max(int(math.ceil(x_max / dx - 1e-9)), 1)
        d = self.discretize(dx, n * dx)
        masses = np.array(d.masses)
        masses[-1] += d.beyond
        return GridDensity(dx=dx, masses=masses, atom=d.atom)


def _edges(dx: float, x_max: float) -> np.ndarray:
    n = int(round(x_max / dx))
    return np.arange(n + 1) * dx


def _split_atoms(locs: np.ndarray, weights: np.ndarray, dx: float, x_max: float) -> Discretized:
    n = int(round(x_max / dx))
    masses = np.zeros(n)
    atom = float(weights[locs <= 0].sum())
    beyond = float(weights[locs > x_max].sum())
    inside = (locs > 0) & (locs <= x_max)
    y, w = locs[inside], weights[inside]
    pos = y / dx - 0.5  # fractional index of cell centres
    j = np.floor(pos).astype(np.int64)
    frac = pos - j
    low = j < 0
    high = j >= n - 1
    mid = ~(low | high)
    np.add.at(masses, np.zeros(low.sum(), dtype=np.int64), w[low])
    np.add.at(masses, np.full(high.sum(), n - 1, dtype=np.int64), w[high])
    np.add.at(masses, j[mid], w[mid] * (1.0 - frac[mid]))
    np.add.at(masses, j[mid] + 1, w[mid] * frac[mid])
    return Discretized(atom, masses, beyond)


def _cell_masses_from_cdf(law: InitialLaw, dx: float, x_max: float) -> Discretized:
    edges = _edges(dx, x_max)
    c = np.asarray(law.cdf(edges), dtype=float)
    masses = np.clip(np.diff(c), 0.0, None)
    return Discretized(float(c[0]), masses, float(1.0 - c[-1]))


@dataclass(frozen=True, eq=False)
class GridDensity(InitialLaw):
    """Piecewise-uniform density on cells (origin + j dx, origin + (j+1) dx].

    ``atom`` is a point mass located at ``origin``; with ``origin = 0`` it is the
    mass at or below zero.
    """

    dx: float
    masses: np.ndarray
    atom: float = 0.0
    origin: float = 0.0
    variant: str = field(default="grid_density", init=False)

    def __post_init__(self) -> None:
        m = _frozen(self.masses)
        if m.ndim != 1:
            raise ValueError("masses must be one-dimensional")
        if (m < 0).any() or self.atom < 0:
            raise ValueError("masses must be nonnegative")
        total = float(m.sum()) + self.atom
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"total mass must be 1, got {total!r}")
        object.__setattr__(self, "masses", m)

    @classmethod
    def from_density(cls, dx: float, density: Sequence[float], origin: float = 0.0) -> "GridDensity":
        """Build from per-cell density values, renormalising rounding error away."""
        m = np.asarray(density, dtype=float) * dx
        total = m.sum()
        if total <= 0:
            raise ValueError("density has no mass")
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"density integrates to {total}, expected 1")
        return cls(dx=dx, masses=m / total, origin=origin)

    @cached_property
    def _cum(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.masses)])

    @property
    def edges(self) -> np.ndarray:
        return self.origin + np.arange(self.masses.size + 1) * self.dx

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        cont = np.interp(x, self.edges, self._cum, left=0.0, right=self._cum[-1])
        out = cont + self.atom * (x >= self.origin)
        return out if out.ndim else float(out)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        v = np.clip(u - self.atom, 0.0, None)
        x = np.interp(v, self._cum, self.edges)
        out = np.where(u <= self.atom, self.origin, x)
        return out if out.ndim else float(out)

    def shifted(self, x: float) -> "GridDensity":
        return GridDensity(dx=self.dx, masses=self.masses, atom=self.atom, origin=self.origin + x)

    def upper_quantile(self, tail: float) -> float:
        nz = np.nonzero(self.masses)[0]
        if nz.size == 0:
            return self.origin
        return float(self.origin + (nz[-1] + 1) * self.dx)

    @property
    def max_density(self) -> float:
        if self.atom > 0:
            return math.inf
        return float(self.masses.max() / self.dx)

    def _mean_abs(self) -> float:
        centres = self.origin + (np.arange(self.masses.size) + 0.5) * self.dx
        # |x| is linear on every cell not straddling 0; the straddling cell is exact below
        val = float(np.sum(self.masses * np.abs(centres))) + self.atom * abs(self.origin)
        k = math.floor(-self.origin / self.dx)
        if 0 <= k < self.masses.size:
            a = self.origin + k * self.dx
            b = a + self.dx
            exact = (a * a + b * b) / (2 * self.dx)
            val += self.masses[k] * (exact - abs(0.5 * (a + b)))
        return val

    def discretize(self, dx: float, x_max: float) -> Discretized:
        n = int(round(x_max / dx))
        off = self.origin / dx
        if abs(dx - self.dx) <= 1e-12 * dx and abs(off - round(off)) < 1e-9:
            shift = int(round(off))
            masses = np.zeros(n)
            src = np.arange(self.masses.size)
            dst = src + shift
            below = dst < 0
            above = dst >= n
            keep = ~(below | above)
            masses[dst[keep]] = self.masses[keep]
            atom_below = self.atom if self.origin <= 0 else 0.0
            atom = float(self.masses[below].sum()) + atom_below
            beyond = float(self.masses[above].sum())
            if self.origin > 0 and self.atom > 0:
                extra = _split_atoms(np.array([self.origin]), np.array([self.atom]), dx, x_max)
                masses += extra.masses
                beyond += extra.beyond
            return Discretized(atom, masses, beyond)
        edges = _edges(dx, x_max)
        cont = np.interp(edges, self.edges, self._cum, left=0.0, right=self._cum[-1])
        masses = np.clip(np.diff(cont), 0.0, None)
        atom = float(cont[0])
        beyond = float(self._cum[-1] - cont[-1])
        if self.atom > 0:
            extra = _split_atoms(np.array([self.origin]), np.array([self.atom]), dx, x_max)
            masses = masses + extra.masses
            atom += extra.atom
            beyond += extra.beyond
        return Discretized(atom, masses, beyond)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "dx": self.dx,
            "masses": self.masses.tolist(),
            "atom": self.atom,
            "origin": self.origin,
        }


@dataclass(frozen=True, eq=False)
class Empirical(InitialLaw):
    values: np.ndarray
    variant: str = field(default="empirical", init=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("empirical law needs a non-empty 1-d sample")
        if np.any(np.diff(v) < 0):
            v = np.sort(v)
        object.__setattr__(self, "values", _frozen(v))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(self.values, x, side="right") / self.values.size
        return out if out.ndim else float(out)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.minimum((u * self.values.size).astype(np.int64), self.values.size - 1)
        out = self.values[idx]
        return out if out.ndim else float(out)

    def shifted(self, x: float) -> "Empirical":
        return Empirical(self.values + x)

    def upper_quantile(self, tail: float) -> float:
        return float(self.values[-1])

    def _mean_abs(self) -> float:
        return float(np.mean(np.abs(self.values)))

    def discretize(self, dx: float, x_max: float) -> Discretized:
        w = np.full(self.values.size, 1.0 / self.values.size)
        return _split_atoms(np.asarray(self.values), w, dx, x_max)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class DiracMixture(InitialLaw):
    locations: np.ndarray
    weights: np.ndarray
    variant: str = field(default="dirac", init=False)

    def __post_init__(self) -> None:
        loc = np.asarray(self.locations, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if loc.shape != w.shape or loc.ndim != 1 or loc.size == 0:
            raise ValueError("locations and weights must be matching 1-d arrays")
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        order = np.argsort(loc, kind="stable")
        object.__setattr__(self, "locations", _frozen(loc[order]))
        object.__setattr__(self, "weights", _frozen(w[order]))

    @classmethod
    def of(cls, pairs: Sequence[tuple[float, float]]) -> "DiracMixture":
        locs, ws = zip(*pairs)
        return cls(np.array(locs), np.array(ws))

    @cached_property
    def _cw(self) -> np.ndarray:
        return np.cumsum(self.weights)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.locations, x, side="right")
        cw = np.concatenate([[0.0], self._cw])
        out = np.minimum(cw[idx], 1.0)
        return out if out.ndim else float(out)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.minimum(np.searchsorted(self._cw, u, side="left"), self.locations.size - 1)
        out = self.locations[idx]
        return out if out.ndim else float(out)

    def shifted(self, x: float) -> "DiracMixture":
        return DiracMixture(self.locations + x, self.weights)

    def upper_quantile(self, tail: float) -> float:
        return float(self.locations[-1])

    def _mean_abs(self) -> float:
        return float(np.sum(self.weights * np.abs(self.locations)))

    def discretize(self, dx: float, x_max: float) -> Discretized:
        return _split_atoms(np.asarray(self.locations), np.asarray(self.weights), dx, x_max)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "atoms": [[float(a), float(w)] for a, w in zip(self.locations, self.weights)],
        }


@dataclass(frozen=True, eq=False)
class Uniform(InitialLaw):
    a: float
    b: float
    variant: str = field(default="uniform", init=False)

    def __post_init__(self) -> None:
        if not self.b > self.a:
            raise ValueError("uniform law needs a < b")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)
        return out if out.ndim else float(out)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        out = self.a + u * (self.b - self.a)
        return out if out.ndim else float(out)

    def shifted(self, x: float) -> "Uniform":
        return Uniform(self.a + x, self.b + x)

    def upper_quantile(self, tail: float) -> float:
        return float(self.b)

    @property
    def max_density(self) -> float:
        return 1.0 / (self.b - self.a)

    def _mean_abs(self) -> float:
        a, b = self.a, self.b
        if a >= 0:
            return 0.5 * (a + b)
        if b <= 0:
            return -0.5 * (a + b)
        return (a * a + b * b) / (2 * (b - a))

    def discretize(self, dx: float, x_max: float) -> Discretized:
        return _cell_masses_from_cdf(self, dx, x_max)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "a": self.a, "b": self.b}


@dataclass(frozen=True, eq=False)
class TruncatedNormal(InitialLaw):
    """N(mean, sd^2) conditioned on exceeding ``lower``."""

    mean: float
    sd: float
    lower: float = 0.0
    variant: str = field(default="truncated_normal", init=False)

    def __post_init__(self) -> None:
        if not self.sd > 0:
            raise ValueError("sd must be positive")

    @cached_property
    def _z(self) -> float:
        return float(special.ndtr((self.lower - self.mean) / self.sd))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        p = (special.ndtr((x - self.mean) / self.sd) - self._z) / (1.0 - self._z)
        out = np.where(x <= self.lower, 0.0, np.clip(p, 0.0, 1.0))
        return out if out.ndim else float(out)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        out = self.mean + self.sd * special.ndtri(self._z + u * (1.0 - self._z))
        out = np.maximum(out, self.lower)
        return out if out.ndim else float(out)

    def shifted(self, x: float) -> "TruncatedNormal":
        return TruncatedNormal(self.mean + x, self.sd, self.lower + x)

    def upper_quantile(self, tail: float) -> float:
        return float(self.mean + self.sd * special.ndtri(1.0 - tail * (1.0 - self._z)))

    @property
    def max_density(self) -> float:
        mode = max(self.mean, self.lower)
        return float(math.exp(-0.5 * ((mode - self.mean) / self.sd) ** 2) / (self.sd * math.sqrt(2 * math.pi) * (1.0 - self._z)))

    def _mean_abs(self) -> float:
        from scipy import integrate

        hi = self.upper_quantile(1e-15)
        # E|X| = int_0^inf P(X > x) dx + int_-inf^0 P(X <= x) dx
        pos, _ = integrate.quad(lambda x: 1.0 - self.cdf(x), max(self.lower, 0.0), hi, limit=200)
        neg = 0.0
        if self.lower < 0:
            neg, _ = integrate.quad(lambda x: self.cdf(x), self.lower, 0.0, limit=200)
        return pos + neg + max(self.lower, 0.0)

    def discretize(self, dx: float, x_max: float) -> Discretized:
        return _cell_masses_from_cdf(self, dx, x_max)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "mean": self.mean, "sd": self.sd, "lower": self.lower}


def blowup_law(alpha: float, dx: float = 1e-3) -> GridDensity:
    """Density 2/alpha on (0, alpha/2]: the whole mass is lost at t = 0."""
    n = int(round(0.5 * alpha / dx))
    if abs(n * dx - 0.5 * alpha) > 1e-9 * alpha:
        raise ValueError("alpha/2 must be a multiple of dx")
    return GridDensity(dx=dx, masses=np.full(n, 1.0 / n))


def law_from_dict(spec: dict) -> InitialLaw:
    """Parse a law description, e.g. ``{"variant": "uniform", "a": 0, "b": 1}``."""
    kind = spec.get("variant")
    if kind == "uniform":
        law: InitialLaw = Uniform(float(spec["a"]), float(spec["b"]))
    elif kind == "dirac":
        law = DiracMixture.of([tuple(p) for p in spec["atoms"]])
    elif kind == "empirical":
        law = Empirical(np.asarray(spec["values"], dtype=float))
    elif kind == "truncated_normal":
        law = TruncatedNormal(float(spec["mean"]), float(spec["sd"]), float(spec.get("lower", 0.0)))
    elif kind == "grid_density":
        if "csv" in spec:
            from .io import read_density_csv

            law = read_density_csv(spec["csv"])
        elif "density" in spec:
            law = GridDensity.from_density(float(spec["dx"]), spec["density"], float(spec.get("origin", 0.0)))
        else:
            law = GridDensity(
                dx=float(spec["dx"]),
                masses=np.asarray(spec["masses"], dtype=float),
                atom=float(spec.get("atom", 0.0)),
                origin=float(spec.get("origin", 0.0)),
            )
    elif kind == "blowup":
        law = blowup_law(float(spec["alpha"]), float(spec.get("dx", 1e-3)))
    else:
        raise ValueError(f"unknown law variant {kind!r}")
    if "shift" in spec:
        law = law.shifted(float(spec["shift"]))
    if "smooth_rate" in spec:
        law = smooth_law_exponential(law, float(spec["smooth_rate"]), dx=float(spec.get("dx", 1e-3)))
    return law


# ------------------------------------------------------------------ law operations


def cdf_eval(law: InitialLaw, x):
    """P(X0- <= x)."""
    return law.cdf(x)


def shift_law(law: InitialLaw, x: float) -> InitialLaw:
    """Law of X0- + x. Mass ending at or below 0 shows up as ``atom_mass``."""
    if x == 0:
        return law
    return law.shifted(float(x))


def _exp_cell_kernel(rate: float, dx: float) -> np.ndarray:
    """P(U + xi lands k cells to the right), U uniform on a cell, xi ~ Exp(rate)."""
    lam = rate
    kmax = int(math.ceil(40.0 / (lam * dx))) + 2

    def h(z):
        z = np.maximum(z, 0.0)
        return z + np.expm1(-lam * z) / lam

    k = np.arange(kmax + 1, dtype=float)
    p = (h((k + 1) * dx) - 2 * h(k * dx) + h((k - 1) * dx)) / dx
    p = np.clip(p, 0.0, None)
    p[-1] += max(0.0, 1.0 - p.sum())
    return p / p.sum()


def smooth_law_exponential(
    law: InitialLaw, rate: float, dx: float | None = None
) -> GridDensity:
    """Law of X0- + Exp(rate), as a grid density.

    Atomic laws are smoothed atom by atom, each atom first moved up to the
    next edge of a grid of width ``dx`` (default 1e-3), so the result never
    puts mass left of the original law. Other laws are put on that grid and
    convolved cell-wise with the exact cell-to-cell transition probabilities
    of the exponential. Larger rates give pointwise larger CDFs.
    """
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if isinstance(law, (DiracMixture, Empirical)):
        return _smooth_atoms(law, rate, dx if dx is not None else 1e-3)
    if isinstance(law, GridDensity):
        grid = law
    else:
        grid = law.to_grid(dx if dx is not None else 1e-3)
    p = _exp_cell_kernel(rate, grid.dx)
    masses = np.convolve(grid.masses, p)
    # the atom sits at the grid origin; smoothing spreads it over the cells to the right
    if grid.atom > 0:
        atom_part = grid.atom * _exp_atom_kernel(rate, grid.dx, masses.size)
        masses = masses + atom_part
    masses = np.clip(masses, 0.0, None)
    masses /= masses.sum()
    return GridDensity(dx=grid.dx, masses=masses, origin=grid.origin)


def _smooth_atoms(law: "DiracMixture | Empirical", rate: float, dx: float) -> GridDensity:
    # each atom moves up to the next grid edge, so no mass ends up left of where it was
    if isinstance(law, DiracMixture):
        locs, w = np.asarray(law.locations), np.asarray(law.weights)
    else:
        locs, counts = np.unique(np.asarray(law.values), return_counts=True)
        w = counts / counts.sum()
    origin = math.floor(locs[0] / dx + 1e-9) * dx
    idx = np.ceil((locs - origin) / dx - 1e-9).astype(np.int64)
    klen = int(math.ceil(40.0 / (rate * dx))) + 2
    kern = _exp_atom_kernel(rate, dx, klen)
    masses = np.zeros(int(idx[-1]) + klen)
    for i, wi in zip(idx, w):
        masses[i : i + klen] += wi * kern
    masses /= masses.sum()
    return GridDensity(dx=dx, masses=masses, origin=origin)


def _exp_atom_kernel(rate: float, dx: float, n: int) -> np.ndarray:
    edges = np.arange(n + 1) * dx
    c = -np.expm1(-rate * edges)
    p = np.diff(c)
    p[-1] += 1.0 - c[-1]
    return p


def common_grid(*laws: InitialLaw, n: int = 4001) -> np.ndarray:
    """Evaluation points covering every law's breakpoints and a uniform mesh."""
    pts = []
    lo, hi = math.inf, -math.inf
    for law in laws:
        if isinstance(law, GridDensity):
            e = law.edges
            pts.append(e)
            lo, hi = min(lo, e[0]), max(hi, e[-1])
        elif isinstance(law, DiracMixture):
            pts.append(law.locations)
            lo, hi = min(lo, law.locations[0]), max(hi, law.locations[-1])
        elif isinstance(law, Empirical):
            pts.append(law.values)
            lo, hi = min(lo, law.values[0]), max(hi, law.values[-1])
        elif isinstance(law, Uniform):
            pts.append(np.array([law.a, law.b]))
            lo, hi = min(lo, law.a), max(hi, law.b)
        else:
            q_hi = law.upper_quantile(1e-12)
            q_lo = float(law.ppf(1e-12))
            lo, hi = min(lo, q_lo), max(hi, q_hi)
    pts.append(np.linspace(lo - 1.0, hi + 1.0, n))
    x = np.unique(np.concatenate(pts))
    # just left of every breakpoint, to see both sides of jumps
    left = x - 1e-12 * np.maximum(1.0, np.abs(x))
    return np.unique(np.concatenate([x, left]))


def dominance_check(f: InitialLaw, g: InitialLaw, grid: np.ndarray | None = None, tol: float = 1e-12) -> bool:
    """True iff CDF of ``f`` >= CDF of ``g`` at every grid point (g sits further right)."""
    x = common_grid(f, g) if grid is None else np.asarray(grid, dtype=float)
    return bool(np.all(np.asarray(f.cdf(x)) >= np.asarray(g.cdf(x)) - tol))


def kolmogorov_distance(f: InitialLaw, g: InitialLaw) -> float:
    x = common_grid(f, g)
    return float(np.max(np.abs(np.asarray(f.cdf(x)) - np.asarray(g.cdf(x)))))


def in_uniqueness_regime(law: InitialLaw, alpha: float) -> bool:
    """Density bounded by 1/(2 alpha) and no atoms: no blow-up, unique physical solution."""
    return alpha * law.max_density <= 0.5


# ------------------------------------------------------------------ paths and grids


@dataclass(frozen=True, eq=False)
class BoundaryPath:
    """Nondecreasing cadlag grid path on [-1, T], zero on [-1, 0).

    ``times`` starts at -1 (the left extension) and contains 0. Between grid
    points the path is constant (step interpolation).
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = _frozen(self.times)
        v = _frozen(self.values)
        if t.shape != v.shape or t.ndim != 1 or t.size < 2:
            raise ValueError("times and values must be matching 1-d arrays")
        if t[0] != -1.0:
            raise ValueError("boundary paths start at t = -1")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.any(t == 0.0):
            raise ValueError("t = 0 must be on the grid")
        if np.any(v[t < 0] != 0.0):
            raise ValueError("boundary paths vanish on [-1, 0)")
        if np.any(np.diff(v) < -1e-12):
            raise ValueError("boundary paths must be nondecreasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def on_grid(cls, dt: float, values: Sequence[float] | np.ndarray) -> "BoundaryPath":
        vals = np.asarray(values, dtype=float)
        times = np.concatenate([[-1.0], np.arange(vals.size) * dt])
        return cls(times, np.concatenate([[0.0], vals]))

    @classmethod
    def zero(cls, cfg: SimulationConfig) -> "BoundaryPath":
        return cls.on_grid(cfg.dt, np.zeros(cfg.n_steps + 1))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def grid_times(self) -> np.ndarray:
        return self.times[self.times >= 0]

    @property
    def grid_values(self) -> np.ndarray:
        return self.values[self.times >= 0]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        out = self.values[np.clip(idx, 0, self.values.size - 1)]
        return out if out.ndim else float(out)

    def increments(self) -> np.ndarray:
        """Increments at grid times t >= 0, the first one being the jump at 0."""
        v = self.values[self.times >= 0]
        return np.diff(np.concatenate([[0.0], v]))

    def jumps(self, threshold: float) -> list[tuple[float, float]]:
        inc = self.increments()
        t = self.grid_times
        return [(float(t[i]), float(inc[i])) for i in np.nonzero(inc > threshold)[0]]

    def sup_distance(self, other: "BoundaryPath") -> float:
        if self.times.shape != other.times.shape or not np.allclose(self.times, other.times, rtol=0, atol=1e-12):
            raise ValueError("paths live on different grids")
        return float(np.max(np.abs(self.values - other.values)))

    def with_values(self, values: np.ndarray) -> "BoundaryPath":
        return BoundaryPath(self.times, values)


@dataclass(frozen=True, eq=False)
class SubProbabilityGrid:
    """Cell masses of the surviving particles on (0, x_max], plus the mass ledger."""

    dx: float
    cell_masses: np.ndarray
    lost_mass: float = 0.0
    escaped_mass: float = 0.0
    initial_total: float = 1.0

    def __post_init__(self) -> None:
        m = _frozen(self.cell_masses)
        if m.ndim != 1:
            raise ValueError("cell_masses must be 1-d")
        if (m < 0).any():
            raise ValueError("cell masses must be nonnegative")
        if self.lost_mass < 0 or self.escaped_mass < 0:
            raise ValueError("lost and escaped mass must be nonnegative")
        object.__setattr__(self, "cell_masses", m)

    @classmethod
    def from_law(cls, law: InitialLaw, dx: float, x_max: float) -> "SubProbabilityGrid":
        """Initial grid; the nonpositive atom is booked as lost at t = 0."""
        d = law.discretize(dx, x_max)
        return cls(dx, d.masses, lost_mass=d.atom, escaped_mass=d.beyond)

    @property
    def n_cells(self) -> int:
        return self.cell_masses.size

    @property
    def x_max(self) -> float:
        return self.n_cells * self.dx

    @property
    def remaining(self) -> float:
        return float(self.cell_masses.sum())

    @property
    def centres(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def cumulative(self) -> np.ndarray:
        """nu((0, j dx]) for j = 0..n_cells."""
        return np.concatenate([[0.0], np.cumsum(self.cell_masses)])

    def ledger_error(self) -> float:
        return abs(self.remaining + self.lost_mass + self.escaped_mass - self.initial_total)

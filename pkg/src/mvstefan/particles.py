"""Finite particle system with loss feedback, Brownian-bridge killing and greedy cascades.

Randomness is counter based: every draw is addressed by (seed, particle id,
step, stream), so any split of the particles across threads gives the same
numbers and therefore the same loss path.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .core import BoundaryPath, InitialLaw, SimulationConfig

STREAM_INIT = 0
STREAM_NORMAL = 1
STREAM_BRIDGE = 2

_TWO_M53 = 2.0**-53


def _raw(seed: int, start: int, count: int, step: int, stream: int) -> np.ndarray:
    """uint64 draws for particles start..start+count-1; start must be a multiple of 4."""
    if start % 4:
        raise ValueError("chunk start must be a multiple of 4")
    bg = np.random.Philox(key=seed, counter=[start // 4, 0, step, stream])
    return bg.random_raw(count)


def uniforms(seed: int, start: int, count: int, step: int, stream: int) -> np.ndarray:
    """Uniforms in the open interval (0, 1)."""
    r = _raw(seed, start, count, step, stream)
    return ((r >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def normals(seed: int, start: int, count: int, step: int, stream: int) -> np.ndarray:
    return ndtri(uniforms(seed, start, count, step, stream))


@dataclass
class ParticleEnsemble:
    """Particles in the original coordinates y = X0- + B; the live position is y - loss."""

    alpha: float
    y: np.ndarray
    alive: np.ndarray
    hit_times: np.ndarray  # nan while alive
    dead: int = 0

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def loss(self) -> float:
        return self.alpha * self.dead / self.n

    @property
    def positions(self) -> np.ndarray:
        return self.y - self.loss

    def kill(self, idx: np.ndarray, t: float) -> None:
        if idx.size == 0:
            return
        if not self.alive[idx].all():
            raise RuntimeError("dead particles cannot die again")
        self.alive[idx] = False
        self.hit_times[idx] = t
        self.dead += int(idx.size)


@dataclass
class CascadeLog:
    """One row per grid time at which at least one particle was hit."""

    times: list[float] = field(default_factory=list)
    newly_hit: list[int] = field(default_factory=list)
    cascade_size: list[int] = field(default_factory=list)
    rounds: list[int] = field(default_factory=list)
    jump: list[float] = field(default_factory=list)

    def append(self, t: float, hit: int, size: int, rounds: int, jump: float) -> None:
        self.times.append(float(t))
        self.newly_hit.append(int(hit))
        self.cascade_size.append(int(size))
        self.rounds.append(int(rounds))
        self.jump.append(float(jump))

    def __len__(self) -> int:
        return len(self.times)

    def to_dict(self) -> dict:
        return {
            "time": self.times,
            "newly_hit": self.newly_hit,
            "cascade_size": self.cascade_size,
            "rounds": self.rounds,
            "jump": self.jump,
        }


def cascade_resolve(positions: np.ndarray, per_particle_loss: float, newly_hit: int) -> tuple[float, np.ndarray]:
    """Smallest cascade triggered by ``newly_hit`` particles.

    Starting from Delta = p * newly_hit, every survivor at or below Delta is
    absorbed and adds p, until nothing new is absorbed. Returns the final
    Delta and the absorbed indices (ascending).
    """
    delta, idx, _ = _cascade(positions, per_particle_loss, newly_hit)
    return delta, idx


def _cascade(positions: np.ndarray, per_particle_loss: float, newly_hit: int) -> tuple[float, np.ndarray, int]:
    if newly_hit < 1:
        raise ValueError("a cascade needs at least one hit particle")
    x = np.asarray(positions, dtype=float)
    p = float(per_particle_loss)
    bound = p * (newly_hit + x.size)
    cand = np.flatnonzero(x <= bound)
    order = cand[np.argsort(x[cand], kind="stable")]
    xs = x[order]
    k = 0
    rounds = 0
    delta = p * newly_hit
    while True:
        k_new = int(np.searchsorted(xs, delta, side="right"))
        if k_new == k:
            break
        k = k_new
        rounds += 1
        delta = p * (newly_hit + k)
    return delta, np.sort(order[:k]), rounds


def _chunks(n: int, workers: int) -> list[tuple[int, int]]:
    size = max(4, 4 * math.ceil(math.ceil(n / max(workers, 1)) / 4))
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def initial_positions(law: InitialLaw, n: int, seed: int) -> np.ndarray:
    return np.asarray(law.ppf(uniforms(seed, 0, n, 0, STREAM_INIT)), dtype=float)


def simulate(
    law: InitialLaw, n: int, cfg: SimulationConfig, workers: int | None = None
) -> tuple[BoundaryPath, CascadeLog]:
    """Run the N-particle system on the configured grid; returns the loss path and cascade log."""
    if n < 1:
        raise ValueError("need at least one particle")
    workers = workers or cfg.workers
    seed = int(cfg.seed)
    dt = cfg.dt
    sqdt = math.sqrt(dt)
    p = cfg.alpha / n
    ens = ParticleEnsemble(cfg.alpha, initial_positions(law, n, seed), np.ones(n, bool), np.full(n, np.nan))
    log = CascadeLog()
    values = np.empty(cfg.n_steps + 1)
    chunks = _chunks(n, workers)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 and len(chunks) > 1 else None

    def resolve(hit: np.ndarray, t: float) -> None:
        # positions relative to the boundary before this grid time's losses
        if hit.size == 0:
            return
        x_before = ens.positions
        ens.kill(hit, t)
        surv = np.flatnonzero(ens.alive)
        delta, absorbed, rounds = _cascade(x_before[surv], p, int(hit.size))
        ens.kill(surv[absorbed], t)
        log.append(t, hit.size, absorbed.size, rounds, delta)

    resolve(np.flatnonzero(ens.y <= 0.0), 0.0)
    values[0] = ens.loss

    def advance(span: tuple[int, int], step: int, loss: float) -> np.ndarray:
        a, b = span
        z = normals(seed, a, b - a, step, STREAM_NORMAL)
        u = uniforms(seed, a, b - a, step, STREAM_BRIDGE)
        alive = ens.alive[a:b]
        xa = ens.y[a:b] - loss
        ens.y[a:b] += sqdt * z
        xb = ens.y[a:b] - loss
        with np.errstate(over="ignore"):
            cross = np.exp(-2.0 * np.maximum(xa, 0.0) * np.maximum(xb, 0.0) / dt)
        hit = alive & ((xb <= 0.0) | (u < cross))
        return a + np.flatnonzero(hit)

    try:
        for k in range(1, cfg.n_steps + 1):
            loss = ens.loss
            if pool is None:
                parts = [advance(c, k, loss) for c in chunks]
            else:
                parts = list(pool.map(lambda c: advance(c, k, loss), chunks))
            resolve(np.concatenate(parts), k * dt)
            values[k] = ens.loss
    finally:
        if pool is not None:
            pool.shutdown()
    return BoundaryPath.on_grid(dt, values), log


def crossing_diagnostic(windows, h: float, dt: float | None = None) -> float:
    """Fraction of post-hit windows that never go strictly below the hitting level.

    ``windows`` holds sampled paths relative to the hitting level, each
    starting at the hitting time; with ``dt`` only the first h/dt samples
    count. An empty window (h = 0) counts as violating.
    """
    wins = list(windows)
    if not wins or h <= 0:
        return 1.0
    bad = 0
    for w in wins:
        w = np.asarray(w, dtype=float)
        if dt is not None:
            w = w[: int(round(h / dt)) + 1]
        tail = w[1:]
        if tail.size == 0 or tail.min() >= 0.0:
            bad += 1
    return bad / len(wins)


def brownian_windows(n: int, h: float, dt: float, seed: int = 0) -> np.ndarray:
    """n Brownian paths started at the level 0, sampled every dt over [0, h]."""
    steps = int(round(h / dt))
    out = np.zeros((n, steps + 1))
    for s in range(1, steps + 1):
        out[:, s] = out[:, s - 1] + math.sqrt(dt) * normals(seed, 0, n, s, STREAM_NORMAL)
    return out


def detected_hit_windows(
    n: int, h: float, dt: float, seed: int = 0, start_scale: float = 3.0, max_wait: float = 0.2
) -> np.ndarray:
    """Post-hit windows as a sampled simulation sees them.

    Brownian paths start uniformly in (0, start_scale * sqrt(dt)); a hit is the
    first sample at or below 0 and the window holds that sample plus the next
    h/dt ones. Paths that do not hit within ``max_wait`` are dropped.
    """
    win = int(round(h / dt))
    wait = int(round(max_wait / dt))
    sq = math.sqrt(dt)
    x = start_scale * sq * uniforms(seed, 0, n, 0, STREAM_INIT)
    hit_at = np.full(n, -1)
    out = np.zeros((n, win + 1))
    for s in range(1, wait + win + 1):
        x = x + sq * normals(seed, 0, n, s, STREAM_NORMAL)
        new = (hit_at < 0) & (x <= 0.0) & (s <= wait)
        hit_at[new] = s
        lag = s - hit_at
        rec = (hit_at >= 0) & (lag <= win)
        out[rec, lag[rec]] = x[rec]
    return out[hit_at >= 0]

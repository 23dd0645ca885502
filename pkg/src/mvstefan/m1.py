"""Levy-type distance for nondecreasing step paths on [-1, T], and dense convergence reports.

For monotone paths, convergence in this distance is equivalent to pointwise
convergence at continuity points plus both endpoints, which is what M1
convergence reduces to there.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .core import BoundaryPath

StepLike = Union[BoundaryPath, tuple]

_BISECT_ITERS = 200


def _arrays(p: StepLike) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(p, BoundaryPath):
        return p.times, p.values
    t, v = p
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.shape != v.shape or t.ndim != 1 or t.size == 0:
        raise ValueError("a step path needs matching 1-d times and values")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    return t, v


def _eval(t: np.ndarray, v: np.ndarray, s: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(t, s, side="right") - 1
    return v[np.clip(idx, 0, v.size - 1)]


def embed_left(path: StepLike) -> BoundaryPath:
    """Extend a path given on [0, T] to [-1, T] by its value at 0-, which is 0.

    Paths that already start at -1 are returned unchanged.
    """
    if isinstance(path, BoundaryPath):
        return path
    t, v = _arrays(path)
    if t[0] == -1.0:
        return BoundaryPath(t, v)
    if t[0] != 0.0:
        raise ValueError("paths to embed must start at t = 0")
    return BoundaryPath(np.concatenate([[-1.0], t]), np.concatenate([[0.0], v]))


def _one_sided_ok(ft, fv, gt, gv, probe, eps: float) -> bool:
    lo = _eval(ft, fv, probe - eps) - eps
    hi = _eval(ft, fv, probe + eps) + eps
    g = _eval(gt, gv, probe)
    return bool(np.all(lo <= g) and np.all(g <= hi))


def levy_m1_distance(f: StepLike, g: StepLike) -> float:
    """max(inf{eps : f(t - eps) - eps <= g(t) <= f(t + eps) + eps on the grid, both ways},
    |f(-1) - g(-1)|, |f(T) - g(T)|), the infimum found by bisection."""
    ft, fv = _arrays(f)
    gt, gv = _arrays(g)
    if abs(ft[0] - gt[0]) > 1e-12 or abs(ft[-1] - gt[-1]) > 1e-12:
        raise ValueError("paths must share the interval [-1, T]")
    probe = np.union1d(ft, gt)
    a, b = probe[0], probe[-1]
    ends = max(abs(fv[0] - gv[0]), abs(fv[-1] - gv[-1]))

    def ok(eps: float) -> bool:
        return _one_sided_ok(ft, fv, gt, gv, probe, eps) and _one_sided_ok(gt, gv, ft, fv, probe, eps)

    # evaluation outside [a, b] is clamped, so eps = sup |f - g| always works
    hi = float(np.max(np.abs(_eval(ft, fv, probe) - _eval(gt, gv, probe))))
    if hi == 0.0 or ok(0.0):
        return float(ends)
    lo = 0.0
    scale = max(hi, b - a, 1.0)
    for _ in range(_BISECT_ITERS):
        if hi - lo <= 1e-13 * scale:
            break
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return float(max(hi, ends))


def default_probes(limit: BoundaryPath, jump_threshold: float, n_uniform: int = 16) -> np.ndarray:
    """-1, T, midpoints between detected jumps of the limit, and a uniform set away from them."""
    T = limit.horizon
    jt = [t for t, _ in limit.jumps(jump_threshold)]
    cuts = [0.0] + [t for t in jt if t > 0] + [T]
    mids = [(cuts[i] + cuts[i + 1]) / 2 for i in range(len(cuts) - 1) if cuts[i + 1] > cuts[i]]
    dt = float(np.min(np.diff(limit.grid_times))) if limit.grid_times.size > 1 else T
    uni = np.linspace(0.0, T, n_uniform + 2)[1:-1]
    if jt:
        away = np.min(np.abs(uni[:, None] - np.asarray(jt)[None, :]), axis=1) > 2 * dt
        uni = uni[away]
    return np.unique(np.concatenate([[-1.0, T], mids, uni]))


@dataclass
class ConvergenceReport:
    probe_times: np.ndarray
    errors: np.ndarray  # (len(sequence), len(probe_times)) of |f^n(t) - f(t)|
    tail_tol: float
    non_monotone: list[float] = field(default_factory=list)
    non_vanishing: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return not self.non_vanishing

    def to_dict(self) -> dict:
        return {
            "probe_times": self.probe_times.tolist(),
            "errors": self.errors.tolist(),
            "tail_tol": self.tail_tol,
            "non_monotone": self.non_monotone,
            "non_vanishing": self.non_vanishing,
        }


def dense_convergence_report(
    sequence: Sequence[StepLike],
    limit: StepLike,
    probe_times: Sequence[float] | None = None,
    tail_tol: float = 1e-2,
    jump_threshold: float | None = None,
) -> ConvergenceReport:
    """Pointwise errors of a sequence against its limit at probe times.

    A probe is flagged non-monotone when its error sequence ever grows by more
    than 1e-12, and non-vanishing when the last error exceeds ``tail_tol``.
    """
    lt, lv = _arrays(limit)
    if probe_times is None:
        lim = embed_left(limit) if not isinstance(limit, BoundaryPath) else limit
        thr = jump_threshold if jump_threshold is not None else 5 * np.sqrt(np.min(np.diff(lim.grid_times)))
        probes = default_probes(lim, thr)
    else:
        probes = np.asarray(sorted(probe_times), dtype=float)
    target = _eval(lt, lv, probes)
    rows = []
    for f in sequence:
        t, v = _arrays(f)
        rows.append(np.abs(_eval(t, v, probes) - target))
    errors = np.array(rows).reshape(len(rows), probes.size)
    non_mono, non_van = [], []
    if len(rows):
        for j, p in enumerate(probes):
            col = errors[:, j]
            if np.any(np.diff(col) > 1e-12):
                non_mono.append(float(p))
            if col[-1] > tail_tol:
                non_van.append(float(p))
    return ConvergenceReport(probes, errors, tail_tol, non_mono, non_van)

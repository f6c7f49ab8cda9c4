"""Proportional segmentation of a line by iterative dividing and diffusing.

This is the exact 1D analogue of the surface algorithm: every interior point
is re-divided from its two neighbours so that the local length ratio matches
the template, then the resulting offsets are smoothed with a ``(1, 2, 1)/4``
stencil. The closed-form answer (:func:`line_ground_truth`) is available, so
the module doubles as an oracle for the convergence machinery.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, ParameterError


@dataclass
class LineConfig:
    template_points: np.ndarray
    target_points: np.ndarray
    threshold: float | None = None
    max_iterations: int = 10_000

    def __post_init__(self):
        self.template_points = np.asarray(self.template_points, dtype=np.float64)
        self.target_points = np.asarray(self.target_points, dtype=np.float64)
        a, b = self.template_points, self.target_points
        if a.ndim != 1 or a.shape != b.shape:
            raise ParameterError("template and target must be 1D lists of equal length")
        if len(a) < 3:
            raise ParameterError("need at least 3 points")
        if np.any(np.diff(a) <= 0):
            raise DegenerateError("template points must be strictly ascending")
        if self.threshold is None:
            span = abs(b[-1] - b[0])
            self.threshold = 1e-6 * span if span > 0 else 1e-12
        if self.threshold <= 0:
            raise ParameterError("threshold must be positive")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be positive")


@dataclass
class LineSnapshot:
    iteration: int
    points: np.ndarray
    total_offset: float      # sum of |renewed offset| over interior points
    ground_truth_error: float


@dataclass
class LineResult:
    snapshots: list[LineSnapshot] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0          # dividing/diffusing sweeps over all tiers
    tier_passes: int = 0         # 1 without the multi-resolution scheme

    @property
    def points(self) -> np.ndarray:
        return self.snapshots[-1].points


def divide_point(a_i, a_i1, a_i2, b_i, b_i2) -> float:
    """Place the middle target point so both sub-lengths keep the template ratio."""
    span = a_i2 - a_i
    if span == 0:
        raise DegenerateError("template triplet has zero span")
    return b_i + (b_i2 - b_i) * (a_i1 - a_i) / span


def diffuse_offsets(offsets) -> np.ndarray:
    """``(o[i-1] + 2 o[i] + o[i+1]) / 4`` over interior offsets, zero beyond both ends."""
    o = np.asarray(offsets, dtype=np.float64)
    padded = np.concatenate([[0.0], o, [0.0]])
    return (padded[:-2] + 2.0 * padded[1:-1] + padded[2:]) / 4.0


def line_ground_truth(template_points, b1, bN) -> np.ndarray:
    a = np.asarray(template_points, dtype=np.float64)
    if a[-1] == a[0]:
        raise DegenerateError("template end points coincide")
    return b1 + (bN - b1) * (a - a[0]) / (a[-1] - a[0])


def binary_tiers(n_points: int) -> list[list[int]]:
    """Recursive midpoints of the index range, coarsest tier first.

    For five points this yields ``[[2], [1, 3]]``.
    """
    tiers: list[list[int]] = []
    intervals = [(0, n_points - 1)]
    while intervals:
        tier, nxt = [], []
        for lo, hi in intervals:
            if hi - lo < 2:
                continue
            mid = (lo + hi) // 2
            tier.append(mid)
            nxt += [(lo, mid), (mid, hi)]
        if tier:
            tiers.append(sorted(tier))
        intervals = nxt
    return tiers


def _sweep(a, b, active, moving):
    """One Jacobi dividing pass plus diffusion over the ordered ``active`` set.

    Points of ``active`` not in ``moving`` are held fixed and contribute zero
    offset to the diffusion stencil.
    """
    pos = {p: k for k, p in enumerate(active)}
    offsets = np.zeros(len(active))
    for p in moving:
        k = pos[p]
        lo, hi = active[k - 1], active[k + 1]
        offsets[k] = divide_point(a[lo], a[p], a[hi], b[lo], b[hi]) - b[p]
    # fixed entries are zero; endpoints of the active list are always fixed
    smoothed = diffuse_offsets(offsets[1:-1])
    is_moving = np.zeros(len(active), dtype=bool)
    is_moving[[pos[p] for p in moving]] = True
    renewed = np.where(is_moving[1:-1], smoothed, 0.0)
    new_b = b.copy()
    new_b[np.asarray(active[1:-1])] += renewed
    return new_b, float(np.abs(renewed).sum())


def segment_line(config: LineConfig, mr: bool = False) -> LineResult:
    """Iterate dividing and diffusing until the total renewed offset drops below threshold.

    With ``mr`` the interior points are unlocked tier by tier (binary midpoints,
    coarsest first); each tier is iterated to the threshold with all previously
    placed points held fixed. One snapshot is kept per sweep without ``mr`` and
    one per completed tier with it.
    """
    a = config.template_points
    b = config.target_points.copy()
    n = len(a)
    truth = line_ground_truth(a, b[0], b[-1])

    def snap(it, total):
        return LineSnapshot(it, b.copy(), total, float(np.abs(b[1:-1] - truth[1:-1]).sum()))

    result = LineResult(snapshots=[snap(0, float("nan"))])
    if mr:
        schedule = binary_tiers(n)
    else:
        schedule = [list(range(1, n - 1))]

    placed = {0, n - 1}
    converged = True
    for tier_no, tier in enumerate(schedule, start=1):
        placed |= set(tier)
        active = sorted(placed)
        tier_ok = False
        total = float("nan")
        for _ in range(config.max_iterations):
            b, total = _sweep(a, b, active, tier)
            result.iterations += 1
            if not mr:
                result.snapshots.append(snap(result.iterations, total))
            if total < config.threshold:
                tier_ok = True
                break
        if mr:
            result.snapshots.append(snap(tier_no, total))
        converged &= tier_ok
    result.converged = converged
    result.tier_passes = len(schedule)
    return result


REFERENCE_TEMPLATE = (0.0, 3.0, 7.0, 10.0, 12.0)
REFERENCE_TARGET = (0.0, 4.0, 6.0, 8.0, 9.0)
SELF_INTERSECTED_TARGET = (0.0, 5.5, 3.0, 8.0, 9.0)

PRESETS = {
    "table1": (REFERENCE_TEMPLATE, REFERENCE_TARGET),
    "self-intersection": (REFERENCE_TEMPLATE, SELF_INTERSECTED_TARGET),
}


def snapshots_to_csv(result: LineResult) -> str:
    n = len(result.snapshots[0].points)
    header = ["iteration"] + [f"b{i + 1}" for i in range(n)] + ["O_t", "E_g"]
    rows = [",".join(header)]
    for s in result.snapshots:
        vals = [str(s.iteration)] + [f"{x:.6f}" for x in s.points]
        vals += [f"{s.total_offset:.6g}", f"{s.ground_truth_error:.6g}"]
        rows.append(",".join(vals))
    return "\n".join(rows) + "\n"

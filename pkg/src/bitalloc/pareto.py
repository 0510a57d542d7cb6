"""Pareto sets of multi-task bit allocation.

Two-stream systems have an exact answer: the Pareto set is the stretch of the
budget line between the smallest and largest per-task minimisers.  For three
streams and two tasks only a bound is available, a polygon cut from the budget
plane by an axis-aligned box of rate extrema.  Both can be checked against
weight-sweep samples and a brute-force dominance test.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .allocation import TaskWeights, fit_first_batch
from .model import (
    BitAllocError,
    DimensionError,
    DistortionSurface,
    RateVector,
    check_same_streams,
    evaluate_all,
)


class EmptyIntersectionError(BitAllocError):
    """The budget plane misses the rate box."""


@dataclass(frozen=True)
class ParetoSegment:
    total_rate: float
    endpoint_low: RateVector
    endpoint_high: RateVector
    per_task_minimizers: tuple

    @property
    def r1_min(self) -> float:
        return float(self.endpoint_low[0])

    @property
    def r1_max(self) -> float:
        return float(self.endpoint_high[0])

    @property
    def is_degenerate(self) -> bool:
        return self.r1_min == self.r1_max

    def contains(self, r1, tol: float = 0.0):
        r1 = np.asarray(r1, dtype=float)
        return (r1 >= self.r1_min - tol) & (r1 <= self.r1_max + tol)


@dataclass(frozen=True)
class RateBox:
    mins: np.ndarray
    maxs: np.ndarray
    extrema: np.ndarray = None  # (3, 4) unclipped candidates behind each bound

    def __post_init__(self):
        mins = np.array(self.mins, dtype=float).reshape(-1)
        maxs = np.array(self.maxs, dtype=float).reshape(-1)
        if mins.shape != (3,) or maxs.shape != (3,):
            raise DimensionError("rate box needs three mins and three maxs")
        if np.any(mins < 0) or np.any(mins > maxs):
            raise BitAllocError("rate box requires 0 <= mins <= maxs")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    def contains(self, rates, tol: float = 0.0):
        r = np.asarray(rates, dtype=float)
        return np.all((r >= self.mins - tol) & (r <= self.maxs + tol), axis=-1)


@dataclass(frozen=True)
class ParetoBound:
    box: RateBox
    total_rate: float
    polygon_vertices: tuple

    @property
    def vertex_array(self) -> np.ndarray:
        return np.array([v.rates for v in self.polygon_vertices])

    def contains(self, rates, tol: float = 0.0):
        """True where a rate vector lies in box ∩ plane, within ``tol`` Kbits."""
        r = np.asarray(rates, dtype=float)
        on_plane = np.abs(r.sum(axis=-1) - self.total_rate) <= tol
        return on_plane & self.box.contains(r, tol)


@dataclass(frozen=True)
class ParetoSample:
    weights: TaskWeights
    rates: RateVector
    distortions: np.ndarray


def _require_streams(surfaces, n):
    got = check_same_streams(surfaces)
    if got != n:
        raise DimensionError(f"expected {n}-stream surfaces, got {got}")


# -- 2 x k ---------------------------------------------------------------------

def per_task_line_minimizer_2stream(surface: DistortionSurface,
                                    total_rate: float) -> RateVector:
    """Minimiser of one task along ``R1 + R2 = Rt``, clipped to the segment ends."""
    _require_streams([surface], 2)
    a, b = surface.alphas, surface.betas
    r1 = ((np.log2(a[0] * b[0]) - np.log2(a[1] * b[1]) + b[1] * total_rate)
          / (b[0] + b[1]))
    r1 = min(max(r1, 0.0), total_rate)
    return RateVector([r1, total_rate - r1])


def pareto_segment_2xk(surfaces: Sequence[DistortionSurface],
                       total_rate: float) -> ParetoSegment:
    surfaces = list(surfaces)
    _require_streams(surfaces, 2)
    if not total_rate > 0:
        raise BitAllocError("total rate must be positive")
    mins = tuple(per_task_line_minimizer_2stream(s, total_rate) for s in surfaces)
    r1 = [m[0] for m in mins]
    lo, hi = min(r1), max(r1)
    return ParetoSegment(
        total_rate=float(total_rate),
        endpoint_low=RateVector([lo, total_rate - lo]),
        endpoint_high=RateVector([hi, total_rate - hi]),
        per_task_minimizers=mins,
    )


# -- 3 x 2 ---------------------------------------------------------------------

def weight_ratio_3x2(surfaces: Sequence[DistortionSurface], r1, r3):
    """Task weight ratio ``w1 / w2`` implied by equal marginals on streams 1 and 3.

    Positive values mark rate pairs that some strictly positive weighting can
    make stationary.  A zero denominator yields ``±inf`` (or NaN when the
    numerator also vanishes) instead of raising.
    """
    if len(surfaces) != 2:
        raise DimensionError("weight ratio is defined for two tasks")
    _require_streams(surfaces, 3)
    r1 = np.asarray(r1, dtype=float)
    r3 = np.asarray(r3, dtype=float)

    def diff(s):
        ab = s.alphas * s.betas
        return (ab[0] * np.exp2(-s.betas[0] * r1)
                - ab[2] * np.exp2(-s.betas[2] * r3))

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = -diff(surfaces[1]) / diff(surfaces[0])
    return float(ratio) if ratio.ndim == 0 else ratio


def _extremum(beta, logab, total_rate, j, p, q, a, b):
    # Stream p follows task a's equal-marginal line with stream j, stream q
    # follows task b's; the rates then sum to the budget.
    bp, bq = beta[a, p], beta[b, q]
    num = (total_rate * bp * bq - bq * logab[a, p] - bp * logab[b, q]
           + bq * logab[a, j] + bp * logab[b, j])
    den = bp * bq + beta[a, j] * bq + beta[b, j] * bp
    return num / den


def rate_extrema_3x2(surfaces: Sequence[DistortionSurface],
                     total_rate: float) -> RateBox:
    """Per-stream rate range containing every Pareto-optimal allocation."""
    surfaces = list(surfaces)
    if len(surfaces) != 2:
        raise DimensionError("rate extrema are defined for two tasks")
    _require_streams(surfaces, 3)
    beta = np.array([s.betas for s in surfaces])
    logab = np.log2(np.array([s.alphas * s.betas for s in surfaces]))
    ext = np.empty((3, 4))
    for j in range(3):
        p, q = [i for i in range(3) if i != j]
        for col, (a, b) in enumerate(product((1, 0), repeat=2)):
            ext[j, col] = _extremum(beta, logab, total_rate, j, p, q, a, b)
    mins = np.maximum(np.minimum(ext.min(axis=1), total_rate), 0.0)
    maxs = np.minimum(np.maximum(ext.max(axis=1), 0.0), total_rate)
    return RateBox(mins, maxs, ext)


def _clip_polygon(points, axis, bound, sign, tol):
    # Keep the side where sign * (x[axis] - bound) >= 0.
    if not points:
        return []
    out = []
    n = len(points)
    for i in range(n):
        cur, nxt = points[i], points[(i + 1) % n]
        dc = sign * (cur[axis] - bound)
        dn = sign * (nxt[axis] - bound)
        if dc >= -tol:
            out.append(cur)
        if (dc > tol and dn < -tol) or (dc < -tol and dn > tol):
            t = dc / (dc - dn)
            out.append(cur + t * (nxt - cur))
    return out


def _tidy(points, tol):
    pts = []
    for p in points:
        if not pts or np.max(np.abs(p - pts[-1])) > tol:
            pts.append(p)
    while len(pts) > 1 and np.max(np.abs(pts[0] - pts[-1])) <= tol:
        pts.pop()
    changed = True
    while changed and len(pts) > 2:
        changed = False
        for i in range(len(pts)):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % len(pts)]
            ac = c - a
            denom = np.linalg.norm(ac)
            dist = np.linalg.norm(np.cross(b - a, ac)) / denom if denom > 0 else 0.0
            if dist <= tol:
                del pts[i]
                changed = True
                break
    return pts


def bound_polygon_3x2(box: RateBox, total_rate: float) -> ParetoBound:
    """Intersect ``box`` with the plane ``R1 + R2 + R3 = Rt``.

    Vertices run counter-clockwise seen from the direction (1, 1, 1).
    Degenerate intersections come back as one or two vertices.
    """
    if not total_rate > 0:
        raise BitAllocError("total rate must be positive")
    tol = 1e-9 * total_rate
    if box.mins.sum() > total_rate + tol or box.maxs.sum() < total_rate - tol:
        raise EmptyIntersectionError("budget plane does not meet the rate box")
    poly = [np.array([total_rate, 0.0, 0.0]),
            np.array([0.0, total_rate, 0.0]),
            np.array([0.0, 0.0, total_rate])]
    for axis in range(3):
        poly = _clip_polygon(poly, axis, box.mins[axis], 1.0, tol)
        poly = _clip_polygon(poly, axis, box.maxs[axis], -1.0, tol)
    poly = _tidy(poly, tol)
    if not poly:
        raise EmptyIntersectionError("budget plane does not meet the rate box")
    verts = tuple(RateVector(np.clip(p, box.mins, box.maxs)) for p in poly)
    return ParetoBound(box=box, total_rate=float(total_rate), polygon_vertices=verts)


def pareto_bound_3x2(surfaces, total_rate) -> ParetoBound:
    return bound_polygon_3x2(rate_extrema_3x2(surfaces, total_rate), total_rate)


# -- sampling and dominance ----------------------------------------------------

def draw_weights(n_tasks: int, n_samples: int, seed: int, floor: float = 1e-9) -> np.ndarray:
    """Uniform weights on the open simplex, kept away from exact zeros."""
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(n_tasks), size=n_samples)
    w = np.maximum(w, floor)
    return w / w.sum(axis=1, keepdims=True)


def sample_pareto_by_weights(surfaces: Sequence[DistortionSurface], total_rate: float,
                             n_samples: int, seed: int = 0) -> list[ParetoSample]:
    surfaces = list(surfaces)
    if n_samples < 1:
        raise BitAllocError("n_samples must be >= 1")
    w = draw_weights(len(surfaces), n_samples, seed)
    rates, _ = fit_first_batch(surfaces, w, total_rate)
    return [ParetoSample(TaskWeights(wi), RateVector(ri), evaluate_all(surfaces, ri))
            for wi, ri in zip(w, rates)]


def dominance_check(candidates, weak: bool = False, margin: float = 0.0,
                    chunk: int = 512) -> list[bool]:
    """Flag candidates that no other candidate dominates (minimisation).

    ``candidates`` is either a sequence of ``(rates, distortions)`` pairs or a
    2-D array of distortion vectors.  With ``weak=True`` a candidate is only
    beaten by one that is strictly better in every task.  A strict
    improvement only counts when it exceeds ``margin``.
    """
    if len(candidates) == 0:
        return []
    if isinstance(candidates, np.ndarray):
        d = np.atleast_2d(np.asarray(candidates, dtype=float))
    else:
        d = np.array([np.asarray(c[1], dtype=float).reshape(-1) for c in candidates])
    if d.ndim != 2:
        raise DimensionError("distortion vectors must share one length")
    n = d.shape[0]
    keep = np.ones(n, dtype=bool)
    for start in range(0, n, chunk):
        block = d[start:start + chunk]                  # candidates being judged
        other = d[None, :, :]
        me = block[:, None, :]
        strictly = other < me - margin
        if weak:
            beaten = np.all(strictly, axis=2)
        else:
            beaten = np.all(other <= me, axis=2) & np.any(strictly, axis=2)
        keep[start:start + chunk] = ~beaten.any(axis=1)
    return keep.tolist()

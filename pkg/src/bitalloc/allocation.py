"""Optimal and baseline bit allocation under a total rate budget.

Single-task problems are solved in closed form by reverse water-filling.
Weighted multi-task problems are solved either by fitting one surface to the
weighted measured distortions (scalarize-first) or by minimising the weighted
sum of per-task surfaces directly (fit-first).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fitting import (
    FitConfig,
    FitReport,
    InsufficientSamplesError,
    MeasuredSample,
    fit_arrays,
    samples_to_arrays,
    window_samples,
)
from .model import (
    LN2,
    Allocation,
    BitAllocError,
    DimensionError,
    DistortionSurface,
    RateVector,
    check_same_streams,
    evaluate_all,
    evaluate_surface,
    validate_weights,
)


@dataclass(frozen=True)
class TaskWeights:
    weights: np.ndarray

    def __post_init__(self):
        w = validate_weights(self.weights)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size

    def __array__(self, dtype=None, copy=None):
        return self.weights if dtype is None else self.weights.astype(dtype)


@dataclass(frozen=True)
class StreamMeta:
    element_counts: tuple
    element_variances: Optional[tuple] = None

    def __post_init__(self):
        counts = tuple(int(c) for c in self.element_counts)
        if not counts or any(c <= 0 for c in counts):
            raise BitAllocError("element counts must be positive integers")
        object.__setattr__(self, "element_counts", counts)
        if self.element_variances is not None:
            var = tuple(float(v) for v in self.element_variances)
            if len(var) != len(counts) or any(not v > 0 for v in var):
                raise BitAllocError("element variances must be positive, one per stream")
            object.__setattr__(self, "element_variances", var)


def _check_total(total_rate: float):
    if not (np.isfinite(total_rate) and total_rate > 0):
        raise BitAllocError("total rate must be positive")


def _weights_array(weights, n_tasks: int) -> np.ndarray:
    if isinstance(weights, TaskWeights):
        weights = weights.weights
    return validate_weights(weights, n_tasks)


# -- single task: reverse water-filling ------------------------------------

def _water_level(c: np.ndarray, betas: np.ndarray, active: np.ndarray,
                 total_rate: float) -> float:
    # Summation runs in stream-index order so every caller gets identical bits.
    inv = 1.0 / betas[active]
    return float((np.sum(c[active] * inv) - total_rate) / np.sum(inv))


def _fill_brackets(c: np.ndarray, betas: np.ndarray, active: np.ndarray,
                   total_rate: float) -> np.ndarray:
    """``Rt + sum_i (c_j - c_i) / beta_i`` over the active set, for every stream j.

    Positive exactly where the stream sits above the water level; this form
    avoids the cancellation of ``c_j - log2(lambda)`` when one ``1/beta`` dominates.
    """
    inv = 1.0 / betas[active]
    return total_rate + (c[:, None] - c[None, active]) @ inv


def _rates_from_brackets(betas, active, brackets) -> np.ndarray:
    inv = np.where(active, 1.0 / betas, 0.0)
    share = inv / inv[active].sum()
    return np.where(active, share * np.maximum(brackets, 0.0), 0.0)


def _solve_on(surface, active, total_rate) -> Allocation:
    c, b = surface.log2_slopes, surface.betas
    rates = _rates_from_brackets(b, active, _fill_brackets(c, b, active, total_rate))
    return _allocation([surface], rates, _water_level(c, b, active, total_rate))


def _allocation(surfaces, rates, level) -> Allocation:
    active = {j for j in range(rates.size) if rates[j] > 0}
    return Allocation(RateVector(rates), level, frozenset(active),
                      evaluate_all(surfaces, rates))


def waterfill_closed_form(surface: DistortionSurface, total_rate: float) -> Allocation:
    """Reverse water-filling solution for one surface.

    Streams with a larger ``log2(ln2 * alpha_j * beta_j)`` are filled first;
    the active set is the largest prefix of that ordering whose weakest member
    still sits above the water level computed over the prefix.
    """
    _check_total(total_rate)
    c, b = surface.log2_slopes, surface.betas
    order = np.argsort(-c, kind="stable")
    best = np.zeros(c.size, dtype=bool)
    best[order[0]] = True
    mask = best.copy()
    for j in order[1:]:
        mask[j] = True
        if _fill_brackets(c, b, mask, total_rate)[j] > 0:
            best = mask.copy()
    return _solve_on(surface, best, total_rate)


def active_set_waterfill(surface: DistortionSurface, total_rate: float) -> Allocation:
    """Reverse water-filling by repeatedly dropping streams below the water level."""
    _check_total(total_rate)
    c, b = surface.log2_slopes, surface.betas
    active = np.ones(c.size, dtype=bool)
    for _ in range(c.size):
        drop = active & (_fill_brackets(c, b, active, total_rate) <= 0)
        if not drop.any():
            break
        active &= ~drop
    return _solve_on(surface, active, total_rate)


# -- weighted multi-task: nested root finding ------------------------------

def _log2_marginal(log_coef, betas, rates):
    """log2 of the weighted marginal of each stream and its slope in rate.

    ``log_coef``: (B, k, N) log2 of ``w_i ln2 alpha_ij beta_ij``;
    ``rates``: (B, N).  Returns two (B, N) arrays.
    """
    expo = log_coef - betas[None] * rates[:, None, :]
    top = np.max(expo, axis=1, keepdims=True)
    p = np.exp2(expo - top)
    tot = p.sum(axis=1)
    level = top[:, 0, :] + np.log2(tot)
    slope = -np.sum(p * betas[None], axis=1) / tot
    return level, slope


def _rates_at_level(log_coef, betas, level, total_rate, max_iter=200):
    """Per-stream rate whose weighted marginal equals ``2**level``, capped to [0, Rt].

    Newton on the convex, decreasing log-marginal started at zero rate
    approaches the root monotonically from below.
    """
    bsz, _, n = log_coef.shape
    rates = np.zeros((bsz, n))
    h, slope = _log2_marginal(log_coef, betas, rates)
    todo = h > level[:, None]
    tol = 1e-14 * total_rate
    for _ in range(max_iter):
        if not todo.any():
            break
        step = np.where(todo, (h - level[:, None]) / -slope, 0.0)
        rates = np.where(todo, np.minimum(rates + step, total_rate), rates)
        todo &= (np.abs(step) > tol) & (rates < total_rate)
        h, slope = _log2_marginal(log_coef, betas, rates)
    return rates, slope


def _fit_first_batch(alphas, betas, weights, total_rate, rtol=1e-12, max_iter=300):
    """Solve ``min sum_i w_i D_i(R)`` on the budget simplex for each weight row.

    ``alphas``/``betas``: (k, N); ``weights``: (B, k).  Returns rates (B, N)
    and the log2 water level (B,).
    """
    with np.errstate(divide="ignore"):
        log_coef = (np.log2(weights)[:, :, None]
                    + np.log2(LN2 * alphas * betas)[None])
    bsz, n = weights.shape[0], alphas.shape[1]
    h0, _ = _log2_marginal(log_coef, betas, np.zeros((bsz, n)))
    ht, _ = _log2_marginal(log_coef, betas, np.full((bsz, n), float(total_rate)))
    lo = ht.min(axis=1)        # budget overfilled at this level
    hi = h0.max(axis=1)        # every stream empty at this level
    level = 0.5 * (lo + hi)
    tol = rtol * total_rate
    done = np.zeros(bsz, dtype=bool)
    for _ in range(max_iter):
        rates, slope = _rates_at_level(log_coef, betas, level, total_rate)
        excess = rates.sum(axis=1) - total_rate
        done = np.abs(excess) <= tol
        if done.all():
            break
        lo = np.where(excess > 0, level, lo)
        hi = np.where(excess < 0, level, hi)
        interior = (rates > 0) & (rates < total_rate)
        deriv = np.sum(np.where(interior, 1.0 / slope, 0.0), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = level - excess / deriv
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        level = np.where(done, level, np.where(ok, newton, 0.5 * (lo + hi)))
        # A collapsed bracket means the remaining excess is representable error.
        done |= (hi - lo) <= 1e-15 * np.maximum(np.abs(level), 1.0)
        if done.all():
            break
    rates, _ = _rates_at_level(log_coef, betas, level, total_rate)
    # A stream holding the whole budget pins the level to its own marginal.
    capped = rates >= total_rate
    if capped.any():
        h, _ = _log2_marginal(log_coef, betas, rates)
        rows = capped.any(axis=1)
        level = np.where(rows, np.max(np.where(capped, h, -np.inf), axis=1), level)
        rates, _ = _rates_at_level(log_coef, betas, level, total_rate)
    return rates, level


def _stack_params(surfaces):
    check_same_streams(surfaces)
    return (np.array([s.alphas for s in surfaces]),
            np.array([s.betas for s in surfaces]))


def fit_first_batch(surfaces: Sequence[DistortionSurface], weight_matrix,
                    total_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised fit-first over many weight vectors; returns ``(rates, levels)``."""
    _check_total(total_rate)
    alphas, betas = _stack_params(surfaces)
    w = np.atleast_2d(np.asarray(weight_matrix, dtype=float))
    if w.shape[1] != len(surfaces):
        raise DimensionError(f"expected {len(surfaces)} weights per row, got {w.shape[1]}")
    for row in w:
        validate_weights(row)
    return _fit_first_batch(alphas, betas, w, total_rate)


def fit_first(surfaces: Sequence[DistortionSurface], weights, total_rate: float) -> Allocation:
    """Minimise the weighted sum of fitted task surfaces under the budget."""
    surfaces = list(surfaces)
    w = _weights_array(weights, len(surfaces))
    rates, level = fit_first_batch(surfaces, w[None], total_rate)
    return _allocation(surfaces, rates[0], float(level[0]))


# -- sample-driven pipelines ------------------------------------------------

@dataclass(frozen=True)
class PipelineResult:
    allocation: Allocation
    fits: tuple


def scalarize_first(samples: Sequence[MeasuredSample], weights, total_rate: float,
                    config: FitConfig = FitConfig()) -> Allocation:
    """Fit one surface to the weighted measured distortions, then water-fill it.

    ``achieved_distortions`` holds the fitted scalarized distortion at the
    returned rates (a single value).
    """
    return scalarize_first_report(samples, weights, total_rate, config).allocation


def scalarize_first_report(samples, weights, total_rate, config=FitConfig()) -> PipelineResult:
    _check_total(total_rate)
    rates, dist = _windowed_arrays(samples, total_rate, config)
    w = _weights_array(weights, dist.shape[1])
    report = fit_arrays(rates, dist @ w, config)
    return PipelineResult(waterfill_closed_form(report.surface, total_rate), (report,))


def fit_first_from_samples(samples, weights, total_rate, config=FitConfig()) -> PipelineResult:
    """Fit every task on the windowed samples, then solve the weighted problem."""
    _check_total(total_rate)
    rates, dist = _windowed_arrays(samples, total_rate, config)
    w = _weights_array(weights, dist.shape[1])
    reports = tuple(fit_arrays(rates, dist[:, i], config) for i in range(dist.shape[1]))
    alloc = fit_first([r.surface for r in reports], w, total_rate)
    return PipelineResult(alloc, reports)


def _windowed_arrays(samples, total_rate, config):
    kept = window_samples(samples, total_rate, config.window_low, config.window_high)
    if not kept:
        raise InsufficientSamplesError("no samples in window")
    return samples_to_arrays(kept)


# -- baselines ---------------------------------------------------------------

def baseline_equal(n_streams: int, total_rate: float) -> RateVector:
    if n_streams < 1:
        raise DimensionError("need at least one stream")
    _check_total(total_rate)
    return RateVector(np.full(n_streams, total_rate / n_streams))


def baseline_proportional(quantities, total_rate: float) -> RateVector:
    q = np.asarray(quantities, dtype=float).reshape(-1)
    if q.size == 0 or not np.all(np.isfinite(q)) or np.any(q <= 0):
        raise BitAllocError("quantities must be positive")
    _check_total(total_rate)
    return RateVector(total_rate * q / q.sum())


def evaluate_rates(surfaces: Sequence[DistortionSurface], rates) -> Allocation:
    """Wrap a fixed rate split (e.g. a baseline) as an Allocation without a water level."""
    r = np.asarray(rates, dtype=float)
    check_same_streams(surfaces)
    return _allocation(list(surfaces), r, float("nan"))


def scalarized_distortion(surfaces, weights, rates) -> float:
    w = _weights_array(weights, len(surfaces))
    return float(sum(wi * evaluate_surface(s, rates) for wi, s in zip(w, surfaces)))


def weighted_marginals(surfaces, weights, rates) -> np.ndarray:
    """``sum_i w_i * ln2 * alpha_ij * beta_ij * 2**(-beta_ij R_j)`` per stream."""
    w = _weights_array(weights, len(surfaces))
    r = np.asarray(rates, dtype=float)
    return sum(wi * LN2 * s.alphas * s.betas * np.exp2(-s.betas * r)
               for wi, s in zip(w, surfaces))

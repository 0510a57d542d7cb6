"""Least-squares fitting of distortion-rate surfaces to measured samples.

Fitting uses a Levenberg-Marquardt iteration written against the analytic
Jacobian of the exponential model.  The amplitudes and decay rates are fitted
through their logarithms so every fitted surface is convex and decreasing by
construction; the offset is fitted directly.  All multistart runs are advanced
together as one batch of independent problems.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import (
    LN2,
    BitAllocError,
    DimensionError,
    DistortionSurface,
    RateVector,
)

# Keeps exp() of the log-parameters finite while LM explores.
_LOG_PARAM_BOUND = 60.0
_GRID_CELLS = 4096


class InsufficientSamplesError(BitAllocError):
    pass


class DegenerateDataError(BitAllocError):
    pass


class NonConvergenceError(BitAllocError):
    pass


@dataclass(frozen=True)
class MeasuredSample:
    rates: RateVector
    distortions: np.ndarray

    def __post_init__(self):
        if not isinstance(self.rates, RateVector):
            object.__setattr__(self, "rates", RateVector(self.rates))
        d = np.array(self.distortions, dtype=float).reshape(-1)
        if not np.all(np.isfinite(d)):
            raise BitAllocError("distortions must be finite")
        if np.any(d < 0):
            raise BitAllocError("distortions must be nonnegative")
        d.flags.writeable = False
        object.__setattr__(self, "distortions", d)

    @property
    def total_rate(self) -> float:
        return self.rates.total


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 200
    damping_init: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    convergence_tol: float = 1e-10
    multistart_count: int = 8
    seed: int = 0
    window_low: float = 0.75
    window_high: float = 1.25

    def __post_init__(self):
        for name in ("max_iterations", "damping_init", "damping_up", "damping_down",
                     "convergence_tol", "multistart_count", "window_low", "window_high"):
            if not getattr(self, name) > 0:
                raise BitAllocError(f"FitConfig.{name} must be positive")
        if not self.damping_up > 1 > self.damping_down:
            raise BitAllocError("need damping_up > 1 > damping_down")
        if not self.window_high >= self.window_low:
            raise BitAllocError("window_high must not be below window_low")


@dataclass(frozen=True)
class FitReport:
    surface: DistortionSurface
    r_squared: float
    mean_residual: float
    residuals: np.ndarray
    n_samples_used: int
    iterations: int
    converged: bool
    cost_history: tuple = field(default=(), repr=False)


def samples_to_arrays(samples: Sequence[MeasuredSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into ``(rates, distortions)`` arrays of shape (n, N) and (n, k)."""
    if len(samples) == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    n_streams = len(samples[0].rates)
    n_tasks = samples[0].distortions.size
    for s in samples:
        if len(s.rates) != n_streams or s.distortions.size != n_tasks:
            raise DimensionError("samples have inconsistent dimensions")
    rates = np.array([s.rates.rates for s in samples])
    dist = np.array([s.distortions for s in samples])
    return rates, dist


def window_samples(samples: Sequence[MeasuredSample], total_rate: float,
                   low: float = 0.75, high: float = 1.25) -> list[MeasuredSample]:
    """Keep the samples whose rate sum lies in ``[low * total_rate, high * total_rate]``."""
    if not total_rate > 0:
        raise BitAllocError("total rate must be positive")
    lo, hi = low * total_rate, high * total_rate
    return [s for s in samples if lo <= s.total_rate <= hi]


def r_squared(measured, predicted) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    m = np.asarray(measured, dtype=float).reshape(-1)
    p = np.asarray(predicted, dtype=float).reshape(-1)
    if m.size == 0 or m.shape != p.shape:
        raise DimensionError("measured and predicted must be nonempty and equal length")
    ss_tot = np.sum((m - m.mean()) ** 2)
    if ss_tot == 0:
        raise DegenerateDataError("zero total variance")
    return float(1.0 - np.sum((m - p) ** 2) / ss_tot)


def _model_and_jacobian(theta: np.ndarray, rates: np.ndarray):
    # theta: (M, 1 + 2N) as [gamma, log alpha_1..N, log beta_1..N]
    n = rates.shape[1]
    gamma = theta[:, 0]
    alpha = np.exp(theta[:, 1:1 + n])
    beta = np.exp(theta[:, 1 + n:])
    decay = np.exp2(-beta[:, None, :] * rates[None, :, :])       # (M, S, N)
    terms = alpha[:, None, :] * decay
    pred = gamma[:, None] + terms.sum(axis=2)
    jac = np.empty((theta.shape[0], rates.shape[0], theta.shape[1]))
    jac[:, :, 0] = 1.0
    jac[:, :, 1:1 + n] = terms
    jac[:, :, 1 + n:] = -LN2 * terms * beta[:, None, :] * rates[None, :, :]
    return pred, jac


def _predict(theta: np.ndarray, rates: np.ndarray) -> np.ndarray:
    n = rates.shape[1]
    alpha = np.exp(theta[:, 1:1 + n])
    beta = np.exp(theta[:, 1 + n:])
    return theta[:, :1] + (alpha[:, None, :]
                           * np.exp2(-beta[:, None, :] * rates[None, :, :])).sum(axis=2)


def initial_guess(rates: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Data-driven starting point in log-parameter space."""
    n = rates.shape[1]
    span = rates.max(axis=0) - rates.min(axis=0)
    span = np.where(span > 0, span, np.maximum(rates.max(axis=0), 1.0))
    amp = max(float(y.max() - y.min()), 1e-12) / n
    # Half-decay across each stream's observed rate span.
    beta = 1.0 / span
    return np.concatenate([[y.min()], np.full(n, np.log(amp)), np.log(beta)])


def grid_starts(rates: np.ndarray, y: np.ndarray, count: int,
                points_per_stream: Optional[int] = None) -> np.ndarray:
    """Best ``count`` starting points from a grid over the decay rates.

    With the decays fixed the model is linear in the offset and amplitudes,
    so each grid cell is scored by an ordinary least-squares solve.
    Amplitudes that come out nonpositive are floored before scoring.  By
    default the grid has about 4096 cells, at most 32 points per stream.
    """
    n = rates.shape[1]
    if points_per_stream is None:
        points_per_stream = max(2, min(32, int(round(_GRID_CELLS ** (1.0 / n)))))
    span = rates.max(axis=0) - rates.min(axis=0)
    span = np.where(span > 0, span, np.maximum(rates.max(axis=0), 1.0))
    # Decay across the observed span from 2**-0.1 to 2**-50.
    levels = np.geomspace(0.1, 50.0, points_per_stream)
    mesh = np.stack(np.meshgrid(*([levels] * n), indexing="ij"), -1).reshape(-1, n)
    betas = mesh / span
    design = np.ones((betas.shape[0], y.size, n + 1))
    design[:, :, 1:] = np.exp2(-betas[:, None, :] * rates[None, :, :])
    xtx = np.einsum("csp,csq->cpq", design, design)
    xty = np.einsum("csp,s->cp", design, y)
    ridge = 1e-12 * np.trace(xtx, axis1=1, axis2=2)[:, None, None] * np.eye(n + 1)
    coef = np.linalg.solve(xtx + ridge, xty[:, :, None])[:, :, 0]
    amp_floor = 1e-6 * max(float(y.max() - y.min()), 1e-12)
    coef[:, 1:] = np.maximum(coef[:, 1:], amp_floor)
    sse = np.sum(((design @ coef[:, :, None])[:, :, 0] - y[None, :]) ** 2, axis=1)
    best = np.argsort(sse, kind="stable")[:count]
    return np.column_stack([coef[best, 0], np.log(coef[best, 1:]), np.log(betas[best])])


def levenberg_marquardt(rates: np.ndarray, y: np.ndarray, theta0: np.ndarray,
                        config: FitConfig):
    """Run one LM problem per row of ``theta0``.

    Returns ``(theta, cost, iterations, converged, history)`` where ``history``
    is a list (per run) of the costs at accepted steps, starting from the
    initial cost.
    """
    theta = np.array(theta0, dtype=float, ndmin=2)
    m, p = theta.shape
    scale = max(float(np.max(np.abs(y))), 1.0)
    cost_floor = 0.5 * y.size * (1e-14 * scale) ** 2

    pred, jac = _model_and_jacobian(theta, rates)
    resid = y[None, :] - pred
    cost = 0.5 * np.sum(resid ** 2, axis=1)
    damping = np.full(m, config.damping_init)
    active = np.ones(m, dtype=bool)
    converged = np.zeros(m, dtype=bool)
    iterations = np.zeros(m, dtype=int)
    history = [[float(c)] for c in cost]
    eye = np.eye(p)

    for _ in range(config.max_iterations):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        iterations[idx] += 1
        j = jac[idx]
        jtj = np.einsum("msp,msq->mpq", j, j)
        jtr = np.einsum("msp,ms->mp", j, resid[idx])
        diag = np.diagonal(jtj, axis1=1, axis2=2)
        diag = np.maximum(diag, 1e-12 * diag.max(axis=1, keepdims=True) + 1e-300)
        lhs = jtj + damping[idx, None, None] * diag[:, :, None] * eye
        try:
            step = np.linalg.solve(lhs, jtr[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(a, b, rcond=None)[0]
                             for a, b in zip(lhs, jtr)])
        trial = theta[idx] + step
        trial[:, 1:] = np.clip(trial[:, 1:], -_LOG_PARAM_BOUND, _LOG_PARAM_BOUND)
        trial_pred, trial_jac = _model_and_jacobian(trial, rates)
        trial_resid = y[None, :] - trial_pred
        trial_cost = 0.5 * np.sum(trial_resid ** 2, axis=1)

        ok = np.isfinite(trial_cost) & (trial_cost < cost[idx])
        acc = idx[ok]
        rej = idx[~ok]
        rel_drop = (cost[acc] - trial_cost[ok]) / np.maximum(cost[acc], 1e-300)
        theta[acc] = trial[ok]
        jac[acc] = trial_jac[ok]
        resid[acc] = trial_resid[ok]
        cost[acc] = trial_cost[ok]
        damping[acc] *= config.damping_down
        damping[rej] *= config.damping_up
        for run, c in zip(acc, trial_cost[ok]):
            history[run].append(float(c))

        done = acc[(rel_drop < config.convergence_tol) | (cost[acc] <= cost_floor)]
        # Damping this large means no descent direction survives at float precision.
        stalled = rej[damping[rej] > 1e16]
        converged[done] = True
        converged[stalled] = True
        active[done] = False
        active[stalled] = False

    return theta, cost, iterations, converged, history


def _theta_to_surface(theta: np.ndarray, n: int) -> DistortionSurface:
    return DistortionSurface(theta[0], np.exp(theta[1:1 + n]), np.exp(theta[1 + n:]))


def fit_arrays(rates: np.ndarray, y: np.ndarray, config: FitConfig = FitConfig()) -> FitReport:
    """Fit one surface to a rate matrix ``(n, N)`` and a distortion vector ``(n,)``."""
    rates = np.asarray(rates, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if rates.ndim != 2 or rates.shape[0] != y.size:
        raise DimensionError("rates must be (n_samples, n_streams) matching distortions")
    n = rates.shape[1]
    if y.size < 2 * n + 2:
        raise InsufficientSamplesError(
            f"need at least {2 * n + 2} samples for {n} streams, got {y.size}")
    if np.all(y == y[0]):
        raise DegenerateDataError("zero total variance")

    # Run 0 is the data-driven guess; about half the rest come from the decay
    # grid and the remainder perturb the guess by factors in [0.25, 4].
    base = initial_guess(rates, y)
    rng = np.random.default_rng(config.seed)
    m = config.multistart_count
    starts = np.tile(base, (m, 1))
    n_grid = 0
    if m > 1:
        grid = grid_starts(rates, y, m // 2)
        n_grid = grid.shape[0]
        starts[1:1 + n_grid] = grid
    n_rand = m - 1 - n_grid
    if n_rand > 0:
        starts[m - n_rand:, 1:] += rng.uniform(np.log(0.25), np.log(4.0), size=(n_rand, 2 * n))

    theta, cost, iters, conv, hist = levenberg_marquardt(rates, y, starts, config)
    best = int(np.argmin(np.where(np.isfinite(cost), cost, np.inf)))
    surface = _theta_to_surface(theta[best], n)
    pred = _predict(theta[best:best + 1], rates)[0]
    residuals = y - pred
    r2 = min(max(r_squared(y, pred), 0.0), 1.0)
    return FitReport(
        surface=surface,
        r_squared=r2,
        mean_residual=float(residuals.mean()),
        residuals=residuals,
        n_samples_used=int(y.size),
        iterations=int(iters[best]),
        converged=bool(conv[best]),
        cost_history=tuple(hist[best]),
    )


def fit_surface(samples: Sequence[MeasuredSample], task_index: int = 0,
                config: FitConfig = FitConfig()) -> FitReport:
    """Fit the surface of task ``task_index`` to ``samples`` (no windowing applied)."""
    if len(samples) == 0:
        raise InsufficientSamplesError("no samples to fit")
    rates, dist = samples_to_arrays(samples)
    if not 0 <= task_index < dist.shape[1]:
        raise DimensionError(f"task index {task_index} out of range for {dist.shape[1]} tasks")
    return fit_arrays(rates, dist[:, task_index], config)


def fit_all_tasks(samples: Sequence[MeasuredSample],
                  config: FitConfig = FitConfig()) -> list[FitReport]:
    rates, dist = samples_to_arrays(samples)
    if dist.size == 0:
        raise InsufficientSamplesError("no samples to fit")
    return [fit_arrays(rates, dist[:, i], config) for i in range(dist.shape[1])]


def inverse_mean_weights(samples: Sequence[MeasuredSample]) -> np.ndarray:
    """Task weights inversely proportional to each task's mean distortion."""
    _, dist = samples_to_arrays(samples)
    if dist.size == 0:
        raise InsufficientSamplesError("no samples")
    means = dist.mean(axis=0)
    if np.any(means == 0):
        raise DegenerateDataError("zero mean distortion")
    inv = 1.0 / means
    return inv / inv.sum()

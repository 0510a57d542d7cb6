"""Domain types and distortion-rate surface evaluation.

Rates are in Kbits per tensor and distortions in percent-drop units
throughout; none of the functions here enforce units.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Optional, Sequence

import numpy as np

LN2 = math.log(2.0)


class BitAllocError(ValueError):
    """Base class for invalid-input errors raised by this package."""


class DimensionError(BitAllocError):
    """Raised when vector lengths disagree with the number of streams or tasks."""


@dataclass(frozen=True)
class AccuracyPair:
    baseline_accuracy: float
    compressed_accuracy: float

    def __post_init__(self):
        if self.baseline_accuracy == 0:
            raise BitAllocError("baseline accuracy must be nonzero")


@dataclass(frozen=True)
class DistortionSurface:
    """Convex model ``D(R) = gamma + sum_j alpha_j * 2**(-beta_j * R_j)``.

    ``alphas`` and ``betas`` are stored as read-only float arrays of equal
    length, one entry per stream.
    """

    gamma: float
    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        alphas = np.array(self.alphas, dtype=float).reshape(-1)
        betas = np.array(self.betas, dtype=float).reshape(-1)
        if alphas.size == 0 or alphas.shape != betas.shape:
            raise DimensionError(
                f"alphas and betas must be nonempty and equal length, "
                f"got {alphas.size} and {betas.size}")
        if not (np.all(alphas > 0) and np.all(betas > 0)):
            raise BitAllocError("alphas and betas must be strictly positive")
        if not (math.isfinite(self.gamma) and np.all(np.isfinite(alphas))
                and np.all(np.isfinite(betas))):
            raise BitAllocError("surface parameters must be finite")
        alphas.flags.writeable = False
        betas.flags.writeable = False
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "betas", betas)

    @property
    def n_streams(self) -> int:
        return self.alphas.size

    @property
    def log2_slopes(self) -> np.ndarray:
        """``log2(ln2 * alpha_j * beta_j)``, the stream's marginal at zero rate in log2."""
        return np.log2(LN2 * self.alphas * self.betas)

    def __call__(self, rates) -> float:
        return evaluate_surface(self, rates)

    def __eq__(self, other):
        if not isinstance(other, DistortionSurface):
            return NotImplemented
        return (self.gamma == other.gamma
                and np.array_equal(self.alphas, other.alphas)
                and np.array_equal(self.betas, other.betas))

    def __hash__(self):
        return hash((self.gamma, self.alphas.tobytes(), self.betas.tobytes()))


@dataclass(frozen=True)
class RateVector:
    rates: np.ndarray

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float).reshape(-1)
        if rates.size == 0:
            raise DimensionError("rate vector must be nonempty")
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise BitAllocError("invalid rate: rates must be finite and nonnegative")
        rates.flags.writeable = False
        object.__setattr__(self, "rates", rates)

    def __len__(self):
        return self.rates.size

    def __getitem__(self, j):
        return self.rates[j]

    def __array__(self, dtype=None, copy=None):
        return self.rates if dtype is None else self.rates.astype(dtype)

    @property
    def total(self) -> float:
        return float(self.rates.sum())

    def __eq__(self, other):
        if not isinstance(other, RateVector):
            return NotImplemented
        return np.array_equal(self.rates, other.rates)

    def __hash__(self):
        return hash(self.rates.tobytes())


def validate_weights(weights: Sequence[float], n_tasks: Optional[int] = None,
                     tol: float = 1e-9) -> np.ndarray:
    """Return ``weights`` as an array after checking it lies on the simplex."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    if n_tasks is not None and w.size != n_tasks:
        raise DimensionError(f"expected {n_tasks} weights, got {w.size}")
    if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w < 0):
        raise BitAllocError("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > tol:
        raise BitAllocError(f"weights must sum to 1, got {w.sum()!r}")
    return w


@dataclass(frozen=True)
class AllocationProblem:
    surfaces: tuple
    total_rate: float
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        surfaces = tuple(self.surfaces)
        check_same_streams(surfaces)
        if not self.total_rate > 0:
            raise BitAllocError("total rate must be positive")
        object.__setattr__(self, "surfaces", surfaces)
        if self.weights is not None:
            object.__setattr__(self, "weights",
                               validate_weights(self.weights, len(surfaces)))

    @property
    def n_streams(self) -> int:
        return self.surfaces[0].n_streams

    @property
    def n_tasks(self) -> int:
        return len(self.surfaces)


@dataclass(frozen=True)
class Allocation:
    """An optimal or baseline rate split with solver diagnostics.

    ``water_level_log2`` is ``log2`` of the common marginal shared by the
    active streams; it is NaN for baselines, which have no water level.
    """

    rates: RateVector
    water_level_log2: float
    active_set: frozenset
    achieved_distortions: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "active_set", frozenset(int(j) for j in self.active_set))
        d = np.array(self.achieved_distortions, dtype=float).reshape(-1)
        d.flags.writeable = False
        object.__setattr__(self, "achieved_distortions", d)

    def scalarized(self, weights) -> float:
        return float(np.dot(np.asarray(weights, dtype=float), self.achieved_distortions))


def check_same_streams(surfaces: Sequence[DistortionSurface]) -> int:
    if len(surfaces) == 0:
        raise DimensionError("at least one surface is required")
    n = surfaces[0].n_streams
    if any(s.n_streams != n for s in surfaces):
        raise DimensionError("all surfaces must have the same number of streams")
    return n


def _rates_array(s: DistortionSurface, r) -> np.ndarray:
    rates = np.asarray(r, dtype=float)
    if rates.shape[-1:] != (s.n_streams,):
        raise DimensionError(
            f"surface has {s.n_streams} streams, rate vector has shape {rates.shape}")
    return rates


def task_distortion(pair: AccuracyPair) -> float:
    """Percentage drop of performance relative to the uncompressed baseline."""
    a_bar = pair.baseline_accuracy
    return abs(a_bar - pair.compressed_accuracy) / abs(a_bar) * 100.0


def evaluate_surface(s: DistortionSurface, r) -> float | np.ndarray:
    """Evaluate the surface at one rate vector, or at each row of a 2-D array."""
    rates = _rates_array(s, r)
    val = s.gamma + np.sum(s.alphas * np.exp2(-s.betas * rates), axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def surface_gradient(s: DistortionSurface, r) -> np.ndarray:
    rates = _rates_array(s, r)
    return -LN2 * s.alphas * s.betas * np.exp2(-s.betas * rates)


def marginals(s: DistortionSurface, r) -> np.ndarray:
    """Magnitude of the gradient: the distortion saved per extra Kbit on each stream."""
    return -surface_gradient(s, r)


def evaluate_all(surfaces: Sequence[DistortionSurface], r) -> np.ndarray:
    return np.array([evaluate_surface(s, r) for s in surfaces], dtype=float)

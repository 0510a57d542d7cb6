"""Synthetic ground-truth systems and measured samples.

Rate tuples follow the measurement protocol of sampling total rates
uniformly over ``[0.5 * Rt_min, 1.5 * Rt_max]``; each tuple is split among
streams uniformly on the simplex.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fitting import MeasuredSample
from .model import BitAllocError, DistortionSurface, RateVector

DEFAULT_RANGES = {
    "gamma": (0.0, 20.0),
    "alpha": (0.5, 50.0),
    "beta": (0.005, 0.1),
}


@dataclass(frozen=True)
class SynthSpec:
    n_streams: int = 2
    n_tasks: int = 1
    parameter_ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    rate_range: tuple = (50.0, 150.0)
    n_samples: int = 100
    noise_fraction: float = 0.0
    seed: int = 0
    # Same per-stream decay for every task, so weighted sums stay in the model family.
    shared_betas: bool = False

    def __post_init__(self):
        if self.n_streams < 1 or self.n_tasks < 1 or self.n_samples < 1:
            raise BitAllocError("n_streams, n_tasks and n_samples must be >= 1")
        if self.noise_fraction < 0:
            raise BitAllocError("noise_fraction must be >= 0")
        ranges = dict(DEFAULT_RANGES)
        ranges.update(self.parameter_ranges)
        for name, (lo, hi) in ranges.items():
            if not lo <= hi:
                raise BitAllocError(f"empty range for {name}: ({lo}, {hi})")
        if ranges["alpha"][0] <= 0 or ranges["beta"][0] <= 0:
            raise BitAllocError("alpha and beta ranges must be strictly positive")
        lo, hi = self.rate_range
        if not 0 < lo <= hi:
            raise BitAllocError(f"invalid rate range ({lo}, {hi})")
        object.__setattr__(self, "parameter_ranges", ranges)


def draw_surfaces(spec: SynthSpec, rng: np.random.Generator) -> list[DistortionSurface]:
    pr = spec.parameter_ranges
    n, k = spec.n_streams, spec.n_tasks
    gammas = rng.uniform(*pr["gamma"], size=k)
    alphas = rng.uniform(*pr["alpha"], size=(k, n))
    if spec.shared_betas:
        betas = np.tile(rng.uniform(*pr["beta"], size=n), (k, 1))
    else:
        betas = rng.uniform(*pr["beta"], size=(k, n))
    return [DistortionSurface(gammas[i], alphas[i], betas[i]) for i in range(k)]


def draw_rates(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.rate_range
    totals = rng.uniform(0.5 * lo, 1.5 * hi, size=spec.n_samples)
    splits = rng.dirichlet(np.ones(spec.n_streams), size=spec.n_samples)
    return splits * totals[:, None]


def sample_system(surfaces, rates: np.ndarray, noise_fraction: float,
                  rng: np.random.Generator) -> list[MeasuredSample]:
    """Evaluate ``surfaces`` at each rate row and add bounded uniform noise."""
    clean = np.column_stack([s.gamma + (s.alphas * np.exp2(-s.betas * rates)).sum(axis=1)
                             for s in surfaces])
    if noise_fraction > 0:
        spread = clean.max(axis=0) - clean.min(axis=0)
        noise = rng.uniform(-1.0, 1.0, size=clean.shape) * noise_fraction * spread
        noisy = np.maximum(clean + noise, 0.0)
    else:
        noisy = clean
    return [MeasuredSample(RateVector(r), d) for r, d in zip(rates, noisy)]


def generate_system(spec: SynthSpec) -> tuple[list[DistortionSurface], list[MeasuredSample]]:
    """Draw ground-truth surfaces and measured samples; deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    surfaces = draw_surfaces(spec, rng)
    rates = draw_rates(spec, rng)
    return surfaces, sample_system(surfaces, rates, spec.noise_fraction, rng)

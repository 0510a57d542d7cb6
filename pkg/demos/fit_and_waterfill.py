"""Fit a distortion surface to noisy samples and allocate a rate budget.

Run with ``python3 demos/fit_and_waterfill.py``.
"""
# %% Draw a three-stream, one-task system with 1% measurement noise.
import numpy as np

from bitalloc import (
    SynthSpec,
    baseline_equal,
    evaluate_surface,
    fit_surface,
    generate_system,
    waterfill_closed_form,
)

truth, samples = generate_system(SynthSpec(n_streams=3, n_tasks=1, noise_fraction=0.01, seed=4))
print("true alphas", truth[0].alphas, "betas", truth[0].betas)

# %% Fit the exponential model. R^2 near 1 means the model explains the data.
report = fit_surface(samples)
fitted = report.surface
print("fit alphas ", fitted.alphas, "betas", fitted.betas)
print(f"R^2 = {report.r_squared:.5f} after {report.iterations} iterations")

# %% Water-fill a 100 Kbit budget and compare against an even split.
total = 100.0
alloc = waterfill_closed_form(fitted, total)
even = baseline_equal(3, total)
print("optimal rates", np.round(alloc.rates.rates, 3), "active", sorted(alloc.active_set))
print(f"distortion: optimal {evaluate_surface(truth[0], alloc.rates.rates):.4f}, "
      f"equal split {evaluate_surface(truth[0], even.rates):.4f}")

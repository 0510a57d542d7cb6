"""Pareto-optimal allocations for two streams serving several tasks.

Run with ``python3 demos/pareto_two_streams.py``.
"""
# %% Three tasks share two streams. Each task alone would pick its own split.
import numpy as np

from bitalloc import SynthSpec, fit_first_batch, generate_system, pareto_segment_2xk
from bitalloc.pareto import draw_weights

surfaces, _ = generate_system(SynthSpec(n_streams=2, n_tasks=3, seed=5))
total = 120.0
segment = pareto_segment_2xk(surfaces, total)
for i, r in enumerate(segment.per_task_minimizers):
    print(f"task {i + 1} alone prefers R1 = {float(r[0]):.3f}")

# %% Every Pareto-optimal split lies between the extreme per-task choices.
print(f"Pareto segment: R1 in [{segment.r1_min:.3f}, {segment.r1_max:.3f}]")

# %% Random task weights confirm it: all weighted optima land on the segment.
rates, _ = fit_first_batch(surfaces, draw_weights(3, 2000, seed=0), total)
print("weighted optima R1 range", np.round([rates[:, 0].min(), rates[:, 0].max()], 3))
print("all inside:", bool(np.all(segment.contains(rates[:, 0], tol=1e-9 * total))))

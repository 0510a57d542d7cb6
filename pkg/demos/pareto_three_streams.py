"""A bounding polygon for Pareto-optimal allocations of three streams, two tasks.

Run with ``python3 demos/pareto_three_streams.py``.
"""
# %% Build the rate box from the closed-form extrema and cut it with the budget plane.
import numpy as np

from bitalloc import SynthSpec, generate_system, pareto_bound_3x2, sample_pareto_by_weights

surfaces, _ = generate_system(SynthSpec(n_streams=3, n_tasks=2, seed=2))
total = 100.0
bound = pareto_bound_3x2(surfaces, total)
print("box mins", np.round(bound.box.mins, 3))
print("box maxs", np.round(bound.box.maxs, 3))
print("polygon vertices on R1 + R2 + R3 = Rt:")
print(np.round(bound.vertex_array, 3))

# %% Weighted optima sit inside the polygon whenever every stream stays active.
points = sample_pareto_by_weights(surfaces, total, 1000, seed=1)
rates = np.array([p.rates.rates for p in points])
interior = np.all(rates > 0, axis=1)
inside = bound.contains(rates, tol=1e-6 * total)
print(f"{interior.sum()} of {len(points)} optima keep all streams active; "
      f"{inside[interior].sum()} of those fall inside the bound")

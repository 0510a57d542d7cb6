"""Distortion-rate surface fitting and multi-stream bit allocation."""
from .allocation import (
    PipelineResult,
    StreamMeta,
    TaskWeights,
    active_set_waterfill,
    baseline_equal,
    baseline_proportional,
    evaluate_rates,
    fit_first,
    fit_first_batch,
    fit_first_from_samples,
    scalarize_first,
    scalarize_first_report,
    scalarized_distortion,
    waterfill_closed_form,
    weighted_marginals,
)
from .fitting import (
    DegenerateDataError,
    FitConfig,
    FitReport,
    InsufficientSamplesError,
    MeasuredSample,
    NonConvergenceError,
    fit_all_tasks,
    fit_surface,
    inverse_mean_weights,
    r_squared,
    window_samples,
)
from .model import (
    AccuracyPair,
    Allocation,
    AllocationProblem,
    BitAllocError,
    DimensionError,
    DistortionSurface,
    RateVector,
    evaluate_all,
    evaluate_surface,
    marginals,
    surface_gradient,
    task_distortion,
)
from .pareto import (
    EmptyIntersectionError,
    ParetoBound,
    ParetoSample,
    ParetoSegment,
    RateBox,
    bound_polygon_3x2,
    dominance_check,
    pareto_bound_3x2,
    pareto_segment_2xk,
    per_task_line_minimizer_2stream,
    rate_extrema_3x2,
    sample_pareto_by_weights,
    weight_ratio_3x2,
)
from .synth import SynthSpec, generate_system

__version__ = "0.1.0"

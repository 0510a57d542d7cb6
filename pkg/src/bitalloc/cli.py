"""Command-line front end.

Subcommands: ``fit``, ``allocate``, ``pareto``, ``weights-inverse``, ``synth``.
Exit codes: 0 success, 2 invalid input, 3 empty or degenerate data,
4 solver non-convergence.  Errors are reported on stderr as one line,
``error: <category>: <message>``.

Any ``--seed`` left unset falls back to the ``BITALLOC_SEED`` environment
variable, then to 0.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .allocation import (
    StreamMeta,
    baseline_equal,
    baseline_proportional,
    evaluate_rates,
    fit_first,
    waterfill_closed_form,
)
from .fitting import (
    DegenerateDataError,
    FitConfig,
    InsufficientSamplesError,
    NonConvergenceError,
    fit_all_tasks,
    inverse_mean_weights,
    window_samples,
)
from .model import BitAllocError, validate_weights
from .pareto import (
    EmptyIntersectionError,
    pareto_bound_3x2,
    pareto_segment_2xk,
    sample_pareto_by_weights,
)
from .synth import DEFAULT_RANGES, SynthSpec, generate_system

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE, EXIT_NONCONVERGENCE = 0, 2, 3, 4
SEED_ENV = "BITALLOC_SEED"


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise BitAllocError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise BitAllocError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2:
        raise BitAllocError(f"expected 'low,high', got {text!r}")
    return v[0], v[1]


def _emit(record: dict, out) -> None:
    text = io.dump_json(record)
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _nan_to_none(x: float):
    return None if np.isnan(x) else float(x)


# -- fit -----------------------------------------------------------------------

def cmd_fit(args) -> int:
    samples = io.read_samples(args.samples)
    config = FitConfig(max_iterations=args.max_iterations,
                       multistart_count=args.multistart, seed=_seed(args))
    if args.window:
        if args.total_rate is None:
            raise BitAllocError("--window needs --total-rate")
        samples = window_samples(samples, args.total_rate, config.window_low,
                                 config.window_high)
        if not samples:
            raise InsufficientSamplesError("no samples in window")
    if not samples:
        raise InsufficientSamplesError("samples file has no data rows")
    reports = fit_all_tasks(samples, config)
    io.write_surfaces(args.out, [r.surface for r in reports], reports)
    for i, r in enumerate(reports, start=1):
        print(f"task {i}: r_squared={r.r_squared!r} mean_residual={r.mean_residual!r} "
              f"iterations={r.iterations} samples={r.n_samples_used} converged={r.converged}")
    failed = [i for i, r in enumerate(reports, start=1) if not r.converged]
    if failed:
        raise NonConvergenceError(f"fit did not converge for task(s) {failed}")
    return EXIT_OK


# -- allocate ------------------------------------------------------------------

def _task_weights(text, n_tasks: int) -> np.ndarray:
    if text is None:
        return np.full(n_tasks, 1.0 / n_tasks)
    return validate_weights(_floats(text), n_tasks)


def allocation_record(surfaces, weights, total_rate, method, alloc) -> dict:
    return {
        "kind": "allocation",
        "method": method,
        "total_rate": float(total_rate),
        "weights": weights.tolist(),
        "rates": alloc.rates.rates.tolist(),
        "water_level_log2": _nan_to_none(alloc.water_level_log2),
        "active_set": sorted(alloc.active_set),
        "achieved_distortions": alloc.achieved_distortions.tolist(),
        "scalarized_distortion": float(weights @ alloc.achieved_distortions),
    }


def allocate(surfaces, weights, total_rate, method, meta=None):
    n = surfaces[0].n_streams
    if method == "optimal":
        if len(surfaces) == 1:
            return waterfill_closed_form(surfaces[0], total_rate)
        return fit_first(surfaces, weights, total_rate)
    if method == "equal":
        rates = baseline_equal(n, total_rate)
    elif method in ("elements", "variance"):
        if meta is None:
            raise BitAllocError(f"method {method!r} needs stream metadata")
        q = meta.element_counts if method == "elements" else meta.element_variances
        if q is None:
            raise BitAllocError("method 'variance' needs --element-variances")
        if len(q) != n:
            raise BitAllocError(f"metadata lists {len(q)} streams, surfaces have {n}")
        rates = baseline_proportional(q, total_rate)
    else:
        raise BitAllocError(f"unknown method {method!r}")
    return evaluate_rates(surfaces, rates)


def cmd_allocate(args) -> int:
    surfaces = io.read_surfaces(args.surfaces)
    weights = _task_weights(args.weights, len(surfaces))
    meta = None
    if args.element_counts is not None:
        counts = _floats(args.element_counts)
        if any(c != int(c) for c in counts):
            raise BitAllocError("element counts must be integers")
        variances = None if args.element_variances is None else _floats(args.element_variances)
        meta = StreamMeta(tuple(int(c) for c in counts), variances)
    elif args.element_variances is not None:
        variances = _floats(args.element_variances)
        meta = StreamMeta(tuple(1 for _ in variances), variances)
    alloc = allocate(surfaces, weights, args.total_rate, args.method, meta)
    _emit(allocation_record(surfaces, weights, args.total_rate, args.method, alloc), args.out)
    return EXIT_OK


# -- pareto --------------------------------------------------------------------

def cmd_pareto(args) -> int:
    surfaces = io.read_surfaces(args.surfaces)
    n, k, rt = surfaces[0].n_streams, len(surfaces), args.total_rate
    samples = sample_pareto_by_weights(surfaces, rt, args.n_samples, _seed(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rate_rows, dist_rows = [], []
    report = {"kind": "pareto", "n_streams": n, "n_tasks": k, "total_rate": float(rt),
              "n_samples": len(samples)}
    if n == 2:
        seg = pareto_segment_2xk(surfaces, rt)
        ends = [seg.endpoint_low, seg.endpoint_high]
        report["characterization"] = "segment"
        report["segment"] = [e.rates.tolist() for e in ends]
        report["per_task_minimizers"] = [m.rates.tolist() for m in seg.per_task_minimizers]
        report["degenerate"] = seg.is_degenerate
        if seg.is_degenerate:
            report["note"] = "all tasks share one minimiser; the segment is a single point"
        for label, e in zip(("endpoint_low", "endpoint_high"), ends):
            rate_rows.append([label, *e.rates])
            dist_rows.append([label, *[s(e.rates) for s in surfaces]])
        for i, m in enumerate(seg.per_task_minimizers, start=1):
            rate_rows.append([f"minimizer_{i}", *m.rates])
            dist_rows.append([f"minimizer_{i}", *[s(m.rates) for s in surfaces]])
    elif n == 3 and k == 2:
        report["characterization"] = "bound"
        try:
            bound = pareto_bound_3x2(surfaces, rt)
        except EmptyIntersectionError:
            report["box"] = None
            report["polygon"] = []
            report["note"] = "the rate box misses the budget plane; no bound polygon"
        else:
            report["box"] = {"mins": bound.box.mins.tolist(), "maxs": bound.box.maxs.tolist()}
            report["polygon"] = [v.rates.tolist() for v in bound.polygon_vertices]
            for v in bound.polygon_vertices:
                rate_rows.append(["vertex", *v.rates])
                dist_rows.append(["vertex", *[s(v.rates) for s in surfaces]])
    else:
        report["characterization"] = "none"
        report["note"] = (f"no analytic Pareto characterization for {n} streams and "
                          f"{k} tasks; samples only")
    for p in samples:
        rate_rows.append(["sample", *p.rates.rates])
        dist_rows.append(["sample", *p.distortions])
    io.write_table(out / "rate_plane.csv", ["kind"] + [f"R_{j + 1}" for j in range(n)], rate_rows)
    io.write_table(out / "distortion_plane.csv", ["kind"] + [f"D_{i + 1}" for i in range(k)],
                   dist_rows)
    report["samples"] = [{"weights": p.weights.weights.tolist(), "rates": p.rates.rates.tolist(),
                          "distortions": p.distortions.tolist()} for p in samples]
    io.dump_json(report, out / "report.json")
    print(f"characterization: {report['characterization']}")
    if "note" in report:
        print(f"note: {report['note']}")
    if n == 2:
        print(f"segment: {report['segment'][0]} -> {report['segment'][1]}")
    elif report.get("polygon"):
        print(f"polygon vertices: {len(report['polygon'])}")
    print(f"wrote {out / 'report.json'}, {out / 'rate_plane.csv'}, {out / 'distortion_plane.csv'}")
    return EXIT_OK


# -- weights-inverse -----------------------------------------------------------

def cmd_weights_inverse(args) -> int:
    samples = io.read_samples(args.samples)
    if not samples:
        raise InsufficientSamplesError("samples file has no data rows")
    w = inverse_mean_weights(samples)
    _emit({"kind": "weights", "weights": w.tolist()}, args.out)
    return EXIT_OK


# -- synth ---------------------------------------------------------------------

def cmd_synth(args) -> int:
    ranges = {"gamma": _pair(args.gamma_range), "alpha": _pair(args.alpha_range),
              "beta": _pair(args.beta_range)}
    spec = SynthSpec(n_streams=args.n_streams, n_tasks=args.n_tasks, parameter_ranges=ranges,
                     rate_range=_pair(args.rate_range), n_samples=args.n_samples,
                     noise_fraction=args.noise, seed=_seed(args),
                     shared_betas=args.shared_betas)
    surfaces, samples = generate_system(spec)
    io.write_samples(args.out, samples)
    if args.truth is not None:
        io.write_surfaces(args.truth, surfaces)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _range_text(name):
    lo, hi = DEFAULT_RANGES[name]
    return f"{lo!r},{hi!r}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bitalloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one surface per task to a samples CSV")
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True, help="surface JSON to write")
    p.add_argument("--total-rate", type=float)
    p.add_argument("--window", action="store_true",
                   help="keep samples with rate sum in [0.75, 1.25] x total rate")
    p.add_argument("--multistart", type=int, default=FitConfig.multistart_count)
    p.add_argument("--max-iterations", type=int, default=FitConfig.max_iterations)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("allocate", help="allocate a rate budget across streams")
    p.add_argument("--surfaces", required=True)
    p.add_argument("--total-rate", type=float, required=True)
    p.add_argument("--weights", help="comma-separated task weights (default: equal)")
    p.add_argument("--method", default="optimal",
                   help="optimal, equal, elements or variance")
    p.add_argument("--element-counts", help="comma-separated tensor element counts")
    p.add_argument("--element-variances", help="comma-separated tensor element variances")
    p.add_argument("--out", help="allocation JSON to write (default: stdout)")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("pareto", help="Pareto characterization and plot data")
    p.add_argument("--surfaces", required=True)
    p.add_argument("--total-rate", type=float, required=True)
    p.add_argument("--n-samples", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("weights-inverse", help="weights inverse to mean task distortion")
    p.add_argument("--samples", required=True)
    p.add_argument("--out", help="weights JSON to write (default: stdout)")
    p.set_defaults(func=cmd_weights_inverse)

    p = sub.add_parser("synth", help="generate a synthetic samples CSV")
    p.add_argument("--out", required=True, help="samples CSV to write")
    p.add_argument("--truth", help="ground-truth surface JSON to write")
    p.add_argument("--n-streams", type=int, default=2)
    p.add_argument("--n-tasks", type=int, default=1)
    p.add_argument("--n-samples", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.0,
                   help="uniform noise half-width as a fraction of each task's range")
    p.add_argument("--rate-range", default="50.0,150.0",
                   help="total rates Rt_min,Rt_max; sums are drawn in [0.5 Rt_min, 1.5 Rt_max]")
    p.add_argument("--gamma-range", default=_range_text("gamma"))
    p.add_argument("--alpha-range", default=_range_text("alpha"))
    p.add_argument("--beta-range", default=_range_text("beta"))
    p.add_argument("--shared-betas", action="store_true")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def _category(exc: Exception) -> tuple[int, str]:
    if isinstance(exc, NonConvergenceError):
        return EXIT_NONCONVERGENCE, "nonconvergence"
    if isinstance(exc, (InsufficientSamplesError, DegenerateDataError,
                        EmptyIntersectionError)):
        return EXIT_DEGENERATE, "degenerate"
    return EXIT_INVALID, "invalid"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BitAllocError, OSError) as exc:
        code, category = _category(exc)
        message = " ".join(str(exc).split())
        print(f"error: {category}: {message}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bitalloc import (
    BitAllocError,
    DistortionSurface,
    FitConfig,
    MeasuredSample,
    RateVector,
    StreamMeta,
    SynthSpec,
    TaskWeights,
    active_set_waterfill,
    baseline_equal,
    baseline_proportional,
    evaluate_rates,
    evaluate_surface,
    fit_first,
    fit_first_batch,
    fit_first_from_samples,
    generate_system,
    marginals,
    scalarize_first,
    scalarize_first_report,
    scalarized_distortion,
    waterfill_closed_form,
    weighted_marginals,
)
from conftest import kkt_violation, random_surface, random_system, simplex_grid

LN2 = math.log(2.0)


def grid_best(objective_rows, grid):
    values = objective_rows(grid)
    i = int(np.argmin(values))
    return grid[i], values[i]


# -- water-filling -------------------------------------------------------------

def test_single_stream_takes_budget():
    a = waterfill_closed_form(DistortionSurface(1.0, [3.0], [0.2]), 17.0)
    assert a.rates.rates.tolist() == [17.0]
    assert a.active_set == {0}


def test_symmetric_streams_split_evenly():
    a = waterfill_closed_form(DistortionSurface(0.0, [5.0, 5.0], [0.03, 0.03]), 60.0)
    np.testing.assert_allclose(a.rates.rates, [30.0, 30.0], rtol=1e-14)


def test_clipping_boundary_example():
    s = DistortionSurface(0.0, [4.0, 1.0], [1.0, 1.0])
    for alloc in (waterfill_closed_form(s, 2.0), active_set_waterfill(s, 2.0)):
        np.testing.assert_allclose(alloc.rates.rates, [2.0, 0.0], atol=1e-14)
        assert alloc.water_level_log2 == pytest.approx(math.log2(LN2), abs=1e-14)
    # 1-D grid oracle at step 1e-4 along the budget line.
    r1 = np.linspace(0.0, 2.0, 20001)
    grid = np.column_stack([r1, 2.0 - r1])
    best, _ = grid_best(lambda g: evaluate_surface(s, g), grid)
    assert abs(best[0] - 2.0) <= 1e-4


def test_third_stream_deactivated_example():
    s = DistortionSurface(0.0, [4.0, 1.0, 0.01], [1.0, 1.0, 1.0])
    a = active_set_waterfill(s, 2.0)
    np.testing.assert_allclose(a.rates.rates, [2.0, 0.0, 0.0], atol=1e-12)
    assert 2 not in a.active_set
    grid = simplex_grid(3, 2.0, steps=2000)
    best, _ = grid_best(lambda g: evaluate_surface(s, g), grid)
    np.testing.assert_allclose(best, [2.0, 0.0, 0.0], atol=1e-3)


def test_all_active_when_budget_large():
    s = DistortionSurface(0.0, [4.0, 1.0, 0.5], [0.1, 0.2, 0.05])
    a = active_set_waterfill(s, 500.0)
    assert a.active_set == {0, 1, 2}
    assert np.all(a.rates.rates > 0)


def test_nonpositive_budget_rejected():
    s = DistortionSurface(0.0, [1.0], [1.0])
    for rt in (0.0, -1.0):
        with pytest.raises(BitAllocError):
            waterfill_closed_form(s, rt)
        with pytest.raises(BitAllocError):
            active_set_waterfill(s, rt)


def test_closed_form_equals_active_set(rng):
    for _ in range(300):
        n = int(rng.integers(1, 6))
        s = random_surface(rng, n)
        rt = float(rng.uniform(1, 300))
        a, b = waterfill_closed_form(s, rt), active_set_waterfill(s, rt)
        assert a.rates == b.rates
        assert a.active_set == b.active_set


def test_waterfill_matches_grid(rng):
    for _ in range(30):
        n = int(rng.integers(2, 4))
        s = random_surface(rng, n)
        rt = float(rng.uniform(10, 200))
        a = waterfill_closed_form(s, rt)
        grid = simplex_grid(n, rt)
        _, best = grid_best(lambda g: evaluate_surface(s, g), grid)
        slack = (rt / 1000) * np.max(marginals(s, np.zeros(n)))
        assert evaluate_surface(s, a.rates.rates) <= best + slack
        assert kkt_violation(marginals(s, a.rates.rates), a.rates.rates) <= 1e-7


def test_stable_for_tiny_decay():
    # Streams whose decays differ by orders of magnitude used to overflow the
    # naive water-level form.
    s = DistortionSurface(0.0, [30.0, 20.0], [1e-9, 0.08])
    a = waterfill_closed_form(s, 100.0)
    assert a.rates.total == pytest.approx(100.0, rel=1e-12)
    assert np.all(a.rates.rates <= 100.0)


surfaces3 = st.builds(
    lambda n, a, b: DistortionSurface(0.0, a[:n], b[:n]),
    st.integers(1, 4),
    st.lists(st.floats(0.01, 100), min_size=4, max_size=4),
    st.lists(st.floats(1e-3, 1.0), min_size=4, max_size=4),
)


@settings(max_examples=300, deadline=None)
@given(surfaces3, st.floats(0.1, 1000))
def test_waterfill_budget_and_kkt(s, rt):
    a = waterfill_closed_form(s, rt)
    r = a.rates.rates
    assert abs(r.sum() - rt) <= 1e-9 * rt
    assert np.all(r[[j for j in range(s.n_streams) if j not in a.active_set]] == 0)
    assert kkt_violation(marginals(s, r), r) <= 1e-7


# -- fit-first -----------------------------------------------------------------

def test_fit_first_single_task_is_waterfill(rng):
    for _ in range(50):
        n = int(rng.integers(1, 4))
        s = random_surface(rng, n)
        rt = float(rng.uniform(5, 300))
        np.testing.assert_allclose(fit_first([s], [1.0], rt).rates.rates,
                                   waterfill_closed_form(s, rt).rates.rates,
                                   atol=1e-8 * rt)


def test_fit_first_one_hot_is_waterfill(rng):
    for _ in range(30):
        n, k = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        surfaces = random_system(rng, n, k)
        rt = float(rng.uniform(5, 300))
        for i in range(k):
            w = np.eye(k)[i]
            np.testing.assert_allclose(fit_first(surfaces, w, rt).rates.rates,
                                       waterfill_closed_form(surfaces[i], rt).rates.rates,
                                       atol=1e-8 * rt)


def test_fit_first_matches_grid_and_kkt(rng):
    for _ in range(30):
        n, k = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        surfaces = random_system(rng, n, k)
        w = rng.dirichlet(np.ones(k))
        rt = float(rng.uniform(10, 200))
        a = fit_first(surfaces, w, rt)
        r = a.rates.rates
        assert abs(r.sum() - rt) <= 1e-9 * rt
        grid = simplex_grid(n, rt)
        _, best = grid_best(lambda g: sum(wi * evaluate_surface(s, g)
                                          for wi, s in zip(w, surfaces)), grid)
        slack = (rt / 1000) * np.max(weighted_marginals(surfaces, w, np.zeros(n)))
        assert scalarized_distortion(surfaces, w, r) <= best + slack
        assert kkt_violation(weighted_marginals(surfaces, w, r), r) <= 1e-7
        assert a.achieved_distortions.shape == (k,)


def test_fit_first_level_is_log_marginal(rng):
    surfaces = random_system(rng, 3, 2)
    w = [0.3, 0.7]
    a = fit_first(surfaces, w, 120.0)
    m = weighted_marginals(surfaces, w, a.rates.rates)
    for j in a.active_set:
        assert math.log2(m[j]) == pytest.approx(a.water_level_log2, abs=1e-9)


def test_fit_first_batch_rows_match_single(rng):
    surfaces = random_system(rng, 3, 3)
    weights = rng.dirichlet(np.ones(3), size=20)
    rates, _ = fit_first_batch(surfaces, weights, 90.0)
    for w, r in zip(weights, rates):
        np.testing.assert_allclose(r, fit_first(surfaces, w, 90.0).rates.rates, atol=1e-9)


def test_fit_first_rejects_bad_weights(rng):
    surfaces = random_system(rng, 2, 2)
    with pytest.raises(BitAllocError):
        fit_first(surfaces, [0.7, 0.7], 10.0)
    with pytest.raises(BitAllocError):
        fit_first(surfaces, [1.0], 10.0)


def test_task_weights_type():
    w = TaskWeights([0.25, 0.75])
    assert len(w) == 2
    with pytest.raises(BitAllocError):
        TaskWeights([0.25, 0.25])


# -- pipelines -----------------------------------------------------------------

def test_scalarize_first_identical_tasks():
    truth, samples = generate_system(SynthSpec(n_streams=2, n_tasks=1, seed=11))
    doubled = [MeasuredSample(s.rates, [s.distortions[0]] * 2) for s in samples]
    single = scalarize_first(samples, [1.0], 100.0)
    both = scalarize_first(doubled, [0.3, 0.7], 100.0)
    np.testing.assert_allclose(both.rates.rates, single.rates.rates, atol=1e-9)


def test_scalarize_first_shared_decay_matches_fit_first():
    config = FitConfig(multistart_count=32)
    _, samples = generate_system(SynthSpec(n_streams=2, n_tasks=3, seed=3, shared_betas=True))
    w = [0.2, 0.5, 0.3]
    a = scalarize_first(samples, w, 100.0, config)
    b = fit_first_from_samples(samples, w, 100.0, config).allocation
    assert np.max(np.abs(a.rates.rates - b.rates.rates)) <= 1e-3 * 100.0


def test_pipelines_can_disagree_when_decays_differ():
    # With unrelated per-task decays the weighted sum leaves the model family,
    # so the single scalarized fit is only approximate and the rates drift.
    rng = np.random.default_rng(1006)
    n, k = int(rng.integers(2, 4)), int(rng.integers(2, 4))
    _, samples = generate_system(SynthSpec(n_streams=n, n_tasks=k, seed=6))
    rt = float(rng.uniform(50, 150))
    w = rng.dirichlet(np.ones(k))
    config = FitConfig(multistart_count=32)
    a = scalarize_first_report(samples, w, rt, config)
    b = fit_first_from_samples(samples, w, rt, config).allocation
    assert a.fits[0].r_squared < 0.999
    assert np.max(np.abs(a.allocation.rates.rates - b.rates.rates)) > 0.02 * rt


def test_scalarize_first_reports_one_fit():
    _, samples = generate_system(SynthSpec(n_streams=2, n_tasks=2, seed=1))
    res = scalarize_first_report(samples, [0.5, 0.5], 100.0)
    assert len(res.fits) == 1
    assert res.allocation.achieved_distortions.shape == (1,)


def test_empty_window_rejected():
    _, samples = generate_system(SynthSpec(n_streams=2, n_tasks=2, seed=1))
    with pytest.raises(BitAllocError, match="no samples in window"):
        scalarize_first(samples, [0.5, 0.5], 10_000.0)
    with pytest.raises(BitAllocError, match="no samples in window"):
        fit_first_from_samples(samples, [0.5, 0.5], 10_000.0)


# -- baselines -----------------------------------------------------------------

@pytest.mark.parametrize("n, rt, expected", [
    (2, 50.0, [25.0, 25.0]),
    (2, 1000.0, [500.0, 500.0]),
    (3, 3.0, [1.0, 1.0, 1.0]),
])
def test_equal_split(n, rt, expected):
    assert baseline_equal(n, rt).rates.tolist() == expected


@pytest.mark.parametrize("q, rt, expected", [
    ((28 * 28 * 128, 28 * 28 * 32), 50.0, [40.0, 10.0]),
    ((28 * 28 * 128, 28 * 28 * 32), 100.0, [80.0, 20.0]),
    ((3.0, 1.0), 4.0, [3.0, 1.0]),
])
def test_proportional_split(q, rt, expected):
    assert baseline_proportional(q, rt).rates.tolist() == expected


def test_proportional_rejects_nonpositive():
    with pytest.raises(BitAllocError):
        baseline_proportional([1.0, 0.0], 10.0)
    with pytest.raises(BitAllocError):
        baseline_proportional([1.0, -2.0], 10.0)


def test_stream_meta_validation():
    assert StreamMeta((4, 1)).element_counts == (4, 1)
    with pytest.raises(BitAllocError):
        StreamMeta((4, 0))
    with pytest.raises(BitAllocError):
        StreamMeta((4, 1), (1.0,))


def test_evaluate_rates_has_no_water_level(rng):
    surfaces = random_system(rng, 2, 2)
    a = evaluate_rates(surfaces, [10.0, 0.0])
    assert math.isnan(a.water_level_log2)
    assert a.active_set == {0}
    np.testing.assert_allclose(a.achieved_distortions,
                               [evaluate_surface(s, [10.0, 0.0]) for s in surfaces])

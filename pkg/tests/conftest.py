import numpy as np
import pytest

from bitalloc import DistortionSurface


def random_surface(rng, n_streams, alpha=(0.5, 50.0), beta=(0.005, 0.1), gamma=(0.0, 20.0)):
    return DistortionSurface(rng.uniform(*gamma), rng.uniform(*alpha, n_streams),
                             rng.uniform(*beta, n_streams))


def random_system(rng, n_streams, n_tasks, **ranges):
    return [random_surface(rng, n_streams, **ranges) for _ in range(n_tasks)]


def simplex_grid(n_streams, total_rate, steps=1000):
    """Every point of the budget simplex on a lattice of spacing ``total_rate / steps``."""
    h = total_rate / steps
    if n_streams == 1:
        return np.array([[total_rate]])
    if n_streams == 2:
        i = np.arange(steps + 1)
        return np.column_stack([i * h, (steps - i) * h])
    if n_streams == 3:
        i, j = np.triu_indices(steps + 1)
        # i <= j gives each (a, b, c) = (i, j - i, steps - j) exactly once
        return np.column_stack([i, j - i, steps - j]) * h
    raise ValueError("grid oracle covers N <= 3")


def kkt_violation(marginals, rates, rel=1e-7):
    """Largest relative breach of the equal-marginal conditions (0 if certified).

    Active streams share one marginal; inactive streams may not exceed it.
    """
    active = rates > 0
    level = marginals[active]
    top = level.max()
    spread = (top - level.min()) / top
    excess = 0.0
    if np.any(~active):
        excess = max(0.0, (marginals[~active].max() - level.min()) / top)
    return max(spread, excess)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

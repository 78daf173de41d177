import numpy as np
import pytest

from rsdmc import _kernels
from rsdmc.target import GaussianMixture, benchmark_mixture

# criterion lines collected by test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def bench():
    return benchmark_mixture()


@pytest.fixture
def three_mode():
    return GaussianMixture(
        [0.2, 0.5, 0.3],
        [[0.0, 1.0], [1.5, -0.5], [-1.0, -1.0]],
        [0.3, 0.8, 0.5],
    )


@pytest.fixture(params=_kernels.available())
def backend(request):
    return request.param


def fd_grad(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.fixture(scope="session")
def ground_truth_mmd(bench):
    """MMD of a 1000-particle run (seed 0) against seed-0 ground truth, cached."""
    from rsdmc.metrics import median_heuristic, mmd_rbf
    from rsdmc.rng import GROUND_TRUTH, stream
    from rsdmc.samplers import run_sampler
    from rsdmc.schedule import practical_schedule
    from rsdmc.target import sample_ground_truth

    gt = sample_ground_truth(bench, 1000, stream(0, GROUND_TRUTH))
    bw = median_heuristic(gt, sample_ground_truth(bench, 1000, stream(1, GROUND_TRUTH)))
    cache = {}

    def get(sampler, budget=200):
        key = (sampler, budget)
        if key not in cache:
            ps = run_sampler(bench, practical_schedule({"sampler": sampler, "budget": budget}), 1000, 0)
            cache[key] = mmd_rbf(ps, gt, bw).mmd
        return cache[key]

    return get


@pytest.fixture(scope="session")
def default_experiment():
    """The shipped default sweep, run once per session, with its wall time."""
    import time

    from rsdmc.harness import default_config_path, run_experiment

    t0 = time.perf_counter()
    rep = run_experiment(default_config_path())
    return rep, time.perf_counter() - t0

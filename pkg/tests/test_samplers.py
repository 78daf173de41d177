import math
import os

import numpy as np
import pytest

from rsdmc.counter import GradientCounter
from rsdmc.errors import NumericalDivergence
from rsdmc.metrics import mode_stats
from rsdmc.samplers import ParticleSet, init_particles, run_dmc, run_rsdmc, run_sampler, run_ula
from rsdmc.schedule import ScheduleParams, TauRule, practical_schedule
from rsdmc.target import standard_gaussian

MAX_WORKERS = max(4, os.cpu_count() or 1)


def test_init_particles():
    ps = init_particles(10**4, 2, 0)
    assert np.all(np.abs(ps.points.mean(0)) < 0.05) and np.all(np.abs(ps.points.var(0) - 1) < 0.05)
    assert init_particles(0, 2, 0).n == 0
    assert np.array_equal(init_particles(50, 3, 9).points, init_particles(50, 3, 9).points)
    # a particle's start depends on its index only
    assert np.array_equal(init_particles(50, 3, 9).points[:10], init_particles(10, 3, 9).points)


def test_particle_set_rejects_non_finite():
    with pytest.raises(ValueError):
        ParticleSet(np.array([[np.nan, 0.0]]), "x")


def test_ula_zero_steps_returns_init(bench):
    ps = run_ula(bench, 30, 0, 0.01, 4)
    assert np.array_equal(ps.points, init_particles(30, 2, 4).points)
    assert ps.grad_per_particle == 0


def test_ula_step_rule_single_step():
    g = standard_gaussian(2)
    h = 0.1
    ps = run_ula(g, 5, 1, h, 3)
    x0 = init_particles(5, 2, 3).points
    from rsdmc.rng import particle_generator

    xi = np.stack([particle_generator(3, i).standard_normal(4)[2:] for i in range(5)])
    np.testing.assert_allclose(ps.points, x0 - h * x0 + math.sqrt(2 * h) * xi, rtol=1e-14)


def test_ula_budget_honesty(bench):
    c = GradientCounter()
    ps = run_ula(bench, 40, 37, 2e-4, 0, c)
    assert c.total == 40 * 37 and ps.grad_per_particle == c.total / 40


def test_ula_fails_to_cover_modes(bench, ground_truth_mmd):
    assert ground_truth_mmd("ula") > 0.3


@pytest.mark.parametrize("sampler", ["rsdmc-v1", "rsdmc-v2", "dmc"])
def test_budget_honesty(bench, sampler):
    for budget in (None, 400):
        cfg = {"sampler": sampler} if budget is None else {"sampler": sampler, "budget": budget}
        c = GradientCounter()
        ps = run_sampler(bench, practical_schedule(cfg), 50, 0, c)
        assert ps.grad_per_particle == c.total / 50
    c = GradientCounter()
    ps = run_rsdmc(bench, practical_schedule({"sampler": "rsdmc-v1"}), 1000, 0, c)
    assert c.total == 1000 * 200 and ps.grad_per_particle == 200


def test_non_unit_inner_counts(bench):
    p = practical_schedule({"sampler": "rsdmc-v1", "n": 2, "m": 1, "R": 5, "eta": 0.05})
    c = GradientCounter()
    run_rsdmc(bench, p, 7, 0, c)
    assert c.total == 7 * 5 * (2 + 4)


def test_exact_score_override_matches_variance_recursion():
    # with v = -x the step is x <- (2 - e^eta) x + N(0, e^{2 eta} - 1), so the
    # per-coordinate variance follows a scalar recursion from 1
    p = practical_schedule({"sampler": "rsdmc-v1"})
    a = 2 - math.exp(p.eta)
    v = 1.0
    for _ in range(p.total_outer):
        v = a * a * v + math.expm1(2 * p.eta)
    ps = run_rsdmc(standard_gaussian(2), p, 10**4, 0, score_override=lambda X, t: -X)
    assert np.all(np.abs(ps.points.var(0) - v) < 0.05)
    assert v == pytest.approx((math.expm1(2 * p.eta)) / (1 - a * a), rel=1e-3)


def test_v2_covers_every_mode(bench):
    ps = run_rsdmc(bench, practical_schedule({"sampler": "rsdmc-v2", "budget": 200}), 1000, 0)
    assert mode_stats(ps, bench).fractions.min() >= 0.05


def test_dmc_forces_single_segment(bench):
    ps = run_dmc(bench, {"budget": 200}, 20, 0)
    assert ps.meta["schedule"]["K"] == 1
    ps = run_dmc(bench, practical_schedule({"sampler": "rsdmc-v1"}), 20, 0)
    assert ps.meta["schedule"]["K"] == 1 and ps.sampler_id == "dmc"


def test_dmc_between_rsdmc_and_ula(ground_truth_mmd):
    rs, dmc, ula = (ground_truth_mmd(s, 3200) for s in ("rsdmc-v2", "dmc", "ula"))
    assert rs < dmc < ula


@pytest.mark.parametrize("sampler", ["ula", "dmc", "rsdmc-v1", "rsdmc-v2"])
def test_seed_stability_across_workers(bench, sampler):
    p = practical_schedule({"sampler": sampler, "budget": 200})
    a = run_sampler(bench, p, 101, 3, workers=1)
    b = run_sampler(bench, p, 101, 3, workers=MAX_WORKERS)
    assert np.array_equal(a.points, b.points)
    assert a.grad_per_particle == b.grad_per_particle


def test_workers_env_override(bench, monkeypatch):
    p = practical_schedule({"sampler": "rsdmc-v2", "budget": 200})
    a = run_sampler(bench, p, 40, 1)
    monkeypatch.setenv("RSDMC_WORKERS", "3")
    assert np.array_equal(run_sampler(bench, p, 40, 1).points, a.points)


def test_reference_backend_matches_kernels(bench, backend):
    p = practical_schedule({"sampler": "rsdmc-v2", "R": 20, "eta": 0.05, "n": 2, "m": 1})
    a = run_rsdmc(bench, p, 6, 2, backend="reference")
    b = run_rsdmc(bench, p, 6, 2, backend=backend)
    np.testing.assert_allclose(a.points, b.points, rtol=1e-10, atol=1e-10)


def test_checkpoints_are_prefixes(bench):
    p = practical_schedule({"sampler": "rsdmc-v2"})
    snaps = run_rsdmc(bench, p, 30, 5, checkpoints=[0, 100, 190, 195, 200])
    assert [s.grad_per_particle for s in snaps] == [0, 100, 190, 195, 200]
    assert np.array_equal(snaps[0].points, init_particles(30, 2, 5).points)
    assert np.array_equal(snaps[-1].points, run_rsdmc(bench, p, 30, 5).points)
    with pytest.raises(ValueError):
        run_rsdmc(bench, p, 30, 5, checkpoints=[300])
    with pytest.raises(ValueError):
        run_rsdmc(bench, p, 30, 5, checkpoints=[100, 50])


def test_divergence_raises(bench):
    p = practical_schedule({"sampler": "rsdmc-v1", "K": 4})
    with pytest.raises(NumericalDivergence) as exc:
        run_rsdmc(bench, p, 5, 0)
    assert exc.value.k is not None and exc.value.particle is not None


def test_zero_particles(bench):
    ps = run_rsdmc(bench, practical_schedule({"sampler": "rsdmc-v2"}), 0, 0)
    assert ps.points.shape == (0, 2) and ps.grad_per_particle == 0


def test_paper_variant_runs(bench):
    p = ScheduleParams(S=0.5, K=2, R=10, eta=0.05, tau_rule=TauRule("constant", 0.01), variant="paper")
    ps = run_rsdmc(bench, p, 10, 0)
    assert ps.meta["variant"] == "paper"

import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fd_grad
from rsdmc.counter import GradientCounter
from rsdmc.rng import stream
from rsdmc.target import (
    GaussianMixture,
    analytic_score,
    diffuse_gmm,
    gmm_grad_log_density,
    gmm_log_density,
    load_mixture,
    sample_ground_truth,
    score_jacobian,
    standard_gaussian,
)


def test_log_density_standard_normal_at_origin():
    assert gmm_log_density(standard_gaussian(1), [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)


def test_log_density_symmetric_pair():
    a, var = 1.3, 0.4
    g = GaussianMixture([0.5, 0.5], [[-a], [a]], [var, var])
    single = -0.5 * math.log(2 * math.pi * var) - a * a / (2 * var)
    assert gmm_log_density(g, [0.0]) == pytest.approx(single, rel=1e-14)


def test_log_density_benchmark_matches_extended_precision(bench):
    mpmath.mp.dps = 50
    x = bench.means[2]
    total = mpmath.mpf(0)
    for w, mu, var in zip(bench.weights, bench.means, bench.variances):
        sq = sum((mpmath.mpf(float(m)) - mpmath.mpf(float(c))) ** 2 for m, c in zip(mu, x))
        total += mpmath.mpf(float(w)) * mpmath.exp(-sq / (2 * var)) / (2 * mpmath.pi * var)
    assert gmm_log_density(bench, x) == pytest.approx(float(mpmath.log(total)), rel=1e-13)


def test_log_density_far_field_is_finite(bench):
    assert np.isfinite(gmm_log_density(bench, [1e4, -1e4]))
    assert np.all(np.isfinite(gmm_grad_log_density(bench, [1e4, -1e4])))


def test_dimension_mismatch_rejected(bench):
    with pytest.raises(ValueError):
        gmm_log_density(bench, [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        gmm_grad_log_density(bench, [0.0])


def test_gaussian_score_and_symmetry():
    np.testing.assert_array_equal(gmm_grad_log_density(standard_gaussian(2), [2.0, 0.0]), [-2.0, 0.0])
    g = GaussianMixture([0.5, 0.5], [[-1.0, 0.0], [1.0, 0.0]], [0.5, 0.5])
    np.testing.assert_allclose(gmm_grad_log_density(g, [0.0, 0.0]), [0.0, 0.0], atol=1e-15)


def test_grad_matches_finite_difference(three_mode):
    rng = np.random.default_rng(3)
    for x in rng.normal(size=(20, 2)):
        g = gmm_grad_log_density(three_mode, x)
        fd = fd_grad(lambda z: gmm_log_density(three_mode, z), x)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)


def test_grad_counts_exactly_once(bench):
    c = GradientCounter()
    for _ in range(7):
        gmm_grad_log_density(bench, [0.1, 0.2], c)
    assert c.total == 7


def test_analytic_score_and_diffusion_never_count(bench):
    c = GradientCounter()
    analytic_score(bench, 0.3, np.zeros(2))
    diffuse_gmm(bench, 0.3)
    assert c.total == 0


def test_validation():
    with pytest.raises(ValueError):
        GaussianMixture([0.5, 0.6], [[0.0], [1.0]], [1.0, 1.0])
    with pytest.raises(ValueError):
        GaussianMixture([0.5, 0.5], [[0.0], [1.0]], [1.0, 0.0])
    with pytest.raises(ValueError):
        GaussianMixture([1.0], [[0.0, 1.0], [1.0, 1.0]], [1.0])


def test_diffuse_identity_and_unit_variance(three_mode):
    assert diffuse_gmm(three_mode, 0.0) is three_mode
    g = GaussianMixture([0.5, 0.5], [[1.0, 2.0], [-3.0, 0.5]], [1.0, 1.0])
    d = diffuse_gmm(g, 0.7)
    np.testing.assert_array_equal(d.variances, [1.0, 1.0])
    np.testing.assert_allclose(d.means, math.exp(-0.7) * g.means, rtol=1e-15)
    with pytest.raises(ValueError):
        diffuse_gmm(g, -0.1)


def test_diffuse_long_time_is_stationary(bench):
    d = diffuse_gmm(bench, 20.0)
    np.testing.assert_allclose(d.means, 0.0, atol=1e-8)
    np.testing.assert_allclose(d.variances, 1.0, atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(s=st.floats(0.0, 3.0), t=st.floats(0.0, 3.0))
def test_diffuse_semigroup(s, t):
    g = GaussianMixture([0.3, 0.7], [[2.0, -1.0], [0.0, 4.0]], [0.02, 1.7])
    a, b = diffuse_gmm(diffuse_gmm(g, s), t), diffuse_gmm(g, s + t)
    np.testing.assert_allclose(a.means, b.means, atol=1e-12)
    np.testing.assert_allclose(a.variances, b.variances, atol=1e-12)


def test_analytic_score_standard_gaussian_is_minus_x():
    x = np.array([0.3, -1.7])
    for t in (0.0, 0.1, 2.0):
        np.testing.assert_allclose(analytic_score(standard_gaussian(2), t, x), -x, atol=1e-15)


def test_analytic_score_single_mode_closed_form():
    mu, var, t = np.array([1.0, -2.0]), 0.3, 0.4
    g = GaussianMixture([1.0], [mu], [var])
    x = np.array([0.5, 0.5])
    expect = -(x - math.exp(-t) * mu) / (math.exp(-2 * t) * var + 1 - math.exp(-2 * t))
    np.testing.assert_allclose(analytic_score(g, t, x), expect, rtol=1e-14)


@pytest.mark.parametrize("t", [0.0, 0.05, 0.2, 1.0])
def test_analytic_score_matches_fd_of_diffused_density(three_mode, t):
    rng = np.random.default_rng(11)
    d = diffuse_gmm(three_mode, t)
    for x in rng.normal(scale=1.5, size=(50, 2)):
        fd = fd_grad(lambda z: gmm_log_density(d, z), x)
        np.testing.assert_allclose(analytic_score(three_mode, t, x), fd, rtol=1e-4, atol=1e-7)


def _posterior_draws(gmm, t, x, n, rng):
    """Exact x0 | x_t = x draws: each component's Gaussian posterior, reweighted."""
    et, v = math.exp(-t), -math.expm1(-2 * t)
    log_w, means, sds = [], [], []
    for w, mu, s2 in zip(gmm.weights, gmm.means, gmm.variances):
        marg = et * et * s2 + v
        log_w.append(math.log(w) - 0.5 * len(x) * math.log(marg) - ((x - et * mu) ** 2).sum() / (2 * marg))
        prec = 1 / s2 + et * et / v
        means.append((mu / s2 + et * x / v) / prec)
        sds.append(math.sqrt(1 / prec))
    log_w = np.array(log_w)
    p = np.exp(log_w - log_w.max())
    p /= p.sum()
    comp = rng.choice(len(p), size=n, p=p)
    return np.array(means)[comp] + np.array(sds)[comp, None] * rng.standard_normal((n, len(x)))


def test_analytic_score_matches_posterior_expectation(bench):
    t, n = 0.1, 10**6
    rng = np.random.default_rng(5)
    et, v = math.exp(-t), -math.expm1(-2 * t)
    for x in rng.uniform(-1, 4, size=(3, 2)):
        x0 = _posterior_draws(bench, t, x, n, rng)
        terms = -(x - et * x0) / v
        mean, se = terms.mean(axis=0), terms.std(axis=0) / math.sqrt(n)
        assert np.all(np.abs(analytic_score(bench, t, x) - mean) <= 3 * se + 1e-12)


def test_ground_truth_moments_and_mode_counts(bench):
    pts = sample_ground_truth(standard_gaussian(1), 1000, stream(0, 1)).points
    assert abs(pts.mean()) < 0.1 and abs(pts.var() - 1) < 0.1
    pts = sample_ground_truth(bench, 6000, stream(1, 1)).points
    labels = ((pts[:, None] - bench.means[None]) ** 2).sum(-1).argmin(1)
    counts = np.bincount(labels, minlength=6)
    assert np.all(np.abs(counts - 1000) <= 120)
    assert sample_ground_truth(bench, 0, stream(0, 1)).n == 0


def test_smoothness_bounds_jacobian(bench, three_mode):
    rng = np.random.default_rng(2)
    for g in (bench, three_mode):
        L = g.smoothness_L
        for x in g.means[rng.integers(g.n_modes, size=200)] + rng.normal(size=(200, 2)):
            assert np.abs(np.linalg.eigvalsh(score_jacobian(g, x))).max() <= L * (1 + 1e-9)


def test_jacobian_matches_finite_difference(three_mode):
    x = np.array([0.4, -0.2])
    J = score_jacobian(three_mode, x)
    fd = np.stack([fd_grad(lambda z: gmm_grad_log_density(three_mode, z)[i], x) for i in range(2)])
    np.testing.assert_allclose(J, fd, rtol=1e-5, atol=1e-7)


def test_second_moment(bench):
    pts = sample_ground_truth(bench, 200_000, stream(3, 1)).points
    assert (pts**2).sum(1).mean() == pytest.approx(bench.second_moment_M, rel=0.01)


def test_json_round_trip(bench, tmp_path):
    data = json.loads(bench.to_json())
    assert set(data) == {"weights", "means", "variances"}
    p = tmp_path / "g.json"
    p.write_text(bench.to_json())
    back = load_mixture(p)
    np.testing.assert_array_equal(back.means, bench.means)
    assert back.fingerprint() == bench.fingerprint()
    with pytest.raises(ValueError):
        GaussianMixture.from_dict({"weights": [1.0], "means": [[0.0]]})


def test_shipped_benchmark(bench):
    assert bench.n_modes == 6 and bench.dim == 2
    np.testing.assert_allclose(bench.variances, 0.02)
    np.testing.assert_allclose(np.linalg.norm(bench.means - [2.0, 0.0], axis=1), 2.0)

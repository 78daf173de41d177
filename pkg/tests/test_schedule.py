import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsdmc.errors import ConfigError
from rsdmc.ou import concavity_bounds, lemma_step_bound, segment_length_bound
from rsdmc.samplers import gradient_budget, plan
from rsdmc.schedule import (
    ScheduleParams,
    TauRule,
    forward_kl_bound,
    practical_schedule,
    theoretical_schedule,
    validate,
    with_overrides,
)
from rsdmc.target import GaussianMixture, diffuse_gmm
from rsdmc.ou import gaussian_forward_kl


def test_segment_length_at_unit_smoothness():
    assert theoretical_schedule(1.0, 8.0, 2, 0.1).S == pytest.approx(0.5 * math.log(1.5), rel=1e-15)
    assert 0.5 * math.log(1.5) == pytest.approx(0.2027, abs=1e-4)


def test_segment_count_pinned():
    # ceil(2 log(100) / (0.5 log 1.5)) = ceil(45.43...) = 46
    assert theoretical_schedule(1.0, 8.0, 2, 0.1).K == 46


def test_theory_tau_at_first_iteration():
    p = theoretical_schedule(1.0, 8.0, 2, 0.1)
    S = p.S
    expect = 2**-5 * 3**-2 * math.exp(2 * S) * (1 - math.exp(-2 * S)) ** 2 * (0.1 / 2)
    assert p.tau_at(p.gap(0)) == pytest.approx(expect, rel=1e-14)
    bound = concavity_bounds(S)
    assert p.tau_at(S) <= bound.mu / (8 * bound.ell**2) == pytest.approx(1 / 72)


def test_theoretical_fields():
    p = theoretical_schedule(2.0, 20.0, 10, 0.05)
    assert p.l == pytest.approx(0.5) and p.l_rec == pytest.approx(0.05 / 960)
    assert p.R == math.ceil(p.S / p.eta)
    assert abs(p.R * p.eta - p.S) < p.eta
    assert p.log_delta < -1e3
    assert p.n_clamped
    assert p.n_at(0) >= 1 and p.m_at(0, 5.0) >= p.m_at(0, 1.0)


@pytest.mark.parametrize("bad", [dict(L=0.5), dict(eps=1.0), dict(eps=0.0), dict(M=-1.0)])
def test_theoretical_rejects(bad):
    kw = dict(L=1.0, M=1.0, d=2, eps=0.1)
    kw.update(bad)
    with pytest.raises(ValueError):
        theoretical_schedule(kw["L"], kw["M"], kw["d"], kw["eps"])


@settings(max_examples=30, deadline=None)
@given(
    L=st.floats(1.0, 10.0),
    M=st.floats(0.0, 50.0),
    d=st.integers(1, 20),
    e1=st.floats(0.01, 0.9),
    e2=st.floats(0.01, 0.9),
)
def test_theoretical_monotone_in_eps(L, M, d, e1, e2):
    lo, hi = sorted((e1, e2))
    a, b = theoretical_schedule(L, M, d, lo), theoretical_schedule(L, M, d, hi)
    assert a.K >= b.K
    assert a.n_at(0) >= b.n_at(0)
    assert a.m_at(0, 3.0) >= b.m_at(0, 3.0)
    assert a.eta <= b.eta
    assert a.tau_at(a.S) <= b.tau_at(b.S)


@pytest.mark.parametrize("L,d,M,eps", [(1, 2, 8, 0.1), (2, 10, 20, 0.05)])
def test_theoretical_schedule_validates(L, d, M, eps):
    assert validate(theoretical_schedule(L, M, d, eps), L) == []


def test_validate_flags_long_segment():
    p = theoretical_schedule(1.0, 8.0, 2, 0.1)
    bad = with_overrides(p, S=2 * p.S, R=2 * p.R)
    names = [v.name for v in validate(bad, 1.0)]
    assert "segment length" in names
    v = next(v for v in validate(bad, 1.0) if v.name == "segment length")
    assert v.margin == pytest.approx(p.S - 2 * p.S)


def test_validate_practical_reports_inner_margin():
    p = practical_schedule({"sampler": "rsdmc-v1"})
    out = {v.name: v for v in validate(p, 1.0)}
    assert "segment length" in out
    # the smallest gap S - 99 eta = 0.05 gives the tightest step bound
    bound = lemma_step_bound(p.S - 99 * p.eta)
    assert out["inner step"].lhs == 0.01
    assert out["inner step"].rhs == pytest.approx(bound, rel=1e-12)
    assert out["inner step"].margin == pytest.approx(bound - 0.01, rel=1e-12)


def test_validate_never_raises():
    p = ScheduleParams(S=100.0, K=1, R=1, eta=100.0)
    assert validate(p, -1.0)
    assert validate(p, 1.0)


def test_practical_presets():
    v1 = practical_schedule({"sampler": "rsdmc-v1"})
    assert (v1.K, v1.R, v1.eta, v1.n, v1.m, v1.ula_tail) == (2, 100, 0.05, 1, 1, 0)
    assert v1.tau_at(1.0) == 0.01 and v1.total_outer == 200
    assert gradient_budget(v1) == 200
    v2 = practical_schedule({"sampler": "rsdmc-v2"})
    assert v2.ula_tail == 10
    tail = [ph for ph in plan(v2) if ph.kind == "ula"]
    assert sum(ph.r1 - ph.r0 for ph in tail) == 10 and tail[0].k == 0 and tail[0].r0 == 90
    u = practical_schedule({"sampler": "ula"})
    assert (u.ula_step, u.ula_steps) == (2e-4, 200)
    dmc = practical_schedule({"sampler": "dmc"})
    assert dmc.K == 1 and dmc.S == pytest.approx(2 * v1.S)


def test_practical_budget_scaling():
    for b in (200, 400, 800, 1600, 3200):
        p = practical_schedule({"sampler": "rsdmc-v2", "budget": b})
        assert gradient_budget(p) == b
        assert p.R * p.eta == pytest.approx(5.0)
        assert practical_schedule({"sampler": "ula", "budget": b}).ula_steps == b
        assert gradient_budget(practical_schedule({"sampler": "dmc", "budget": b})) == b


def test_practical_errors():
    with pytest.raises(ConfigError):
        practical_schedule({"sampler": "mala"})
    with pytest.raises(ConfigError):
        practical_schedule({"sampler": "rsdmc-v1", "unknown": 1})
    with pytest.raises(ConfigError):
        practical_schedule({"sampler": "rsdmc-v1", "budget": 1})


def test_snapshot_round_trip():
    p = theoretical_schedule(1.0, 8.0, 2, 0.1)
    assert ScheduleParams.from_snapshot(p.snapshot()) == p


def test_step_lengths_end_at_segment_boundary():
    p = ScheduleParams(S=1.0, K=1, R=3, eta=0.4)
    assert sum(p.step_length(r) for r in range(p.R)) == pytest.approx(p.S)
    assert TauRule("lemma", 0.5)(0.2) == pytest.approx(0.5 * lemma_step_bound(0.2))


@pytest.mark.parametrize("K,S", [(1, 0.5), (4, 0.2), (10, 1.0)])
def test_forward_kl_decay_holds_for_gaussian_mixture_component(K, S):
    mean, var = [1.0, 2.0], 0.5
    g = GaussianMixture([1.0], [mean], [var])
    L, M = 1 / var, sum(m * m for m in mean) + 2 * var
    d = diffuse_gmm(g, K * S)
    kl = gaussian_forward_kl(mean, var, K * S)
    assert d.variances[0] == pytest.approx(math.exp(-2 * K * S) * var - math.expm1(-2 * K * S))
    assert kl <= forward_kl_bound(L, M, 2, K, S)


def test_segment_bound_formula():
    for L in (1.0, 2.0, 10.0):
        assert segment_length_bound(L) == pytest.approx(0.5 * math.log(1 + 1 / (2 * L)))

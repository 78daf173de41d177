"""Recursive score estimation.

The score of the reverse process at (segment k, gap t') is a posterior mean:

    grad log p_{k,t'}(x) = E_{x0 ~ q(.|x)} [ -(x - e^{-t'} x0) / (1 - e^{-2t'}) ].

Each posterior draw comes from a short ULA chain on q, whose drift needs the
score one segment earlier; that score is estimated the same way, down to the
target's own gradient. With constant n and m an estimate at segment k costs
exactly (n m)^{k+1} gradient calls.

Two implementations share one random-draw order (per chain: initializer, then
for every inner step the child draws followed by the step noise):

* :func:`estimate_score` follows one point through the recursion. It is the
  reference, supports norm-dependent inner counts, and can record call traces.
* :func:`estimate_scores` runs a batch through the compiled or numpy kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .counter import GradientCounter
from .errors import NumericalDivergence
from .ou import TimeIndex
from .rng import draw_block, particle_generators
from .schedule import ScheduleParams

BOUND = 1e6


@dataclass(frozen=True)
class ScoreEstimate:
    value: np.ndarray
    grad_calls: int
    max_particle_norm: float


def _gap(k: int, r: int, params: ScheduleParams) -> float:
    if not 0 <= r < max(params.R, 1):
        raise ValueError(f"reverse iteration {r} outside [0, {params.R - 1}]")
    return TimeIndex(k, r).gap(params.S, params.eta)


def _diverged(x) -> bool:
    return not bool(np.all(np.abs(x) <= BOUND))


def estimate_score(
    k: int,
    r: int,
    x,
    params: ScheduleParams,
    target,
    rng: np.random.Generator,
    counter: GradientCounter | None = None,
    trace: list | None = None,
) -> ScoreEstimate:
    """Estimate grad log p_{k, S - r eta}(x); ``k = -1`` is the target's own score.

    Args:
        k: segment index, ``-1`` for the base case.
        r: reverse iteration inside the segment; recursive calls use ``r = 0``.
        x: anchor point of shape ``(d,)``.
        params: schedule supplying S, eta, the tau rule and the inner counts.
        target: gradient oracle.
        rng: stream consumed in the documented order.
        counter: incremented once per oracle call.
        trace: if given, every call appends its ``(k, r)``.

    Raises:
        NumericalDivergence: an inner particle left ``[-1e6, 1e6]``.
    """
    if k < -1:
        raise ValueError(f"segment index must be >= -1, got {k}")
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValueError("anchor must be a finite 1-D point")
    local = GradientCounter()
    stats = [0.0]
    value = _estimate(k, r, x, params, target, rng, local, trace, 0, stats)
    if counter is not None:
        counter.increment(local.total)
    return ScoreEstimate(value, local.total, stats[0])


def _estimate(k, r, x, params, target, rng, counter, trace, depth, stats):
    if trace is not None:
        trace.append((k, r))
    if k == -1:
        return target.grad_log_density(x, counter)
    t = _gap(k, r, params)
    et, e2t = math.exp(-t), math.exp(-2.0 * t)
    inv_den = 1.0 / -math.expm1(-2.0 * t)
    exp_t, init_sd = math.exp(t), math.sqrt(math.expm1(2.0 * t))
    tau = params.tau_at(t)
    sq2tau = math.sqrt(2.0 * tau)
    n = params.n_at(depth)
    m = params.m_at(depth, float(np.linalg.norm(x)))
    inv_n = 1.0 / n
    v = np.zeros_like(x)
    for i in range(n):
        xp = exp_t * x + init_sd * rng.standard_normal(x.shape)
        if _diverged(xp):
            raise NumericalDivergence(k, r, i, -1, value=xp)
        stats[0] = max(stats[0], float(np.sqrt(xp @ xp)))
        for j in range(m):
            vb = _estimate(k - 1, 0, xp, params, target, rng, counter, trace, depth + 1, stats)
            xp = xp + tau * (vb + (et * x - e2t * xp) * inv_den) + sq2tau * rng.standard_normal(x.shape)
            if _diverged(xp):
                raise NumericalDivergence(k, r, i, j, value=xp)
            stats[0] = max(stats[0], float(np.sqrt(xp @ xp)))
        v = v + inv_n * (-(x - et * xp) * inv_den)
    return v


def deep_score_v2(x, target, counter: GradientCounter | None = None) -> np.ndarray:
    """The target score used directly for the final outer iterations of v2."""
    return target.grad_log_density(x, counter)


def draws_per_estimate(params: ScheduleParams, k: int) -> int:
    """Standard-normal d-vectors one estimate at segment k consumes."""
    _, nm = _kernels.level_tables(params, k + 1)
    return int(nm[k + 1, 2])


def estimate_scores(
    X,
    k: int,
    r: int,
    params: ScheduleParams,
    target,
    seed: int,
    counter: GradientCounter | None = None,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`estimate_score` with point i drawing from particle stream i.

    Returns the ``(N, d)`` estimates and the per-point maximal inner norm. Row i
    equals ``estimate_score(k, r, X[i], ..., particle_generator(seed, i))`` up
    to rounding.
    """
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("expected an (N, d) batch")
    N, d = X.shape
    if k == -1:
        V = target.score_batch(X)
        if counter is not None:
            counter.increment(N)
        return V, np.zeros(N)
    levels = k + 1
    lv, nm = _kernels.level_tables(params, levels)
    t = _gap(k, r, params)
    steps = np.array([_kernels.step_row(t, params.tau_at(t), None, 0.0)])
    noise = draw_block(particle_generators(seed, 0, N), int(nm[levels, 2]) * d)
    V = np.zeros_like(X)
    zmax = np.zeros(N)
    loc = np.zeros(6, dtype=np.int64)
    be = _kernels.get_backend(backend)
    rc, grads = _kernels.run_rse(be, X.copy(), V, lv, nm, steps, noise, target, levels, False, zmax, loc)
    if rc:
        level = int(loc[2])
        raise NumericalDivergence(level - 1, r if level == levels else 0, int(loc[3]), int(loc[4]), particle=int(loc[0]))
    if counter is not None:
        counter.increment(grads)
    return V, zmax

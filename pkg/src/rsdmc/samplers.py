"""End-to-end samplers: ULA, DMC and RS-DMC (v1 and v2).

All samplers share one seeding scheme. Particle i owns the stream
``particle_generator(seed, i)``. Its first d normals are its initial position,
and every later normal is consumed in step order, so results do not depend on
how particles are split across worker threads.

An RS-DMC run is a sequence of phases: one per segment (outer steps driven by
recursive score estimates), the last one possibly split off as a ULA tail.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import _kernels
from .counter import GradientCounter
from .errors import ConfigError, NumericalDivergence
from .rng import draw_block, particle_generators
from .rse import estimate_score
from .schedule import ScheduleParams, practical_schedule, with_overrides

# normals per particle per chunk are capped so memory stays bounded
_CHUNK_DOUBLES = 1 << 22


@dataclass
class ParticleSet:
    """Particles in R^d with provenance."""

    points: np.ndarray
    sampler_id: str
    seed: int | None = None
    grad_per_particle: float = 0
    meta: dict[str, Any] = field(default_factory=dict)
    budget: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1 and pts.size == 0:
            pts = pts.reshape(0, 0)
        if pts.ndim != 2:
            raise ValueError(f"particles must form an (N, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("particle set contains non-finite points")
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n


def _as_points(X) -> np.ndarray:
    return X.points if isinstance(X, ParticleSet) else np.asarray(X, dtype=float)


def _per_particle(total: int, n: int):
    if n == 0:
        return 0
    q, rem = divmod(total, n)
    return q if rem == 0 else total / n


def resolve_workers(workers: int | None) -> int:
    env = os.environ.get("RSDMC_WORKERS")
    if env:
        workers = int(env)
    workers = 1 if workers is None else int(workers)
    if workers < 1:
        raise ConfigError("worker count must be positive")
    return workers


def _slices(n: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, n)) if n else 1
    edges = np.linspace(0, n, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _parallel(fn, n: int, workers: int):
    parts = _slices(n, workers)
    if len(parts) == 1:
        return [fn(*parts[0])]
    with ThreadPoolExecutor(max_workers=len(parts)) as pool:
        return list(pool.map(lambda ab: fn(*ab), parts))


def _chunks(total: int, per_step: int, rows: int):
    """Split ``total`` steps so one chunk of noise stays under the cap."""
    size = max(1, _CHUNK_DOUBLES // max(1, per_step * max(rows, 1)))
    start = 0
    while start < total:
        stop = min(total, start + size)
        yield start, stop
        start = stop


# -- initialization ----------------------------------------------------------


def init_particles(n: int, d: int, seed: int) -> ParticleSet:
    """n standard Gaussian points; point i is the first d normals of stream i."""
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 particles of positive dimension")
    gens = particle_generators(seed, 0, n)
    return ParticleSet(draw_block(gens, d).reshape(n, d), sampler_id="init", seed=seed)


def _init_slice(seed: int, a: int, b: int, d: int):
    gens = particle_generators(seed, a, b)
    X = draw_block(gens, d).reshape(b - a, d)
    return gens, np.ascontiguousarray(X)


# -- ULA ---------------------------------------------------------------------


def run_ula(
    target,
    n_particles: int,
    steps: int,
    h: float,
    seed: int,
    counter: GradientCounter | None = None,
    *,
    workers: int = 1,
    backend: str | None = None,
    checkpoints: Sequence[int] | None = None,
):
    """x <- x + h grad log p*(x) + sqrt(2h) xi for ``steps`` iterations from N(0, I).

    Returns a ParticleSet, or a list of them (one per checkpoint, in gradient
    calls per particle) when ``checkpoints`` is given.
    """
    if not h > 0:
        raise ValueError("ULA step must be positive")
    if steps < 0:
        raise ValueError("step count must be nonnegative")
    d = target.dim
    stops = _check_stops(checkpoints, steps)
    be = _kernels.get_backend(None if backend == "reference" else backend)

    def work(a, b):
        gens, X = _init_slice(seed, a, b, d)
        snaps = []
        done = 0
        for stop in stops:
            for c0, c1 in _chunks(stop - done, d, b - a):
                noise = draw_block(gens, (c1 - c0) * d)
                loc = np.zeros(6, dtype=np.int64)
                if _kernels.run_ula(be, X, h, noise, target, loc):
                    raise NumericalDivergence(0, done + c0 + int(loc[1]), -1, -1, particle=a + int(loc[0]))
            done = stop
            snaps.append(X.copy())
        return snaps, (b - a) * steps

    results = _parallel(work, n_particles, resolve_workers(workers))
    grads = sum(g for _, g in results)
    if counter is not None:
        counter.increment(grads)
    meta = {"sampler": "ula", "steps": steps, "h": h, "backend": be.NAME}
    sets = []
    for idx, stop in enumerate(stops):
        pts = np.concatenate([s[idx] for s, _ in results]) if results else np.zeros((0, d))
        sets.append(ParticleSet(pts.reshape(-1, d), "ula", seed, stop, dict(meta, grads_at=stop), budget=steps))
    if checkpoints is None:
        return sets[-1]
    return sets


def _check_stops(checkpoints, total) -> list[int]:
    if checkpoints is None:
        return [total]
    stops = [int(c) for c in checkpoints]
    if any(b < a for a, b in zip(stops, stops[1:])):
        raise ValueError("checkpoints must be sorted ascending")
    if stops and (stops[0] < 0 or stops[-1] > total):
        raise ValueError(f"checkpoints must lie in [0, {total}]")
    return stops


# -- RS-DMC ------------------------------------------------------------------


@dataclass(frozen=True)
class _Phase:
    kind: str  # "rse" or "ula"
    k: int
    r0: int
    r1: int
    cost: int  # gradient calls per particle per step


def plan(params: ScheduleParams) -> list[_Phase]:
    """Phases of an outer run, segment K-1 first, ULA tail split off the end."""
    total = params.K * params.R
    tail_from = total - min(params.ula_tail, total)
    phases = []
    it = 0
    for k in range(params.K - 1, -1, -1):
        a, b = it, it + params.R
        if b <= tail_from:
            phases.append(_Phase("rse", k, 0, params.R, _cost(params, k)))
        elif a >= tail_from:
            phases.append(_Phase("ula", k, 0, params.R, 1))
        else:
            cut = tail_from - a
            phases.append(_Phase("rse", k, 0, cut, _cost(params, k)))
            phases.append(_Phase("ula", k, cut, params.R, 1))
        it = b
    return phases


def _cost(params: ScheduleParams, k: int) -> int:
    if params.m_depends_on_norm:
        return -1
    return params.cost_per_step(k)


def gradient_budget(params: ScheduleParams) -> int:
    """Gradient calls per particle of a full run (constant n, m)."""
    if params.sampler == "ula":
        return params.ula_steps
    return sum(p.cost * (p.r1 - p.r0) for p in plan(params))


def _step_rows(params: ScheduleParams, r0: int, r1: int) -> np.ndarray:
    factor = 2.0 if params.variant == "factor2" else 1.0
    rows = []
    for r in range(r0, r1):
        t = params.gap(r)
        rows.append(_kernels.step_row(t, params.tau_at(t), params.step_length(r), factor))
    return np.array(rows).reshape(-1, 10)


def _stop_schedule(params: ScheduleParams, checkpoints) -> list[tuple[int, int]]:
    """Map gradient checkpoints to (global outer step, grads reached)."""
    phases = plan(params)
    cum = [(0, 0)]
    it = grads = 0
    for ph in phases:
        for _ in range(ph.r0, ph.r1):
            it += 1
            grads += ph.cost
            cum.append((it, grads))
    total = cum[-1][1]
    stops = _check_stops(checkpoints, total)
    out = []
    for c in stops:
        best = max((s for s in cum if s[1] <= c), key=lambda s: s[0])
        out.append(best)
    return out


def run_rsdmc(
    target,
    params: ScheduleParams,
    n_particles: int,
    seed: int,
    counter: GradientCounter | None = None,
    *,
    workers: int = 1,
    backend: str | None = None,
    checkpoints: Sequence[int] | None = None,
    score_override: Callable[[np.ndarray, float], np.ndarray] | None = None,
):
    """Reverse segmented OU from N(0, I) with recursively estimated scores.

    Args:
        target: mixture target; its gradient is the only oracle used.
        params: schedule (practical or theoretical); violations are allowed.
        n_particles: number of particles.
        seed: run seed; particle i draws from stream i.
        counter: receives the total gradient calls.
        workers: threads over particle slices; output does not depend on it.
        backend: ``"cython"``, ``"numpy"`` or ``"reference"`` (per point,
            required for norm-dependent inner counts).
        checkpoints: gradient counts per particle at which to snapshot.
        score_override: test hook ``(X, forward_time) -> scores`` replacing
            the estimator (not counted). Only outer noise is drawn then.

    Returns:
        A ParticleSet, or a list of them when ``checkpoints`` is given.
    """
    if params.sampler == "ula":
        raise ConfigError("use run_ula for the ULA baseline")
    d = target.dim
    phases = plan(params)
    stops = _stop_schedule(params, checkpoints)
    if backend is None and params.m_depends_on_norm:
        backend = "reference"
    be_name = backend or _kernels.default_backend()
    be = None if be_name == "reference" or score_override is not None else _kernels.get_backend(be_name)

    def work(a, b):
        gens, X = _init_slice(seed, a, b, d)
        shard = GradientCounter()
        snaps = []
        stop_iter = iter(stops)
        nxt = next(stop_iter, None)
        it = 0
        while nxt is not None and nxt[0] == it:
            snaps.append(X.copy())
            nxt = next(stop_iter, None)
        for ph in phases:
            r = ph.r0
            while r < ph.r1:
                # advance to the next snapshot boundary or the phase end
                end = ph.r1 if nxt is None else min(ph.r1, r + (nxt[0] - it))
                _advance(ph, r, end, X, gens, params, target, be, shard, a, score_override)
                it += end - r
                r = end
                while nxt is not None and nxt[0] == it:
                    snaps.append(X.copy())
                    nxt = next(stop_iter, None)
        return snaps, shard

    results = _parallel(work, n_particles, resolve_workers(workers))
    total = sum(s.total for _, s in results)
    if counter is not None:
        counter.increment(total)
    meta = {
        "sampler": params.sampler,
        "schedule": params.snapshot(),
        "backend": "override" if score_override is not None else be_name,
        "variant": params.variant,
    }
    sets = []
    for idx, (_, grads) in enumerate(stops):
        pts = np.concatenate([s[idx] for s, _ in results]) if results else np.zeros((0, d))
        gpp = _per_particle(total, n_particles) if idx == len(stops) - 1 and checkpoints is None else grads
        sets.append(ParticleSet(pts.reshape(-1, d), params.sampler, seed, gpp, dict(meta, grads_at=grads)))
    if checkpoints is None:
        return sets[-1]
    return sets


def _advance(ph, r0, r1, X, gens, params, target, be, shard, offset, override):
    B, d = X.shape
    if r1 <= r0 or B == 0:
        return
    if ph.kind == "ula":
        h = params.ula_tail_step
        for c0, c1 in _chunks(r1 - r0, d, B):
            noise = draw_block(gens, (c1 - c0) * d)
            loc = np.zeros(6, dtype=np.int64)
            score_be = be if be is not None else _kernels.get_backend("numpy")
            if _kernels.run_ula(score_be, X, h, noise, target, loc):
                raise NumericalDivergence(ph.k, r0 + c0 + int(loc[1]), -1, -1, particle=offset + int(loc[0]))
            shard.increment((c1 - c0) * B)
        return
    rows = _step_rows(params, r0, r1)
    if override is not None:
        for s, r in enumerate(range(r0, r1)):
            t_fwd = ph.k * params.S + params.gap(r)
            v = override(X, t_fwd)
            X[:] = rows[s, 7] * X + rows[s, 8] * v + rows[s, 9] * draw_block(gens, d)
        return
    if be is None:
        _advance_reference(ph, r0, r1, X, gens, params, target, shard, offset, rows)
        return
    levels = ph.k + 1
    lv, nm = _kernels.level_tables(params, levels)
    per = (int(nm[levels, 2]) + 1) * d
    V = np.zeros_like(X)
    zmax = np.zeros(B)
    for c0, c1 in _chunks(r1 - r0, per, B):
        noise = draw_block(gens, (c1 - c0) * per)
        loc = np.zeros(6, dtype=np.int64)
        rc, grads = _kernels.run_rse(be, X, V, lv, nm, rows[c0:c1], noise, target, levels, True, zmax, loc)
        shard.increment(grads)
        if rc:
            level = int(loc[2])
            r = r0 + c0 + int(loc[1])
            k, rr = (ph.k, r) if level == levels else (level - 1, 0)
            raise NumericalDivergence(k, rr, int(loc[3]), int(loc[4]), particle=offset + int(loc[0]))


def _advance_reference(ph, r0, r1, X, gens, params, target, shard, offset, rows):
    d = X.shape[1]
    for row, g in enumerate(gens):
        x = X[row].copy()
        for s, r in enumerate(range(r0, r1)):
            try:
                v = estimate_score(ph.k, r, x, params, target, g, shard).value
            except NumericalDivergence as exc:
                exc.particle = offset + row
                raise
            x = rows[s, 7] * x + rows[s, 8] * v + rows[s, 9] * g.standard_normal(d)
            if not np.all(np.abs(x) <= 1e6):
                raise NumericalDivergence(ph.k, r, -1, -1, particle=offset + row, value=x)
        X[row] = x


def run_dmc(target, config, n_particles: int, seed: int, counter: GradientCounter | None = None, **kw):
    """RS-DMC with a single segment spanning the whole horizon."""
    if isinstance(config, ScheduleParams):
        params = with_overrides(config, sampler="dmc", K=1)
    else:
        params = practical_schedule(dict(config, sampler="dmc", K=1))
    return run_rsdmc(target, params, n_particles, seed, counter, **kw)


def run_sampler(
    target,
    params: ScheduleParams,
    n_particles: int,
    seed: int,
    counter: GradientCounter | None = None,
    **kw,
):
    """Dispatch on ``params.sampler``."""
    if params.sampler == "ula":
        return run_ula(target, n_particles, params.ula_steps, params.ula_step, seed, counter, **kw)
    if params.sampler == "dmc":
        return run_dmc(target, params, n_particles, seed, counter, **kw)
    return run_rsdmc(target, params, n_particles, seed, counter, **kw)


__all__ = [
    "ParticleSet",
    "init_particles",
    "run_ula",
    "run_rsdmc",
    "run_dmc",
    "run_sampler",
    "plan",
    "gradient_budget",
    "resolve_workers",
]

"""Hot loops behind a common interface, compiled when available.

Both backends take the same flat tables, built here from a schedule:

``lv``   ``(levels + 1, 8)`` per-level coefficients
         ``[e^-t, e^-2t, 1/(1-e^-2t), e^t, sqrt(e^2t - 1), tau, sqrt(2 tau), 1/n]``.
         Rows ``1..levels-1`` describe the recursive calls (``t' = S``); the top
         row only contributes ``1/n`` since its gap changes every outer step.
``nm``   ``(levels + 1, 3)`` int64 rows ``[n, m, draws]`` where ``draws`` is the
         number of d-dimensional normals one estimate at that level consumes:
         ``draws(0) = 0`` and ``draws(L) = n (1 + m (draws(L-1) + 1))``.
``steps`` ``(T, 10)`` per outer step: the first seven ``lv`` columns for the
         step's gap, then the outer update ``[e^eta, drift coef, noise sd]``.
``noise`` ``(B, T * (draws + outer) * d)`` per-particle normals in consumption
         order: for each chain the initializer, then per inner step the child
         draws followed by the step noise; the outer step noise comes last.
``loc``  int64[6] filled on divergence: ``[row, step, level, i, j, 1]``.

``RSDMC_BACKEND=numpy`` forces the fallback.
"""

from __future__ import annotations

import math
import os
from types import ModuleType

import numpy as np

from . import _numpy
from ..errors import ConfigError

try:
    from . import _ckernel
except ImportError:  # pragma: no cover - depends on the build
    _ckernel = None

BACKENDS = ("cython", "numpy")


def available() -> list[str]:
    return [name for name in BACKENDS if name == "numpy" or _ckernel is not None]


def default_backend() -> str:
    forced = os.environ.get("RSDMC_BACKEND")
    if forced:
        return forced
    return "cython" if _ckernel is not None else "numpy"


def get_backend(name: str | None = None) -> ModuleType:
    name = name or default_backend()
    if name == "numpy":
        return _numpy
    if name == "cython":
        if _ckernel is None:
            raise ConfigError("compiled kernels are not built; reinstall or use backend 'numpy'")
        return _ckernel
    raise ConfigError(f"unknown backend {name!r}; expected one of {BACKENDS}")


def gap_coefficients(t: float, tau: float) -> list[float]:
    e2 = math.exp(-2.0 * t)
    return [
        math.exp(-t),
        e2,
        1.0 / -math.expm1(-2.0 * t),
        math.exp(t),
        math.sqrt(math.expm1(2.0 * t)),
        tau,
        math.sqrt(2.0 * tau),
    ]


def level_tables(params, levels: int) -> tuple[np.ndarray, np.ndarray]:
    """(lv, nm) for an estimate ``levels - 1`` segments above the base case."""
    if params.m_depends_on_norm:
        raise ConfigError("norm-dependent inner counts need the per-point reference estimator")
    lv = np.zeros((levels + 1, 8))
    nm = np.zeros((levels + 1, 3), dtype=np.int64)
    below = gap_coefficients(params.S, params.tau_at(params.S))
    for level in range(1, levels + 1):
        depth = levels - level
        n, m = params.n_at(depth), params.m_at(depth)
        nm[level] = (n, m, n * (1 + m * (nm[level - 1, 2] + 1)))
        if level < levels:
            lv[level, :7] = below
        lv[level, 7] = 1.0 / n
    return lv, nm


def step_row(t_gap: float, tau: float, eta: float | None, drift_factor: float) -> list[float]:
    row = gap_coefficients(t_gap, tau)
    if eta is None:
        return row + [0.0, 0.0, 0.0]
    return row + [math.exp(eta), drift_factor * math.expm1(eta), math.sqrt(math.expm1(2.0 * eta))]


def run_rse(backend, X, V, lv, nm, steps, noise, target, levels, outer, zmax, loc):
    """Dispatch ``rse_run`` with the score in the form the backend expects."""
    if backend is _numpy:
        score = target.score_batch
    else:
        score = target.kernel_arrays()
    noise = np.ascontiguousarray(noise)
    return backend.rse_run(X, V, lv, nm, steps, noise, score, levels, outer, zmax, loc)


def run_ula(backend, X, h, noise, target, loc):
    score = target.score_batch if backend is _numpy else target.kernel_arrays()
    return backend.ula_run(X, float(h), np.ascontiguousarray(noise), score, loc)

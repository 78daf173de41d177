"""Vectorized numpy implementation of the hot loops.

Same contract as the compiled ``_ckernel``; see ``rsdmc._kernels`` for the
array layouts. Particles and inner chains are batched together: a level with
``n`` chains turns a batch of ``B`` anchors into ``B * n`` rows, so the only
Python-level loops are over inner iterations.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"
BOUND = 1e6


class _Diverged(Exception):
    def __init__(self, level, i, j, row):
        self.level, self.i, self.j, self.row = level, i, j, row


def _check(x, level, i, j):
    bad = ~(np.abs(x) <= BOUND)
    if bad.any():
        raise _Diverged(level, i, j, int(np.flatnonzero(bad.any(axis=1))[0]))


def _rse(level, X, noise, coef, lv, nm, score, stats):
    """Score estimates for the rows of X; ``noise`` is (B, draws, d)."""
    if level == 0:
        stats[0] += X.shape[0]
        return score(X), None
    et, e2t, inv_den, exp_t, init_sd, tau, sq2tau, inv_n = coef
    n, m = int(nm[level, 0]), int(nm[level, 1])
    child = int(nm[level - 1, 2])
    B, d = X.shape
    blk = 1 + m * (child + 1)
    nz = noise.reshape(B * n, blk, d)
    Xr = np.repeat(X, n, axis=0) if n > 1 else X
    try:
        xp = exp_t * Xr + init_sd * nz[:, 0]
        _check(xp, level, -1, -1)
        z = np.sqrt((xp * xp).sum(axis=1))
        for j in range(m):
            off = 1 + j * (child + 1)
            vb, zc = _rse(level - 1, xp, nz[:, off : off + child], lv[level - 1], lv, nm, score, stats)
            if zc is not None:
                np.maximum(z, zc, out=z)
            xp = xp + tau * (vb + (et * Xr - e2t * xp) * inv_den) + sq2tau * nz[:, off + child]
            _check(xp, level, -1, j)
            np.maximum(z, np.sqrt((xp * xp).sum(axis=1)), out=z)
    except _Diverged as exc:
        if exc.level == level:
            exc.i = exc.row % n
        exc.row //= n
        raise
    term = (-(Xr - et * xp) * inv_den).reshape(B, n, d)
    v = np.zeros((B, d))
    for i in range(n):
        v = v + inv_n * term[:, i]
    return v, z.reshape(B, n).max(axis=1)


def rse_run(X, V, lv, nm, steps, noise, score, levels, outer, zmax, loc):
    """Advance (or only score, when ``outer`` is false) ``len(steps)`` outer steps."""
    B, d = X.shape
    D = int(nm[levels, 2])
    per = D + (1 if outer else 0)
    nz = noise.reshape(B, len(steps), per, d)
    stats = [0]
    for s, row in enumerate(steps):
        top = (row[0], row[1], row[2], row[3], row[4], row[5], row[6], lv[levels, 7])
        try:
            v, z = _rse(levels, X, nz[:, s, :D], top, lv, nm, score, stats)
        except _Diverged as exc:
            loc[:] = (exc.row, s, exc.level, exc.i, exc.j, 1)
            return 1, stats[0]
        V[:] = v
        if z is not None:
            np.maximum(zmax, z, out=zmax)
        if outer:
            X[:] = row[7] * X + row[8] * v + row[9] * nz[:, s, D]
            bad = ~(np.abs(X) <= BOUND)
            if bad.any():
                loc[:] = (int(np.flatnonzero(bad.any(axis=1))[0]), s, levels, -1, -1, 1)
                return 1, stats[0]
    return 0, stats[0]


def ula_run(X, h, noise, score, loc):
    B, d = X.shape
    steps = noise.shape[1] // d if B else 0
    nz = noise.reshape(B, steps, d)
    sq = np.sqrt(2.0 * h)
    for s in range(steps):
        X[:] = X + h * score(X) + sq * nz[:, s]
        bad = ~(np.abs(X) <= BOUND)
        if bad.any():
            loc[:] = (int(np.flatnonzero(bad.any(axis=1))[0]), s, 0, -1, -1, 1)
            return 1
    return 0

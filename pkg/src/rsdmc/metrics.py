"""Sample-quality metrics: RBF-kernel MMD, mode assignment, per-mode variance."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import DegenerateBandwidth
from .rng import BANDWIDTH, stream

MAX_HEURISTIC_POINTS = 2000


def _points(X) -> np.ndarray:
    pts = getattr(X, "points", X)
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2:
        raise ValueError(f"expected an (N, d) array of points, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class MmdReport:
    mmd: float
    bandwidth: float
    n_x: int
    n_y: int
    estimator: str = "biased"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MmdReport":
        return cls(float(d["mmd"]), float(d["bandwidth"]), int(d["n_x"]), int(d["n_y"]), d.get("estimator", "biased"))


def median_heuristic(X, Y, seed: int = 0) -> float:
    """Median pairwise distance over X and Y together.

    Unions larger than 2000 points are subsampled without replacement using
    the bandwidth stream of ``seed``. Returns 0 for identical points; callers
    that need a kernel reject that via :func:`mmd_rbf`.
    """
    Z = np.concatenate([_points(X), _points(Y)])
    if Z.shape[0] < 2:
        raise ValueError("median heuristic needs at least two points")
    if Z.shape[0] > MAX_HEURISTIC_POINTS:
        idx = stream(seed, BANDWIDTH).choice(Z.shape[0], MAX_HEURISTIC_POINTS, replace=False)
        Z = Z[np.sort(idx)]
    return float(np.median(pdist(Z)))


def _mean_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> float:
    K = np.exp(-gamma * cdist(A, B, "sqeuclidean"))
    # math.fsum keeps the total independent of blocking and ordering
    return math.fsum(K.ravel()) / K.size


def mmd_rbf(X, Y, bandwidth: float) -> MmdReport:
    """Biased (V-statistic) MMD with k(a, b) = exp(-|a - b|^2 / (2 bandwidth^2))."""
    A, B = _points(X), _points(Y)
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("both samples must be nonempty")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if not bandwidth > 0 or not math.isfinite(bandwidth):
        raise DegenerateBandwidth(f"kernel bandwidth must be a positive finite number, got {bandwidth}")
    gamma = 0.5 / (bandwidth * bandwidth)
    kxx = _mean_kernel(A, A, gamma)
    kyy = _mean_kernel(B, B, gamma)
    kxy = _mean_kernel(A, B, gamma)
    mmd2 = math.fsum([kxx, kyy, -2.0 * kxy])
    return MmdReport(math.sqrt(max(0.0, mmd2)), float(bandwidth), A.shape[0], B.shape[0])


@dataclass(frozen=True)
class ModeStats:
    """Nearest-center assignment: per-mode counts and coordinate-averaged variances.

    Variances use the population (1/n) normalization; a mode with no particles
    reports NaN.
    """

    counts: np.ndarray
    variances: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / max(self.n, 1)

    @property
    def imbalance(self) -> float:
        """max/min count ratio (inf when a mode is empty)."""
        lo = self.counts.min()
        return math.inf if lo == 0 else float(self.counts.max() / lo)

    def to_dict(self) -> dict:
        return {
            "counts": self.counts.tolist(),
            "variances": [None if not np.isfinite(v) else float(v) for v in self.variances],
        }


def assign_modes(X, gmm) -> np.ndarray:
    pts = _points(X)
    d2 = ((pts[:, None, :] - gmm.means[None, :, :]) ** 2).sum(axis=-1)
    return d2.argmin(axis=1)


def mode_stats(X, gmm) -> ModeStats:
    pts = np.asarray(getattr(X, "points", X), dtype=float)
    if pts.size == 0:
        return ModeStats(np.zeros(gmm.n_modes, dtype=int), np.full(gmm.n_modes, np.nan))
    labels = assign_modes(pts, gmm)
    counts = np.bincount(labels, minlength=gmm.n_modes)
    var = np.full(gmm.n_modes, np.nan)
    for i in range(gmm.n_modes):
        if counts[i]:
            var[i] = float(pts[labels == i].var(axis=0).mean())
    return ModeStats(counts, var)


def moments(X) -> dict:
    pts = _points(X)
    return {"mean": pts.mean(axis=0).tolist(), "var": pts.var(axis=0).tolist()}

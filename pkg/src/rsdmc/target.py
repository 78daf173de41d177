"""Target distributions: isotropic Gaussian mixtures and their OU-diffused laws.

The mixture doubles as the gradient oracle of the samplers (counted) and,
through :func:`analytic_score`, as a closed-form check on the recursive
score estimator (never counted).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.special import logsumexp

from .counter import GradientCounter


@runtime_checkable
class TargetDistribution(Protocol):
    """Unnormalized target p* proportional to exp(-f*).

    ``grad_log_density`` is the counted gradient oracle; ``score_batch`` is the
    same map over rows of an ``(N, d)`` array and leaves counting to the caller.
    """

    dim: int

    def log_density(self, x) -> float: ...

    def grad_log_density(self, x, counter: GradientCounter | None = None) -> np.ndarray: ...

    def score_batch(self, X: np.ndarray) -> np.ndarray: ...

    @property
    def smoothness_L(self) -> float: ...

    @property
    def second_moment_M(self) -> float: ...


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture of isotropic Gaussians: sum_i w_i N(mu_i, var_i I)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        mu = np.asarray(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(len(w), -1)
        var = np.asarray(self.variances, dtype=float).reshape(-1)
        if mu.ndim != 2 or mu.shape[0] != w.size or var.size != w.size:
            raise ValueError(
                f"inconsistent mixture shapes: weights {w.shape}, means {mu.shape}, variances {var.shape}"
            )
        if w.size == 0:
            raise ValueError("mixture needs at least one component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be a probability vector (sum={w.sum()!r})")
        if not np.all(var > 0):
            raise ValueError("component variances must be strictly positive")
        for name, arr in (("weights", w), ("means", mu), ("variances", var)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_modes(self) -> int:
        return self.weights.size

    # -- density and score ---------------------------------------------------

    def _log_components(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # diff = mu - x, shape (N, m, d)
        diff = self.means[None, :, :] - X[:, None, :]
        sq = (diff * diff).sum(axis=-1)
        with np.errstate(divide="ignore"):
            log_c = np.log(self.weights) - 0.5 * self.dim * np.log(2 * np.pi * self.variances)
        return log_c - 0.5 * sq * (1.0 / self.variances), diff

    def log_density_batch(self, X: np.ndarray) -> np.ndarray:
        X = self._check_batch(X)
        ll, _ = self._log_components(X)
        return logsumexp(ll, axis=1)

    def score_batch(self, X: np.ndarray) -> np.ndarray:
        """Row-wise grad log p*; the compiled kernel mirrors this operation order."""
        X = self._check_batch(X)
        ll, diff = self._log_components(X)
        r = np.exp(ll - ll.max(axis=1, keepdims=True))
        s = r.sum(axis=1)
        w = r * (1.0 / self.variances)
        g = (w[:, :, None] * diff).sum(axis=1)
        return g / s[:, None]

    def log_density(self, x) -> float:
        return float(gmm_log_density(self, x))

    def grad_log_density(self, x, counter: GradientCounter | None = None) -> np.ndarray:
        return gmm_grad_log_density(self, x, counter)

    def _check_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got array of shape {X.shape}")
        return X

    # -- assumption constants ------------------------------------------------

    @property
    def second_moment_M(self) -> float:
        """E||x||^2 under the mixture."""
        per = (self.means**2).sum(axis=1) + self.dim * self.variances
        return float(self.weights @ per)

    @property
    def smoothness_L(self) -> float:
        """Lipschitz constant of the score.

        The score Jacobian is Cov_r[(mu_i - x)/var_i] - E_r[1/var_i] I. With a
        shared variance the covariance term is at most diam^2/(4 var^2), which
        gives a global bound. Unequal variances have no closed form here, so the
        bound is taken over a deterministic probe cloud covering the modes.
        """
        if np.allclose(self.variances, self.variances[0], rtol=0, atol=0):
            var = self.variances[0]
            diam2 = 0.0
            if self.n_modes > 1:
                d = self.means[:, None, :] - self.means[None, :, :]
                diam2 = float((d * d).sum(-1).max())
            return float(max(1.0 / var, diam2 / (4 * var * var) - 1.0 / var))
        rng = np.random.default_rng(0)
        spread = math.sqrt(float(self.variances.max())) * 3 + 1.0
        probes = self.means[rng.integers(self.n_modes, size=4096)] + spread * rng.standard_normal((4096, self.dim))
        return float(max(1.0 / self.variances.min(), max(_spectral(score_jacobian(self, p)) for p in probes)))

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianMixture":
        missing = {"weights", "means", "variances"} - set(data)
        if missing:
            raise ValueError(f"mixture JSON is missing fields: {sorted(missing)}")
        return cls(data["weights"], data["means"], data["variances"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GaussianMixture":
        return cls.from_dict(json.loads(text))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def kernel_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(log_c, means, inv_var) as contiguous float64 arrays for the kernels."""
        with np.errstate(divide="ignore"):
            log_c = np.log(self.weights) - 0.5 * self.dim * np.log(2 * np.pi * self.variances)
        return (
            np.ascontiguousarray(log_c),
            np.ascontiguousarray(self.means),
            np.ascontiguousarray(1.0 / self.variances),
        )


def _spectral(J: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(J)).max())


def _point(gmm: GaussianMixture, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (gmm.dim,):
        raise ValueError(f"expected a point of dimension {gmm.dim}, got shape {x.shape}")
    return x


def gmm_log_density(gmm: GaussianMixture, x) -> float:
    """log sum_i w_i N(x; mu_i, var_i I) via log-sum-exp."""
    x = _point(gmm, x)
    return float(gmm.log_density_batch(x[None, :])[0])


def gmm_grad_log_density(gmm: GaussianMixture, x, counter: GradientCounter | None = None) -> np.ndarray:
    """Gradient oracle: sum_i r_i(x) (mu_i - x)/var_i. Counts one call."""
    x = _point(gmm, x)
    if counter is not None:
        counter.increment(1)
    return gmm.score_batch(x[None, :])[0]


def score_jacobian(gmm: GaussianMixture, x) -> np.ndarray:
    """Analytic Jacobian of the score (the negative Hessian of f*)."""
    x = _point(gmm, x)
    ll, diff = gmm._log_components(x[None, :])
    r = np.exp(ll[0] - ll[0].max())
    r /= r.sum()
    a = diff[0] / gmm.variances[:, None]
    mean_a = r @ a
    centered = a - mean_a
    cov = (r[:, None] * centered).T @ centered
    return cov - float(r @ (1.0 / gmm.variances)) * np.eye(gmm.dim)


def diffuse_gmm(gmm: GaussianMixture, t: float) -> GaussianMixture:
    """Law of the forward OU process at time t started from the mixture."""
    if t < 0:
        raise ValueError(f"diffusion time must be nonnegative, got {t}")
    if t == 0:
        return gmm
    shrink = math.exp(-t)
    keep = math.exp(-2.0 * t)
    return GaussianMixture(
        gmm.weights,
        shrink * gmm.means,
        keep * gmm.variances + (-math.expm1(-2.0 * t)),
    )


def analytic_score(gmm: GaussianMixture, t: float, x) -> np.ndarray:
    """grad log p_t(x) for the diffused mixture; never touches a counter."""
    x = np.asarray(x, dtype=float)
    diffused = diffuse_gmm(gmm, t)
    if x.ndim == 2:
        return diffused.score_batch(x)
    return diffused.score_batch(_point(gmm, x)[None, :])[0]


def sample_ground_truth(gmm: GaussianMixture, n: int, rng: np.random.Generator):
    """n exact i.i.d. mixture draws as a ParticleSet."""
    from .samplers import ParticleSet

    if n < 0:
        raise ValueError("sample count must be nonnegative")
    comp = rng.choice(gmm.n_modes, size=n, p=gmm.weights)
    z = rng.standard_normal((n, gmm.dim))
    pts = gmm.means[comp] + np.sqrt(gmm.variances[comp])[:, None] * z
    return ParticleSet(pts, sampler_id="ground_truth", seed=None, grad_per_particle=0)


def standard_gaussian(dim: int) -> GaussianMixture:
    return GaussianMixture([1.0], np.zeros((1, dim)), [1.0])


def ring_mixture(n_modes: int = 6, radius: float = 2.0, variance: float = 0.02, center=(2.0, 0.0)) -> GaussianMixture:
    angles = 2 * np.pi * np.arange(n_modes) / n_modes
    means = np.asarray(center, dtype=float) + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return GaussianMixture(np.full(n_modes, 1.0 / n_modes), means, np.full(n_modes, variance))


def load_mixture(path: str | Path | None = None) -> GaussianMixture:
    """Read a mixture JSON; ``None`` loads the shipped 6-mode benchmark."""
    if path is None:
        text = resources.files("rsdmc.data").joinpath("benchmark_6mode.json").read_text()
    else:
        text = Path(path).read_text()
    return GaussianMixture.from_json(text)


def benchmark_mixture() -> GaussianMixture:
    return load_mixture(None)

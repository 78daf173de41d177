"""Segmented Ornstein-Uhlenbeck machinery.

Forward kernel:  x_t | x_0 ~ N(e^{-t} x_0, (1 - e^{-2t}) I).

The auxiliary posterior q(x0 | x) over a segment start given the current
point x is proportional to p_{k,0}(x0) times that kernel, so its log-gradient
is the base score plus the quadratic tilt returned by :func:`q_score_tilt`.

Completing the square in x' for the inner-chain initializer

    exp(-||x - e^{-t} x'||^2 / (2 (1 - e^{-2t})))
      = exp(-||x' - e^{t} x||^2 / (2 (e^{2t} - 1)))

gives q'_0 = N(e^{t} x, (e^{2t} - 1) I), which is what :func:`q_init_sample`
draws from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ScheduleViolation

Variant = Literal["paper", "factor2"]
VARIANTS = ("paper", "factor2")


@dataclass(frozen=True)
class TimeIndex:
    """Outer position (segment k, reverse iteration r) inside a schedule."""

    segment: int
    reverse_iter: int

    def gap(self, S: float, eta: float) -> float:
        """Time since the segment start: S - r*eta, or S at r = 0."""
        if self.reverse_iter == 0:
            return S
        t = S - self.reverse_iter * eta
        if not 0 < t <= S:
            raise ValueError(f"reverse iteration {self.reverse_iter} falls outside the segment (t'={t})")
        return t


@dataclass(frozen=True)
class ConcavityBounds:
    mu: float
    ell: float


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def forward_kernel_params(t: float) -> tuple[float, float]:
    """(shrink, variance) = (e^{-t}, 1 - e^{-2t})."""
    t = _positive("t", t)
    return math.exp(-t), -math.expm1(-2.0 * t)


def reverse_coefficients(eta: float, variant: Variant = "paper") -> tuple[float, float, float]:
    """(state multiplier, score multiplier, noise sd) of one reverse step."""
    eta = _positive("eta", eta)
    if variant not in VARIANTS:
        raise ValueError(f"unknown drift variant {variant!r}; expected one of {VARIANTS}")
    growth = math.expm1(eta)
    factor = 2.0 if variant == "factor2" else 1.0
    return math.exp(eta), factor * growth, math.sqrt(math.expm1(2.0 * eta))


def reverse_exp_step(x, v, eta: float, rng: np.random.Generator | None, variant: Variant = "paper"):
    """One exponential-integrator step of the reverse OU process.

    ``paper`` applies e^eta x + (e^eta - 1) v + xi, ``factor2`` doubles the
    score term, which integrates the frozen drift x + 2 v exactly. ``rng=None``
    zeroes the noise. Works on single points and on ``(N, d)`` batches.
    """
    a, b, sd = reverse_coefficients(eta, variant)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape != v.shape:
        raise ValueError(f"state and score shapes differ: {x.shape} vs {v.shape}")
    out = a * x + b * v
    if rng is not None:
        out = out + sd * rng.standard_normal(x.shape)
    return out


def q_score_tilt(x_anchor, x0, t_gap: float):
    """(e^{-t} x_anchor - e^{-2t} x0) / (1 - e^{-2t})."""
    t = _positive("t_gap", t_gap)
    et, e2t = math.exp(-t), math.exp(-2.0 * t)
    inv_den = 1.0 / -math.expm1(-2.0 * t)
    return (et * np.asarray(x_anchor, dtype=float) - e2t * np.asarray(x0, dtype=float)) * inv_den


def q_init_sample(x_anchor, t_gap: float, rng: np.random.Generator | None):
    """Draw from N(e^{t} x_anchor, (e^{2t} - 1) I); ``rng=None`` returns the mean."""
    t = _positive("t_gap", t_gap)
    x_anchor = np.asarray(x_anchor, dtype=float)
    mean = math.exp(t) * x_anchor
    if rng is None:
        return mean
    return mean + math.sqrt(math.expm1(2.0 * t)) * rng.standard_normal(x_anchor.shape)


def posterior_score_term(x, x0, t_gap: float):
    """-(x - e^{-t} x0) / (1 - e^{-2t}); its posterior mean is grad log p_t(x)."""
    t = _positive("t_gap", t_gap)
    et = math.exp(-t)
    inv_den = 1.0 / -math.expm1(-2.0 * t)
    return -(np.asarray(x, dtype=float) - et * np.asarray(x0, dtype=float)) * inv_den


def segment_length_bound(L: float) -> float:
    """Largest S keeping every auxiliary posterior strongly log-concave."""
    L = _positive("L", L)
    return 0.5 * math.log((2.0 * L + 1.0) / (2.0 * L))


def concavity_bounds(t_gap: float, L: float | None = None, S: float | None = None) -> ConcavityBounds:
    """(mu_r, L_r) = (1/2, 3/2) * e^{-2t} / (1 - e^{-2t}).

    The bounds only hold for t_gap <= S = 1/2 log((2L+1)/(2L)); pass ``L`` or
    an explicit ``S`` to have that checked.
    """
    t = _positive("t_gap", t_gap)
    limit = S if S is not None else (segment_length_bound(L) if L is not None else None)
    if limit is not None and t > limit * (1 + 1e-12):
        raise ScheduleViolation(
            f"time gap {t} exceeds the segment bound {limit}; the auxiliary target is no longer strongly log-concave"
        )
    # e^{-2t}/(1 - e^{-2t}) written as 1/(e^{2t} - 1)
    ratio = 1.0 / math.expm1(2.0 * t)
    return ConcavityBounds(mu=0.5 * ratio, ell=1.5 * ratio)


def lemma_step_bound(t_gap: float) -> float:
    """mu_r / (8 L_r^2), the largest inner step with geometric KL decay."""
    b = concavity_bounds(t_gap)
    return b.mu / (8.0 * b.ell * b.ell)


def gaussian_forward_kl(mean, variance: float, t: float) -> float:
    """KL(p_t || N(0, I)) for p_0 = N(mean, variance I) pushed through the OU flow."""
    mean = np.asarray(mean, dtype=float)
    d = mean.size
    s2 = math.exp(-2.0 * t) * variance + (-math.expm1(-2.0 * t))
    m2 = math.exp(-2.0 * t) * float(mean @ mean)
    return 0.5 * (d * s2 + m2 - d - d * math.log(s2))

"""RS-DMC hyperparameters: the theoretical schedule, the experiment presets,
and a non-fatal validator for both.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Mapping

from .errors import ConfigError
from .ou import VARIANTS, lemma_step_bound, segment_length_bound

SAMPLERS = ("ula", "dmc", "rsdmc-v1", "rsdmc-v2")

# experiment presets
ULA_STEP = 2e-4
ULA_STEPS = 200
RSDMC_K = 2
RSDMC_R = 100
RSDMC_ETA = 5e-2
RSDMC_TAU = 1e-2
V2_TAIL = 10

N_LOG_TERM_CEILING = 1e6


@dataclass(frozen=True)
class TauRule:
    """Inner ULA step as a function of the time gap.

    ``constant``: tau = value.
    ``theory``:   tau = 2^-5 3^-2 e^{2t} (1 - e^{-2t})^2 eps / d, value = eps / d.
    ``lemma``:    tau = value * mu_r / (8 L_r^2), value in (0, 1].
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("constant", "theory", "lemma"):
            raise ValueError(f"unknown tau rule {self.kind!r}")
        if not self.value > 0:
            raise ValueError("tau rule needs a positive value")

    def __call__(self, t_gap: float) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "lemma":
            return self.value * lemma_step_bound(t_gap)
        one_minus = -math.expm1(-2.0 * t_gap)
        return 2.0**-5 * 3.0**-2 * math.exp(2.0 * t_gap) * one_minus * one_minus * self.value


@dataclass(frozen=True)
class ScheduleParams:
    """All time and recursion knobs of one sampler run.

    ``n``/``m`` are the inner sample and iteration counts. They are constants in
    practical schedules; theoretical schedules set ``n_coef``/``m_coef`` so the
    counts follow the tolerance passed down the recursion (and ``m`` also the
    anchor norm).
    """

    sampler: str = "rsdmc-v1"
    S: float = RSDMC_R * RSDMC_ETA
    K: int = RSDMC_K
    R: int = RSDMC_R
    eta: float = RSDMC_ETA
    tau_rule: TauRule = field(default_factory=lambda: TauRule("constant", RSDMC_TAU))
    n: int = 1
    m: int = 1
    variant: str = "paper"
    ula_tail: int = 0
    ula_tail_step: float = RSDMC_TAU
    # ULA baseline
    ula_steps: int = ULA_STEPS
    ula_step: float = ULA_STEP
    # theoretical-only
    mode: str = "practical"
    eps: float | None = None
    l: float | None = None
    l_rec: float | None = None
    log_delta: float | None = None
    n_coef: float | None = None
    m_coef: float | None = None
    n_log_term: float | None = None
    n_clamped: bool = False
    dim: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown drift variant {self.variant!r}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}; expected one of {SAMPLERS}")

    # -- per-level knobs -----------------------------------------------------

    @property
    def m_depends_on_norm(self) -> bool:
        return self.m_coef is not None

    def tolerance_at(self, depth: int) -> float | None:
        """Score tolerance handed to an RSE call ``depth`` levels below the top."""
        if self.l is None:
            return None
        return self.l * (self.l_rec / self.eps) ** depth if self.l_rec is not None else self.l

    def n_at(self, depth: int = 0) -> int:
        if self.n_coef is None:
            return self.n
        tol = self.tolerance_at(depth)
        return max(1, math.ceil(self.n_coef * tol**-2 * self.n_log_term))

    def m_at(self, depth: int = 0, anchor_norm: float | None = None) -> int:
        if self.m_coef is None:
            return self.m
        tol = self.tolerance_at(depth)
        norm_term = 1.0
        if anchor_norm is not None and anchor_norm > 0:
            norm_term = max(math.log(anchor_norm * anchor_norm), 1.0)
        return max(1, math.ceil(self.m_coef * tol**-3 * norm_term))

    def tau_at(self, t_gap: float) -> float:
        return self.tau_rule(t_gap)

    def gap(self, r: int) -> float:
        """t' for reverse iteration r (S at r = 0)."""
        return self.S if r == 0 else self.S - r * self.eta

    def step_length(self, r: int) -> float:
        """Outer step of iteration r; the last one is shortened to end at S."""
        if r == self.R - 1:
            return self.S - (self.R - 1) * self.eta
        return self.eta

    @property
    def total_outer(self) -> int:
        return self.K * self.R

    def cost_per_step(self, k: int) -> int:
        """Gradient calls of one outer step in segment k (constant n, m)."""
        c = 1
        for depth in range(k + 1):
            c *= self.n_at(depth) * self.m_at(depth)
        return c

    def snapshot(self) -> dict[str, Any]:
        d = asdict(self)
        d["tau_rule"] = {"kind": self.tau_rule.kind, "value": self.tau_rule.value}
        return d

    @classmethod
    def from_snapshot(cls, d: Mapping[str, Any]) -> "ScheduleParams":
        d = dict(d)
        d["tau_rule"] = TauRule(**d["tau_rule"])
        return cls(**d)


# -- theoretical schedule ----------------------------------------------------


def theory_constants(L: float, M: float, d: int, z_max: float = 1.0) -> dict[str, float]:
    """Epsilon-free constants used by the theoretical schedule."""
    S = segment_length_bound(L)
    C_eta = 2.0**-14 / (L * L)
    C_n = 2.0**6 * 5.0**2 / C_eta
    # floored at 1: the literal log(90 M L) + 3 M L goes negative for small M L
    C_m1 = (math.log(2.0 * M * 3.0**2 * 5.0 * L) if M > 0 else -math.inf) + M * 3.0 * L
    C_m1 = max(C_m1, 1.0)
    C_m = 2.0**9 * 3.0**2 * 5.0**3 * C_m1 * C_eta**-1.5
    C_u1 = math.log(5.0 * C_n * C_m / 1e4) + math.log(2.0 * max(math.log(z_max) if z_max > 0 else 0.0, 0.5))
    C_u2 = 70.0 / S**2 + 10.0 / S
    C_u3 = 2.0 * C_u1 / S
    return {"S": S, "C_eta": C_eta, "C_n": C_n, "C_m1": C_m1, "C_m": C_m, "C_u1": C_u1, "C_u2": C_u2, "C_u3": C_u3}


def theory_log_delta(L: float, M: float, d: int, eps: float, z_max: float = 1.0) -> float:
    """log of the per-call failure probability delta (astronomically negative)."""
    c = theory_constants(L, M, d, z_max)
    S = c["S"]
    log_a = math.log((L * d + M) / eps)
    power = 2.0 / S * log_a
    log_base = (
        math.log(c["C_eta"] * S * eps * eps / (4.0 * (d + M)))
        - 2.0 * math.log(log_a)
        + (-c["C_u2"] * log_a - c["C_u3"]) * log_a
    )
    return -power * math.log(2.0) + (power + 1.0) * log_base


def theoretical_schedule(
    L: float,
    M: float,
    d: int,
    eps: float,
    *,
    z_max: float = 1.0,
    n_log_ceiling: float = N_LOG_TERM_CEILING,
    variant: str = "paper",
) -> ScheduleParams:
    """Hyperparameters that carry the convergence guarantee.

    The max{d, -2 log delta} factor of n is capped at ``n_log_ceiling``; the
    returned schedule records whether the cap was hit.
    """
    if L < 1:
        raise ValueError(f"theoretical schedule assumes L >= 1, got {L}")
    if M < 0:
        raise ValueError(f"second moment must be nonnegative, got {M}")
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if d < 1:
        raise ValueError("dimension must be positive")
    c = theory_constants(L, M, d, z_max)
    S = c["S"]
    K = math.ceil(2.0 * math.log((L * d + M) / eps) / S)
    eta = c["C_eta"] * eps / (M + d)
    R = math.ceil(S / eta)
    log_delta = theory_log_delta(L, M, d, eps, z_max)
    raw = max(float(d), -2.0 * log_delta)
    n_term = min(raw, n_log_ceiling)
    return ScheduleParams(
        sampler="rsdmc-v1",
        S=S,
        K=K,
        R=R,
        eta=eta,
        tau_rule=TauRule("theory", eps / d),
        variant=variant,
        mode="theoretical",
        eps=eps,
        l=10.0 * eps,
        l_rec=eps / 960.0,
        log_delta=log_delta,
        n_coef=c["C_n"] * (d + M),
        m_coef=c["C_m"] * (d + M) ** 3,
        n_log_term=n_term,
        n_clamped=raw > n_log_ceiling,
        dim=d,
    )


# -- experiment presets ------------------------------------------------------

CONFIG_FIELDS = (
    "sampler", "K", "R", "eta", "tau", "n", "m", "ula_tail", "variant", "budget", "particles", "seed",
    "S", "ula_step", "steps", "ula_tail_step", "benchmark",
)


def practical_schedule(config: Mapping[str, Any]) -> ScheduleParams:
    """Benchmark experiment settings for one sampler, with overrides.

    With a ``budget`` the horizon stays fixed and the iteration count follows
    the budget: ``R = budget / (cost of one outer step)`` for the diffusion
    samplers (``eta = S / R``) and ``steps = budget`` for ULA.
    """
    unknown = set(config) - set(CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    name = config.get("sampler")
    if name not in SAMPLERS:
        raise ConfigError(f"unknown sampler {name!r}; expected one of {SAMPLERS}")
    budget = config.get("budget")
    if budget is not None and int(budget) < 1:
        raise ConfigError("budget must be a positive gradient count")

    if name == "ula":
        steps = int(budget) if budget is not None else int(config.get("steps", ULA_STEPS))
        return ScheduleParams(
            sampler="ula",
            K=0,
            R=0,
            S=0.0,
            ula_steps=steps,
            ula_step=float(config.get("ula_step", ULA_STEP)),
        )

    K = int(config.get("K", 1 if name == "dmc" else RSDMC_K))
    n = int(config.get("n", 1))
    m = int(config.get("m", 1))
    tau = float(config.get("tau", RSDMC_TAU))
    if K < 1 or n < 1 or m < 1:
        raise ConfigError("K, n and m must be positive")
    seg_default = RSDMC_R * RSDMC_ETA
    if name == "dmc":
        # one segment spanning the whole v1 horizon
        seg_default *= RSDMC_K
    if budget is not None:
        S = float(config.get("S", config["R"] * config["eta"] if "R" in config and "eta" in config else seg_default))
        per_round = sum((n * m) ** (k + 1) for k in range(K))
        R = int(budget) // per_round
        if R < 1:
            raise ConfigError(f"budget {budget} is below the cost of one pass ({per_round})")
        eta = S / R
    else:
        R = int(config.get("R", RSDMC_R * (RSDMC_K if name == "dmc" else 1)))
        eta = float(config.get("eta", RSDMC_ETA))
        S = float(config.get("S", R * eta))
        if R < 1 or eta <= 0:
            raise ConfigError("R and eta must be positive")
    tail_default = V2_TAIL if name == "rsdmc-v2" else 0
    return ScheduleParams(
        sampler=name,
        S=S,
        K=K,
        R=R,
        eta=eta,
        tau_rule=TauRule("constant", tau),
        n=n,
        m=m,
        variant=str(config.get("variant", "factor2")),
        ula_tail=int(config.get("ula_tail", tail_default)),
        ula_tail_step=float(config.get("ula_tail_step", tau)),
    )


# -- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    name: str
    lhs: float
    rhs: float
    detail: str

    @property
    def margin(self) -> float:
        """rhs - lhs; negative means the inequality lhs <= rhs failed by that much."""
        return self.rhs - self.lhs

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "detail": self.detail}


def validate(params: ScheduleParams, L: float) -> list[Violation]:
    """Check the schedule inequalities; report failures instead of raising."""
    out: list[Violation] = []
    if params.sampler == "ula":
        return out
    if not L > 0:
        out.append(Violation("L positive", 0.0, L, "smoothness constant must be positive"))
        return out
    s_max = segment_length_bound(L)
    if params.S > s_max * (1 + 1e-12):
        out.append(Violation("segment length", params.S, s_max, "S <= 1/2 log((2L+1)/(2L))"))
    if params.eta > 0.5:
        out.append(Violation("outer step", params.eta, 0.5, "eta <= 1/2"))
    horizon_gap = abs(params.R * params.eta - params.S)
    if horizon_gap >= params.eta * (1 + 1e-9):
        out.append(Violation("horizon", horizon_gap, params.eta, "|R eta - S| within one step"))

    # worst case of tau / bound over the outer grid; the bound shrinks with t'
    worst = None
    gaps = [params.gap(r) for r in range(params.R)] if params.R <= 100_000 else _sparse_gaps(params)
    for t in gaps:
        if t <= 0:
            out.append(Violation("time gap", t, 0.0, "t' > 0 on every outer iteration"))
            continue
        tau, bound = params.tau_at(t), lemma_step_bound(t)
        if worst is None or tau / bound > worst[0] / worst[1]:
            worst = (tau, bound, t)
    if worst is not None and worst[0] > worst[1] * (1 + 1e-12):
        out.append(
            Violation("inner step", worst[0], worst[1], f"tau <= mu_r/(8 L_r^2) at t'={worst[2]:.6g}")
        )
    return out


def _sparse_gaps(params: ScheduleParams) -> list[float]:
    rs = {0, 1, params.R - 1}
    rs.update(range(0, params.R, max(1, params.R // 1000)))
    return [params.gap(r) for r in sorted(rs)]


def forward_kl_bound(L: float, M: float, d: int, K: int, S: float) -> float:
    """(L d + M) exp(-K S / 2): KL between the end of the forward process and N(0, I)."""
    return (L * d + M) * math.exp(-K * S / 2.0)


def with_overrides(params: ScheduleParams, **kw) -> ScheduleParams:
    return replace(params, **kw)

"""Recursive score diffusion-based Monte Carlo with ULA and DMC baselines."""

from ._kernels import available as available_backends, default_backend
from .counter import GradientCounter
from .errors import ConfigError, DegenerateBandwidth, NumericalDivergence, RSDMCError, ScheduleViolation
from .harness import ExperimentReport, dump_particles, read_particles, run_experiment, snapshot_trajectory
from .metrics import MmdReport, ModeStats, median_heuristic, mmd_rbf, mode_stats
from .ou import (
    ConcavityBounds,
    TimeIndex,
    concavity_bounds,
    forward_kernel_params,
    q_init_sample,
    q_score_tilt,
    reverse_exp_step,
)
from .rse import ScoreEstimate, deep_score_v2, estimate_score, estimate_scores
from .samplers import ParticleSet, init_particles, run_dmc, run_rsdmc, run_sampler, run_ula
from .schedule import ScheduleParams, TauRule, practical_schedule, theoretical_schedule, validate
from .target import (
    GaussianMixture,
    TargetDistribution,
    analytic_score,
    benchmark_mixture,
    diffuse_gmm,
    gmm_grad_log_density,
    gmm_log_density,
    sample_ground_truth,
)

__version__ = "0.1.0"

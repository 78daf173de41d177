"""Experiment runner: sampler x budget x seed sweeps, particle dumps, reports.

Config files are JSON in one of two shapes.

A single run uses the schedule fields (``sampler``, ``K``, ``R``, ``eta``,
``tau``, ``n``, ``m``, ``ula_tail``, ``variant``, ``budget``, ``particles``,
``seed`` and friends), all optional except ``sampler``.

A sweep lists ``samplers``, ``budgets`` and ``seeds``, plus optional
``particles``, ``ground_truth``, ``benchmark`` (mixture JSON path) and
``overrides`` (per-sampler schedule fields).
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .counter import GradientCounter
from .errors import ConfigError, RSDMCError
from .metrics import median_heuristic, mmd_rbf, mode_stats
from .rng import GROUND_TRUTH, stream
from .samplers import ParticleSet, resolve_workers, run_sampler
from .schedule import CONFIG_FIELDS, ScheduleParams, practical_schedule, validate
from .target import GaussianMixture, load_mixture, sample_ground_truth

SCHEMA_VERSION = 1
SWEEP_FIELDS = ("samplers", "budgets", "seeds", "particles", "ground_truth", "benchmark", "overrides")
DEFAULT_PARTICLES = 1000


# -- config ------------------------------------------------------------------


def load_config(path) -> dict:
    """Parse a JSON config; syntax errors carry line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def default_config_path() -> Path:
    return Path(str(resources.files("rsdmc.data").joinpath("default_experiment.json")))


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _hash(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Sweep:
    samplers: tuple[str, ...]
    budgets: tuple[int | None, ...]
    seeds: tuple[int, ...]
    particles: int
    ground_truth: int
    benchmark: str | None
    overrides: Mapping[str, Mapping[str, Any]]

    def schedule(self, sampler: str, budget: int | None) -> ScheduleParams:
        cfg = dict(self.overrides.get(sampler, {}))
        cfg["sampler"] = sampler
        if budget is not None:
            cfg["budget"] = budget
        for key in ("particles", "seed", "benchmark"):
            cfg.pop(key, None)
        return practical_schedule(cfg)

    def to_dict(self) -> dict:
        return {
            "samplers": list(self.samplers),
            "budgets": list(self.budgets),
            "seeds": list(self.seeds),
            "particles": self.particles,
            "ground_truth": self.ground_truth,
            "benchmark": self.benchmark,
            "overrides": {k: dict(v) for k, v in self.overrides.items()},
        }


def as_sweep(config: Mapping[str, Any], seed: int | None = None) -> Sweep:
    """Normalize either config shape into a sweep; ``seed`` replaces the seed list."""
    if "samplers" in config:
        unknown = set(config) - set(SWEEP_FIELDS)
        if unknown:
            raise ConfigError(f"unknown sweep fields: {sorted(unknown)}")
        samplers = tuple(config["samplers"])
        budgets = tuple(None if b is None else int(b) for b in config.get("budgets", [None])) or (None,)
        seeds = tuple(int(s) for s in config.get("seeds", [0]))
        overrides = config.get("overrides", {})
        for name, fields in overrides.items():
            bad = set(fields) - set(CONFIG_FIELDS)
            if bad:
                raise ConfigError(f"unknown override fields for {name}: {sorted(bad)}")
    elif "sampler" in config:
        unknown = set(config) - set(CONFIG_FIELDS) - {"ground_truth"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        samplers = (config["sampler"],)
        budgets = (int(config["budget"]) if config.get("budget") is not None else None,)
        seeds = (int(config.get("seed", 0)),)
        keep = {k: v for k, v in config.items() if k not in ("sampler", "budget", "seed", "particles", "benchmark", "ground_truth")}
        overrides = {config["sampler"]: keep}
    else:
        raise ConfigError("config needs either 'sampler' (single run) or 'samplers' (sweep)")
    if seed is not None:
        seeds = (int(seed),)
    particles = int(config.get("particles", DEFAULT_PARTICLES))
    if particles < 0:
        raise ConfigError("particle count must be nonnegative")
    sweep = Sweep(
        samplers=samplers,
        budgets=budgets,
        seeds=seeds,
        particles=particles,
        ground_truth=int(config.get("ground_truth", DEFAULT_PARTICLES)),
        benchmark=config.get("benchmark"),
        overrides={k: dict(v) for k, v in overrides.items()},
    )
    # surface schedule errors before any work starts
    for s in sweep.samplers:
        for b in sweep.budgets:
            sweep.schedule(s, b)
    return sweep


def _target(sweep: Sweep, base: Path | None) -> GaussianMixture:
    if sweep.benchmark is None:
        return load_mixture(None)
    p = Path(sweep.benchmark)
    if not p.is_absolute() and base is not None:
        p = base / p
    return load_mixture(p)


# -- particle files ----------------------------------------------------------


def _meta_path(path: Path) -> Path:
    return path.with_suffix(".json")


def dump_particles(ps: ParticleSet, path) -> Path:
    """Write ``path`` (CSV, header x0..x{d-1}) and a sibling ``.json`` meta file."""
    path = Path(path)
    d = ps.points.shape[1]
    meta = {
        "sampler": ps.sampler_id,
        "seed": ps.seed,
        "budget": ps.budget,
        "grad_per_particle": ps.grad_per_particle,
        "n": ps.n,
        "dim": d,
        "schedule": ps.meta.get("schedule"),
        "meta": {k: v for k, v in ps.meta.items() if k != "schedule"},
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(d)])
            for row in ps.points:
                w.writerow(["%.17g" % v for v in row])
        _meta_path(path).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    except OSError as exc:
        raise OSError(f"failed to write particles to {path}: {exc}") from exc
    return path


def read_particles(path) -> ParticleSet:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        meta_file = _meta_path(path)
        meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    except OSError as exc:
        raise OSError(f"failed to read particles from {path}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: missing CSV header")
    d = len(rows[0])
    pts = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, d)
    extra = dict(meta.get("meta") or {})
    if meta.get("schedule") is not None:
        extra["schedule"] = meta["schedule"]
    return ParticleSet(
        pts,
        sampler_id=meta.get("sampler", "unknown"),
        seed=meta.get("seed"),
        grad_per_particle=meta.get("grad_per_particle", 0),
        meta=extra,
        budget=meta.get("budget"),
    )


# -- snapshots ---------------------------------------------------------------


def snapshot_trajectory(
    config: Mapping[str, Any],
    checkpoints: Sequence[int],
    target: GaussianMixture | None = None,
    *,
    workers: int = 1,
) -> list[ParticleSet]:
    """Particle clouds after the given gradient counts per particle, from one run."""
    sweep = as_sweep(config)
    if len(sweep.samplers) != 1:
        raise ConfigError("snapshots need a single-sampler config")
    target = target or _target(sweep, None)
    params = sweep.schedule(sweep.samplers[0], sweep.budgets[0])
    return run_sampler(
        target, params, sweep.particles, sweep.seeds[0], workers=workers, checkpoints=list(checkpoints)
    )


# -- experiment --------------------------------------------------------------


@dataclass
class ExperimentReport:
    config: dict
    config_hash: str
    benchmark_hash: str
    bandwidth: float
    cells: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c["status"] == "ok" for c in self.cells)

    def cell(self, sampler: str, budget, seed: int) -> dict:
        for c in self.cells:
            if c["sampler"] == sampler and c["budget"] == budget and c["seed"] == seed:
                return c
        raise KeyError((sampler, budget, seed))

    def mmd(self, sampler: str, budget, seed: int) -> float:
        return self.cell(sampler, budget, seed)["mmd"]["mmd"]

    def summary(self) -> dict:
        out: dict[str, dict[str, Any]] = {}
        for c in self.cells:
            if c["status"] != "ok":
                continue
            row = out.setdefault(c["sampler"], {}).setdefault(str(c["budget"]), [])
            row.append(c["mmd"]["mmd"])
        return {s: {b: {"mean": float(np.mean(v)), "values": v} for b, v in rows.items()} for s, rows in out.items()}

    def to_dict(self, *, wall_time: bool = True) -> dict:
        cells = self.cells if wall_time else [{k: v for k, v in c.items() if k != "wall_time"} for c in self.cells]
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "config_hash": self.config_hash,
            "benchmark_hash": self.benchmark_hash,
            "seeds": self.config["seeds"],
            "bandwidth": self.bandwidth,
            "cells": cells,
            "summary": self.summary(),
            "ok": self.ok,
        }

    def to_json(self, *, wall_time: bool = True) -> str:
        return json.dumps(self.to_dict(wall_time=wall_time), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported report schema {d.get('schema_version')!r}")
        return cls(d["config"], d["config_hash"], d["benchmark_hash"], d["bandwidth"], list(d["cells"]))


def _cell_name(sampler: str, budget, seed: int) -> str:
    return f"{sampler}_b{budget if budget is not None else 'default'}_s{seed}"


def run_experiment(
    config_path=None,
    *,
    config: Mapping[str, Any] | None = None,
    out_dir=None,
    seed: int | None = None,
    workers: int | None = None,
) -> ExperimentReport:
    """Run every (sampler, budget, seed) cell and score it against ground truth.

    Each seed gets its own 1000-point ground truth. One median-heuristic
    bandwidth, computed from the union of all ground-truth draws, is shared by
    every cell. A failing cell is recorded with its error and the rest still run.
    With ``out_dir`` the particles, ``report.json`` and ``manifest.json`` are
    written there.
    """
    base = None
    if config is None:
        path = Path(config_path) if config_path is not None else default_config_path()
        config = load_config(path)
        base = path.parent
    sweep = as_sweep(config, seed)
    target = _target(sweep, base)
    truths = {s: sample_ground_truth(target, sweep.ground_truth, stream(s, GROUND_TRUTH)) for s in sweep.seeds}
    pool = np.concatenate([t.points for t in truths.values()])
    bandwidth = median_heuristic(pool[: len(pool) // 2 or 1], pool[len(pool) // 2 :], seed=sweep.seeds[0])
    L = target.smoothness_L

    jobs = [(s, b, sd) for s in sweep.samplers for b in sweep.budgets for sd in sweep.seeds]

    def run_cell(job):
        sampler, budget, sd = job
        cell: dict[str, Any] = {"sampler": sampler, "budget": budget, "seed": sd}
        t0 = time.perf_counter()
        try:
            params = sweep.schedule(sampler, budget)
            cell["schedule"] = params.snapshot()
            cell["violations"] = [v.to_dict() for v in validate(params, L)]
            counter = GradientCounter()
            ps = run_sampler(target, params, sweep.particles, sd, counter)
            ps.budget = budget
            cell["grad_per_particle"] = ps.grad_per_particle
            cell["grad_total"] = counter.total
            cell["mmd"] = mmd_rbf(ps, truths[sd], bandwidth).to_dict()
            cell["mode_stats"] = mode_stats(ps, target).to_dict()
            cell["status"] = "ok"
            if out_dir is not None:
                rel = Path("particles") / f"{_cell_name(sampler, budget, sd)}.csv"
                dump_particles(ps, Path(out_dir) / rel)
                cell["particles_file"] = rel.as_posix()
        except (RSDMCError, ValueError, FloatingPointError, OSError) as exc:
            cell["status"] = "failed"
            cell["error"] = f"{type(exc).__name__}: {exc}"
        cell["wall_time"] = time.perf_counter() - t0
        return cell

    n_workers = resolve_workers(workers)
    if n_workers == 1:
        cells = [run_cell(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            cells = list(ex.map(run_cell, jobs))

    cfg = sweep.to_dict()
    report = ExperimentReport(cfg, _hash(cfg), target.fingerprint(), bandwidth, cells)
    if out_dir is not None:
        write_outputs(report, Path(out_dir), truths)
    return report


def write_outputs(report: ExperimentReport, out: Path, truths: Mapping[int, ParticleSet] | None = None) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    for sd, gt in (truths or {}).items():
        dump_particles(gt, out / "particles" / f"ground_truth_s{sd}.csv")
    (out / "report.json").write_text(report.to_json())
    write_manifest(out)
    return out / "report.json"


def write_manifest(out: Path) -> Path:
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {"schema_version": SCHEMA_VERSION, "files": files}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return path


def load_report(path) -> ExperimentReport:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    return ExperimentReport.from_dict(json.loads(path.read_text()))


def format_table(report: ExperimentReport) -> str:
    """MMD means over seeds, one row per sampler, one column per budget."""
    summary = report.summary()
    budgets = [str(b) for b in report.config["budgets"]]
    lines = ["sampler".ljust(12) + "".join(b.rjust(12) for b in budgets)]
    for sampler in report.config["samplers"]:
        row = summary.get(sampler, {})
        cells = [f"{row[b]['mean']:.4g}" if b in row else "failed" for b in budgets]
        lines.append(sampler.ljust(12) + "".join(c.rjust(12) for c in cells))
    return "\n".join(lines)

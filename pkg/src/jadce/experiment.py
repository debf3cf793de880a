"""Seeded Monte-Carlo trials and parameter sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from concurrent.futures import ProcessPoolExecutor
import csv
import logging
import math
import os
import time
from typing import IO, Iterable, Sequence

import numpy as np

from . import bussgang
from .detection import DetectionResult, MetricsRecord, detect, detection_rates, mse
from .linops import to_real, vec
from .mm_solver import SolverOptions, SolverState, estimate
from .quantizer import ScalarQuantizer, lloyd_max_design, quantize_complex
from .system_model import (PilotMatrix, RealMeasurement, Scene, SystemConfig, build_grid,
                           generate_pilots, generate_scene, synthesize)

log = logging.getLogger(__name__)

SWEEP_AXES = {"pilot_length": "T", "T": "T", "snr_db": "snr_db", "adc_bits": "adc_bits"}
METRICS = ("mse", "tpr", "fnr", "fpr")
CSV_COLUMNS = (["axis", "value"] + [f"{m}_mean" for m in METRICS] + [f"{m}_se" for m in METRICS]
               + ["trials", "seed_base"])
TRIAL_COLUMNS = ["seed", "T", "snr_db", "bits", "mse", "tpr", "fnr", "fpr", "iterations",
                 "converged", "n_active"]
WORKERS_ENV = "JADCE_WORKERS"


class TrialError(RuntimeError):
    """A single trial failed; carries the seed and the configuration."""

    def __init__(self, seed: int, cfg: SystemConfig, cause: BaseException):
        self.seed = seed
        self.cfg = cfg
        super().__init__(f"trial failed (seed={seed}): {type(cause).__name__}: {cause}")


@dataclass
class TrialRecord:
    metrics: MetricsRecord
    iterations: int
    converged: bool
    wall_time_s: float
    n_active: int
    extra: dict = field(default_factory=dict)

    def csv_row(self) -> list[str]:
        """Trial row without the wall time, so repeated runs print identical text."""
        d = self.to_dict()
        return [format_cell(d[c], none="inf" if c == "bits" else "nan") for c in TRIAL_COLUMNS]

    def to_dict(self) -> dict:
        d = self.metrics.to_dict()
        d.update(iterations=self.iterations, converged=self.converged,
                 wall_time_s=self.wall_time_s, n_active=self.n_active)
        d.update(self.extra)
        return d


@dataclass
class TrialArtifacts:
    """Intermediate objects of one trial, for debugging and tests."""

    cfg: SystemConfig
    scene: Scene
    pilots: PilotMatrix
    Y: np.ndarray
    R: np.ndarray
    meas: RealMeasurement
    quantizer: ScalarQuantizer
    model: bussgang.EffectiveLinearModel
    coeffs: bussgang.SolverCoefficients
    x_hat: np.ndarray
    state: SolverState
    detection: DetectionResult


def design_quantizer(cfg: SystemConfig, Phi, sigma_v2: float) -> ScalarQuantizer:
    """Lloyd-Max quantizer matched to the RMS pre-quantization standard deviation."""
    if cfg.adc_bits is None:
        return ScalarQuantizer.identity()
    std = bussgang.design_std(Phi, cfg.prior_component_variance, sigma_v2)
    return lloyd_max_design(cfg.adc_bits, std)


def run_pipeline(cfg: SystemConfig, seed: int, opts: SolverOptions | None = None,
                 omega2: str = "auto") -> TrialArtifacts:
    """Scene, pilots, quantized observation, Bussgang model, MAP estimate, decisions."""
    opts = SolverOptions() if opts is None else opts
    rng = np.random.default_rng(seed)
    U = build_grid(cfg.M, cfg.Mt)
    scene = generate_scene(cfg, rng, U)
    pilots = generate_pilots(cfg.N, cfg.T, rng)
    Y, meas = synthesize(cfg, scene, pilots, rng, U)
    q = design_quantizer(cfg, meas.Phi, meas.sigma_v2)
    R = quantize_complex(q, Y)
    r = to_real(vec(R))
    model = bussgang.build_effective_model(meas.Phi, q, meas.sigma_v2, cfg.prior_component_variance)
    coeffs = bussgang.precompute(model, r, omega2=omega2, majorizer=opts.majorizer)
    hyper = cfg.prior_hyper()
    x_hat, state = estimate(coeffs, r, hyper, opts)
    det = detect(x_hat, cfg.N, hyper)
    return TrialArtifacts(cfg, scene, pilots, Y, R, meas, q, model, coeffs, x_hat, state, det)


def metrics_of(art: TrialArtifacts, seed: int) -> MetricsRecord:
    tpr, fnr, fpr = detection_rates(art.detection.s_hat, art.scene.s)
    cfg = art.cfg
    return MetricsRecord(mse=mse(art.x_hat, art.meas.x_true), tpr=tpr, fnr=fnr, fpr=fpr,
                         T=cfg.T, snr_db=cfg.snr_db, bits=cfg.adc_bits, seed=seed)


def run_trial(cfg: SystemConfig, seed: int, opts: SolverOptions | None = None,
              omega2: str = "auto") -> TrialRecord:
    """One seeded trial. Any failure is re-raised as :class:`TrialError`."""
    t0 = time.perf_counter()
    try:
        art = run_pipeline(cfg, seed, opts, omega2)
    except Exception as exc:
        raise TrialError(seed, cfg, exc) from exc
    return TrialRecord(metrics=metrics_of(art, seed), iterations=art.state.iter,
                       converged=art.state.converged, wall_time_s=time.perf_counter() - t0,
                       n_active=int(art.scene.s.sum()))


@dataclass(frozen=True)
class SweepSpec:
    """One-dimensional sweep over ``axis`` with ``trials`` seeds per point.

    Trial ``i`` of every point uses seed ``seed_base + i``, so points share
    scenes up to the swept parameter.
    """

    base: SystemConfig
    axis: str
    values: tuple
    trials: int
    seed_base: int = 0

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; expected one of {sorted(SWEEP_AXES)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        object.__setattr__(self, "values", tuple(self.values))
        for v in self.values:
            self.config_at(v)

    def config_at(self, value) -> SystemConfig:
        return replace(self.base, **{SWEEP_AXES[self.axis]: value})

    def seeds(self) -> range:
        return range(self.seed_base, self.seed_base + self.trials)


def mean_se(values: Iterable[float | None]) -> tuple[float, float]:
    """Mean and standard error over the defined entries; ``nan`` if none."""
    arr = np.array([v for v in values if v is not None], dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), math.nan
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def summarize(axis: str, value, records: Sequence[MetricsRecord], seed_base: int) -> dict:
    row = {"axis": axis, "value": value}
    for m in METRICS:
        row[f"{m}_mean"], row[f"{m}_se"] = mean_se(getattr(r, m) for r in records)
    row["trials"] = len(records)
    row["seed_base"] = seed_base
    return row


def format_cell(v, none: str = "nan") -> str:
    """Stable text form with 9 significant digits; ``None`` becomes ``none``."""
    if v is None:
        return none
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)


def sweep_csv_row(row: dict) -> list[str]:
    return [format_cell(row[c], none="inf" if c == "value" else "nan") for c in CSV_COLUMNS]


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be >= 1")
    return n


def _trial_job(args):
    cfg, seed, opts = args
    return run_trial(cfg, seed, opts)


def run_sweep(spec: SweepSpec, out: IO[str] | None = None, opts: SolverOptions | None = None,
              progress=None, workers: int | None = None) -> list[dict]:
    """Run every point of ``spec``; rows are written to ``out`` as each point finishes.

    Rows already written stay valid if the run is interrupted. With
    ``workers > 1`` the trials of a point run in separate processes; results
    are reduced in seed order, so the output does not depend on ``workers``.
    """
    workers = default_workers() if workers is None else workers
    writer = None
    if out is not None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        out.flush()
    rows = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for value in spec.values:
            records = _run_point(spec, value, opts, pool, progress)
            row = summarize(spec.axis, value, records, spec.seed_base)
            rows.append(row)
            if writer is not None:
                writer.writerow(sweep_csv_row(row))
                out.flush()
            log.info("point %s=%s done: mse=%.4g", spec.axis, value, row["mse_mean"])
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    return rows


def _run_point(spec: SweepSpec, value, opts, pool, progress) -> list[MetricsRecord]:
    cfg = spec.config_at(value)
    jobs = [(cfg, seed, opts) for seed in spec.seeds()]
    results = pool.map(_trial_job, jobs) if pool is not None else map(_trial_job, jobs)
    records = []
    for (_, seed, _), rec in zip(jobs, results):
        records.append(rec.metrics)
        if progress is not None:
            progress(value, seed, rec)
    return records


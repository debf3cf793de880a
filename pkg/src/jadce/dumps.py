"""On-disk dumps of a trial's intermediate quantities for offline inspection."""

from __future__ import annotations

import csv
import json
import os
from typing import IO

import numpy as np

from .experiment import TrialArtifacts, format_cell


def save_trial_npz(path: str, art: TrialArtifacts) -> None:
    """Scene, measurement, estimate and decisions in one ``.npz`` archive."""
    q = art.quantizer
    np.savez_compressed(
        path,
        config=json.dumps(art.cfg.to_dict(), sort_keys=True),
        s=art.scene.s,
        g=art.scene.g,
        distances_km=art.scene.distances_km,
        aoas=np.asarray(art.scene.aoas),
        gains=np.asarray(art.scene.gains),
        Hbar=art.scene.Hbar,
        X=art.scene.X,
        D=art.pilots.D,
        Y=art.Y,
        R=art.R,
        y=art.meas.y,
        x_true=art.meas.x_true,
        sigma_v2=art.meas.sigma_v2,
        quantizer_thresholds=np.array([]) if q.is_identity else q.thresholds,
        quantizer_levels=np.array([]) if q.is_identity else q.levels,
        x_hat=art.x_hat,
        s_hat=art.detection.s_hat,
        llr=art.detection.llr,
        threshold=art.detection.threshold,
    )


def write_bussgang_csv(fh: IO[str], art: TrialArtifacts) -> None:
    """Per-row standard deviation, gain, residual and effective noise variance."""
    m = art.model
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["row", "sigma_y", "k", "r_nq", "sigma"])
    for i in range(m.K_diag.shape[0]):
        w.writerow([i] + [format_cell(float(v[i])) for v in (m.sigma_y, m.K_diag, m.Rnq_diag, m.Sigma_diag)])


def write_trace_csv(fh: IO[str], art: TrialArtifacts) -> None:
    """Relative iterate change per iteration, tagged with its annealing stage."""
    st = art.state
    starts = list(st.stage_starts) + [len(st.change_trace)]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["iteration", "stage", "relative_change"])
    for stage, (lo, hi) in enumerate(zip(starts[:-1], starts[1:])):
        for j in range(lo, hi):
            w.writerow([j + 1, stage, format_cell(st.change_trace[j])])


def dump_trial(directory: str, art: TrialArtifacts) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = [os.path.join(directory, n) for n in ("trial.npz", "bussgang.csv", "trace.csv")]
    save_trial_npz(paths[0], art)
    with open(paths[1], "w", newline="") as fh:
        write_bussgang_csv(fh, art)
    with open(paths[2], "w", newline="") as fh:
        write_trace_csv(fh, art)
    return paths

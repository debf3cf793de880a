"""Activity decisions, channel reconstruction and performance metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass
import math

import numpy as np

from .linops import to_complex, unvec
from .sparse_prior import PriorHyper, device_power


@dataclass
class DetectionResult:
    s_hat: np.ndarray
    llr: np.ndarray
    threshold: float


@dataclass
class MetricsRecord:
    """Per-trial metrics. Undefined detection rates are ``None``."""

    mse: float
    tpr: float | None
    fnr: float | None
    fpr: float | None
    T: int | None = None
    snr_db: float | None = None
    bits: int | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def detection_threshold(hyper: PriorHyper, M: int) -> float:
    """``log((1-q)/q) - M log(a/(pi b)) - M log(pi eps)``."""
    q, a, b, eps = hyper.q_s, hyper.a, hyper.b, hyper.epsilon
    return (math.log1p(-q) - math.log(q) - M * math.log(a / (math.pi * b))
            - M * math.log(math.pi * eps))


def activity_statistics(x_hat: np.ndarray, N: int, hyper: PriorHyper) -> np.ndarray:
    """Per-device statistic compared against :func:`detection_threshold`.

    The Student term enters with a minus sign and the inactive-branch
    quadratic with a plus sign, so that ``llr > threshold`` is exactly the
    posterior-odds test between the two mixture branches.
    """
    p = device_power(x_hat, N)
    return -(1.0 + hyper.a) * np.log1p(p / hyper.b).sum(axis=1) + p.sum(axis=1) / hyper.epsilon


def activity_log_odds(x_hat: np.ndarray, n: int, N: int, hyper: PriorHyper) -> float:
    return float(activity_statistics(x_hat, N, hyper)[n])


def detect(x_hat: np.ndarray, N: int, hyper: PriorHyper) -> DetectionResult:
    llr = activity_statistics(x_hat, N, hyper)
    M = x_hat.shape[0] // (2 * N)
    if hyper.q_s <= 0.0:
        return DetectionResult(np.zeros(N, dtype=int), llr, math.inf)
    if hyper.q_s >= 1.0:
        return DetectionResult(np.ones(N, dtype=int), llr, -math.inf)
    th = detection_threshold(hyper, M)
    return DetectionResult((llr > th).astype(int), llr, th)


def reconstruct_channels(x_hat: np.ndarray, s_hat: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Antenna-domain channel estimate ``U_R X_hat`` with rejected devices zeroed."""
    N = s_hat.shape[0]
    X = unvec(to_complex(x_hat), U.shape[1], N)
    return U @ (X * np.asarray(s_hat)[None, :])


def aggregate_matrix(x: np.ndarray, Mt: int, N: int) -> np.ndarray:
    return unvec(to_complex(x), Mt, N)


def mse(x_hat: np.ndarray, x_true: np.ndarray) -> float:
    x_hat, x_true = np.asarray(x_hat), np.asarray(x_true)
    if x_hat.shape != x_true.shape:
        raise ValueError(f"length mismatch: {x_hat.shape} vs {x_true.shape}")
    d = x_hat - x_true
    return float(d @ d) / x_hat.shape[0]


def detection_rates(s_hat, s_true):
    """``(tpr, fnr, fpr)``; a rate whose denominator is empty is ``None``."""
    s_hat = np.asarray(s_hat).astype(bool)
    s_true = np.asarray(s_true).astype(bool)
    if s_hat.shape != s_true.shape:
        raise ValueError("length mismatch")
    n_act, n_inact = int(s_true.sum()), int((~s_true).sum())
    tpr = fnr = fpr = None
    if n_act:
        tpr = float((s_hat & s_true).sum()) / n_act
        fnr = float((~s_hat & s_true).sum()) / n_act
    if n_inact:
        fpr = float((s_hat & ~s_true).sum()) / n_inact
    return tpr, fnr, fpr

"""Two-level hierarchical prior on the aggregate channel.

Each device is a two-branch mixture: inactive (every angular coefficient
``CN(0, epsilon)``) with probability ``1 - q_s`` and active (every coefficient
Student-type with Gamma(a, b) precision) with probability ``q_s``. All branch
densities are handled in log space; at ``M = 128`` the raw products underflow.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class PriorHyper:
    q_s: float
    a: float = 1e-6
    b: float = 1e-6
    epsilon: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.q_s <= 1.0:
            raise ValueError(f"q_s={self.q_s} outside [0, 1]")
        if min(self.a, self.b, self.epsilon) <= 0:
            raise ValueError("a, b and epsilon must be positive")


@dataclass
class Responsibilities:
    lam0: np.ndarray
    lam1: np.ndarray


@dataclass
class SurrogateWeights:
    Lam0_diag: np.ndarray
    Lam1_diag: np.ndarray
    W_diag: np.ndarray

    @property
    def second_order(self) -> np.ndarray:
        """Diagonal of ``Lam0 + Lam1 * W``."""
        return self.Lam0_diag + self.Lam1_diag * self.W_diag


def device_power(x: np.ndarray, N: int) -> np.ndarray:
    """Squared magnitudes ``x_i^2 + x_{i+MN}^2`` arranged as an ``N x M`` array."""
    x = np.asarray(x, dtype=float)
    half = x.shape[0] // 2
    if half % N:
        raise ValueError(f"length {x.shape[0]} is not 2*M*N for N={N}")
    return (x[:half] ** 2 + x[half:] ** 2).reshape(N, half // N)


def branch_log_densities(p: np.ndarray, hyper: PriorHyper):
    """``log P0`` and ``log P1`` per device from the ``N x M`` power array."""
    M = p.shape[1]
    a, b, eps = hyper.a, hyper.b, hyper.epsilon
    log_p0 = -M * np.log(np.pi * eps) - p.sum(axis=1) / eps
    log_p1 = M * np.log(a / (np.pi * b)) - (1.0 + a) * np.log1p(p / b).sum(axis=1)
    return log_p0, log_p1


def _log_weights(q_s: float):
    with np.errstate(divide="ignore"):
        return np.log1p(-q_s), np.log(q_s)


def log_prior_per_device(x: np.ndarray, N: int, hyper: PriorHyper) -> np.ndarray:
    log_p0, log_p1 = branch_log_densities(device_power(x, N), hyper)
    lw0, lw1 = _log_weights(hyper.q_s)
    return np.logaddexp(lw0 + log_p0, lw1 + log_p1)


def log_prior(x: np.ndarray, N: int, hyper: PriorHyper) -> float:
    return float(log_prior_per_device(x, N, hyper).sum())


def active_log_odds(x: np.ndarray, N: int, hyper: PriorHyper) -> np.ndarray:
    """``log(q_s P1) - log((1 - q_s) P0)`` per device."""
    log_p0, log_p1 = branch_log_densities(device_power(x, N), hyper)
    lw0, lw1 = _log_weights(hyper.q_s)
    with np.errstate(invalid="ignore"):
        return (lw1 + log_p1) - (lw0 + log_p0)


def responsibilities(x: np.ndarray, N: int, hyper: PriorHyper) -> Responsibilities:
    lam1 = expit(active_log_odds(x, N, hyper))
    return Responsibilities(lam0=1.0 - lam1, lam1=lam1)


def surrogate_weights(x: np.ndarray, N: int, resp: Responsibilities,
                      hyper: PriorHyper) -> SurrogateWeights:
    p = device_power(x, N)
    M = p.shape[1]
    lam0 = np.repeat(resp.lam0 / hyper.epsilon, M)
    lam1 = np.repeat((1.0 + hyper.a) * resp.lam1 / hyper.b, M)
    w = 1.0 / (p.reshape(-1) / hyper.b + 1.0)
    return SurrogateWeights(
        Lam0_diag=np.concatenate([lam0, lam0]),
        Lam1_diag=np.concatenate([lam1, lam1]),
        W_diag=np.concatenate([w, w]),
    )


def prior_surrogate(x: np.ndarray, x_ref: np.ndarray, N: int, hyper: PriorHyper) -> float:
    """Upper bound on ``-log p(x)`` that touches it at ``x_ref``.

    Jensen's inequality over the activity branch with the responsibilities at
    ``x_ref``, followed by linearizing the concave ``log(1 + p/b)`` term.
    """
    resp = responsibilities(x_ref, N, hyper)
    wts = surrogate_weights(x_ref, N, resp, hyper)
    quad = float(x @ (wts.second_order * x))
    quad_ref = float(x_ref @ (wts.second_order * x_ref))
    return quad - quad_ref - log_prior(x_ref, N, hyper)


def anneal_path(final: PriorHyper, ratio: float, stages: int) -> list[PriorHyper]:
    """Geometric path of priors ending at ``final``.

    ``epsilon`` starts ``ratio`` times larger than in ``final``; ``b`` is scaled
    along with it so that ``b / (a epsilon)``, and hence the activity
    threshold, is the same on every stage.

    Examples
    --------
    >>> path = anneal_path(PriorHyper(0.1, a=1.0, b=1e-4, epsilon=1e-4), 100.0, 3)
    >>> [round(h.epsilon / 1e-4, 6) for h in path]
    [100.0, 10.0, 1.0]
    """
    if stages < 1:
        raise ValueError("stages must be >= 1")
    if ratio < 1.0:
        raise ValueError("ratio must be >= 1")
    if stages == 1:
        return [final]
    scales = np.geomspace(ratio, 1.0, stages)
    path = [replace(final, b=float(final.b * c), epsilon=float(final.epsilon * c)) for c in scales[:-1]]
    return path + [final]

"""Bussgang linearization of the quantized observation.

``r = Q(y)`` is replaced by the second-order equivalent ``r = A x + z`` with
``A = diag(k) Phi`` and ``z ~ N(0, Sigma)``; ``k`` and the residual variance
come from the Gaussian statistics of each unquantized component ``y_i``.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy.special import ndtr

from . import linops
from .linops import DiagonalGram
from .quantizer import ScalarQuantizer, _phi

DENSE_LIMIT = 4096


@dataclass
class EffectiveLinearModel:
    Phi: object
    K_diag: np.ndarray
    Sigma_diag: np.ndarray
    Rnq_diag: np.ndarray
    sigma_y: np.ndarray
    sigma_v2: float
    N: int

    @property
    def A(self) -> np.ndarray:
        """Dense ``diag(K) Phi``; only for small problems and tests."""
        return self.K_diag[:, None] * linops.as_dense(self.Phi)

    def apply_A(self, x: np.ndarray) -> np.ndarray:
        return self.K_diag * linops.matvec(self.Phi, x)

    def apply_At(self, y: np.ndarray) -> np.ndarray:
        return linops.rmatvec(self.Phi, self.K_diag * y)


@dataclass
class SolverCoefficients:
    """Pre-computed quantities of the MM iteration.

    ``Omega2`` is a dense array, a :class:`~jadce.linops.KronGram`, or a
    :class:`~jadce.linops.DiagonalGram` when the diagonal approximation is on.
    """

    Omega2: object
    f: np.ndarray
    J: float
    J_converged: bool
    omega1_weights: np.ndarray
    model: EffectiveLinearModel
    J_diag: np.ndarray | None = None
    majorizer: str = "scalar"

    def __post_init__(self):
        if self.J_diag is None:
            self.J_diag = np.full(self.f.shape[0], self.J)

    @property
    def diagonal_approx(self) -> bool:
        return isinstance(self.Omega2, DiagonalGram)

    def omega1(self, r: np.ndarray) -> np.ndarray:
        """Apply ``A^T Sigma^{-1}``."""
        return linops.rmatvec(self.model.Phi, self.omega1_weights * r)


def output_std(Phi, prior_component_variance: float, sigma_v2: float) -> np.ndarray:
    """Per-component std of the unquantized output for ``x ~ N(0, var I)``."""
    if prior_component_variance < 0:
        raise ValueError("prior variance must be non-negative")
    rows = linops.row_sq_norms(Phi)
    return np.sqrt(prior_component_variance * rows + sigma_v2 / 2.0)


def bussgang_gain(q: ScalarQuantizer, sigma: float) -> float:
    """``E[Q(y) y] / sigma^2`` for ``y ~ N(0, sigma^2)``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if q.is_identity:
        return 1.0
    e = q.edges / sigma
    return float(np.sum(q.levels * (_phi(e[:-1]) - _phi(e[1:]))) / sigma)


def second_moment(q: ScalarQuantizer, sigma: float) -> float:
    e = q.edges / sigma
    return float(np.sum(q.levels**2 * (ndtr(e[1:]) - ndtr(e[:-1]))))


def residual_variance(q: ScalarQuantizer, sigma: float) -> float:
    """Variance of the Bussgang distortion ``Q(y) - k y``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if q.is_identity:
        return 0.0
    k = bussgang_gain(q, sigma)
    return max(second_moment(q, sigma) - k * k * sigma * sigma, 0.0)


def build_effective_model(Phi, q: ScalarQuantizer, sigma_v2: float, prior_var: float,
                          N: int | None = None) -> EffectiveLinearModel:
    """Bussgang model with per-component gain and residual variance.

    ``N`` (device count) is read from a structured ``Phi`` and must be given
    for a dense one.
    """
    if N is None:
        if not hasattr(Phi, "B"):
            raise ValueError("N is required when Phi is a dense matrix")
        N = Phi.B.shape[1]
    sigma_y = output_std(Phi, prior_var, sigma_v2)
    uniq, inverse = np.unique(sigma_y, return_inverse=True)
    k = np.array([bussgang_gain(q, s) for s in uniq])[inverse]
    rnq = np.array([residual_variance(q, s) for s in uniq])[inverse]
    Sigma = 0.5 * sigma_v2 * k**2 + rnq
    return EffectiveLinearModel(Phi=Phi, K_diag=k, Sigma_diag=Sigma, Rnq_diag=rnq,
                                sigma_y=sigma_y, sigma_v2=sigma_v2, N=int(N))


def design_std(Phi, prior_var: float, sigma_v2: float) -> float:
    """Single input std for the shared quantizer (RMS over components)."""
    sy = output_std(Phi, prior_var, sigma_v2)
    return float(math.sqrt(np.mean(sy**2)))


def precompute(model: EffectiveLinearModel, r_obs: np.ndarray, omega2: str = "auto",
               majorizer: str = "scalar", power_tol: float = 1e-8,
               power_max_iter: int = 1000) -> SolverCoefficients:
    """Coefficients ``Omega2 = A^T Sigma^{-1} A``, ``f = A^T Sigma^{-1} r`` and ``J``.

    ``omega2`` selects the storage of ``Omega2``: ``"exact"`` keeps the exact
    operator (structured when the model allows it, dense otherwise),
    ``"diagonal"`` keeps only its diagonal, and ``"auto"`` is ``"exact"`` unless
    the exact operator would be a dense matrix larger than ``DENSE_LIMIT``.
    """
    if np.any(model.Sigma_diag <= 0):
        raise ValueError("Sigma must be positive definite")
    w1 = model.K_diag / model.Sigma_diag
    w2 = model.K_diag * w1
    n = model.Phi.shape[1]
    if omega2 == "diagonal" or (omega2 == "auto" and _needs_dense(model.Phi, w2) and n > DENSE_LIMIT):
        Om2 = DiagonalGram(linops.gram_diagonal(model.Phi, w2))
    elif omega2 in ("auto", "exact"):
        Om2 = linops.weighted_gram(model.Phi, w2)
    else:
        raise ValueError(f"unknown omega2 mode {omega2!r}")
    f = linops.rmatvec(model.Phi, w1 * r_obs)
    J, ok = _majorizing_scale(Om2, power_tol, power_max_iter)
    J_diag = None
    if majorizer == "jacobi":
        d = Om2.diagonal()
        d = np.maximum(d, 1e-300 + 1e-12 * d.max())
        c, ok_c = _majorizing_scale(linops.SymmetricScaled(Om2, 1.0 / np.sqrt(d)), power_tol,
                                    power_max_iter, fallback=None)
        if not ok_c:
            # no cheap certified bound for the scaled matrix; use the scalar one
            J_diag = np.full(d.shape[0], J)
        else:
            J_diag = c * d
    elif majorizer != "scalar":
        raise ValueError(f"unknown majorizer {majorizer!r}")
    return SolverCoefficients(Omega2=Om2, f=f, J=float(J), J_converged=ok, omega1_weights=w1,
                              model=model, J_diag=J_diag, majorizer=majorizer)


def _majorizing_scale(op, tol, max_iter, fallback="rowsum"):
    lam, _, ok = linops.power_iteration(op, tol=tol, max_iter=max_iter)
    if ok:
        return float(lam * (1.0 + 1e-6)), True
    if fallback is None:
        return float("nan"), False
    bound = linops.abs_row_sum_bound(op)
    warnings.warn(f"power iteration did not converge; using row-sum bound {bound:.6g}")
    return float(bound), False


def _needs_dense(Phi, w) -> bool:
    if isinstance(Phi, np.ndarray):
        return True
    half = w.shape[0] // 2
    return np.ptp(w[:half]) > 1e-13 * np.max(np.abs(w[:half])) or not np.array_equal(w[:half], w[half:])

"""Scalar quantizers and the Lloyd-Max design for Gaussian inputs."""

from __future__ import annotations

from dataclasses import dataclass
import json
import math

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import ndtr
from scipy.stats import norm

MAX_LLOYD_ITERATIONS = 10_000


class QuantizerDesignError(RuntimeError):
    pass


def _phi(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ScalarQuantizer:
    """Maps ``v`` in ``(thresholds[l-1], thresholds[l]]`` to ``levels[l]``.

    ``bits is None`` denotes the identity (infinite-resolution) quantizer, which
    has no thresholds or levels.
    """

    bits: int | None
    thresholds: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.thresholds, dtype=float)
        lv = np.asarray(self.levels, dtype=float)
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "levels", lv)
        if self.bits is None:
            return
        if lv.shape != (2**self.bits,) or th.shape != (2**self.bits - 1,):
            raise ValueError("a B-bit quantizer needs 2^B levels and 2^B - 1 thresholds")
        if np.any(np.diff(th) <= 0) or np.any(np.diff(lv) <= 0):
            raise ValueError("thresholds and levels must be strictly increasing")

    @classmethod
    def identity(cls) -> "ScalarQuantizer":
        return cls(bits=None, thresholds=np.empty(0), levels=np.empty(0))

    @property
    def is_identity(self) -> bool:
        return self.bits is None

    @property
    def edges(self) -> np.ndarray:
        """Thresholds padded with -inf and +inf."""
        return np.concatenate([[-np.inf], self.thresholds, [np.inf]])

    def __call__(self, v):
        return quantize_scalar(self, v)

    def to_dict(self) -> dict:
        return {
            "bits": self.bits,
            "thresholds": self.thresholds.tolist(),
            "levels": self.levels.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ScalarQuantizer":
        return cls(bits=d["bits"], thresholds=np.array(d["thresholds"]), levels=np.array(d["levels"]))


def quantize_scalar(q: ScalarQuantizer, v):
    """Quantize real input(s); works elementwise on arrays."""
    if q.is_identity:
        return np.asarray(v, dtype=float) if np.ndim(v) else float(v)
    # side="left" counts thresholds strictly below v, so v == alpha_l lands in cell l
    idx = np.searchsorted(q.thresholds, v, side="left")
    out = q.levels[idx]
    return out if np.ndim(v) else float(out)


def quantize_complex(q: ScalarQuantizer, Y: np.ndarray) -> np.ndarray:
    Y = np.asarray(Y)
    if q.is_identity:
        return Y.astype(complex)
    return quantize_scalar(q, Y.real) + 1j * quantize_scalar(q, Y.imag)


def _centroids(t: np.ndarray) -> np.ndarray:
    """Conditional means of N(0,1) on the positive cells ``(t[l], t[l+1]]``."""
    lo, hi = t[:-1], t[1:]
    mass = ndtr(-lo) - ndtr(-hi)
    return (_phi(lo) - _phi(hi)) / mass


def _lloyd_step(t: np.ndarray) -> np.ndarray:
    levels = _centroids(t)
    t = t.copy()
    t[1:-1] = 0.5 * (levels[:-1] + levels[1:])
    return t


def _newton_refine(t: np.ndarray, iters: int = 50) -> np.ndarray:
    """Newton's method on ``t_i = (c_{i-1} + c_i) / 2`` for the interior thresholds."""
    t = t.copy()
    for _ in range(iters):
        lo, hi = t[:-1], t[1:]
        mass = ndtr(-lo) - ndtr(-hi)
        c = (_phi(lo) - _phi(hi)) / mass
        dlo = _phi(lo) * (c - lo) / mass
        hi_f = np.where(np.isfinite(hi), hi, 0.0)
        dhi = np.where(np.isfinite(hi), _phi(hi_f) * (hi_f - c) / mass, 0.0)
        F = t[1:-1] - 0.5 * (c[:-1] + c[1:])
        if F.size == 0:
            break
        diag = 1.0 - 0.5 * (dhi[:-1] + dlo[1:])
        lower = -0.5 * dlo[1:-1]  # dF_i / dt_{i-1}
        upper = -0.5 * dhi[1:-1]  # dF_i / dt_{i+1}
        ab = np.zeros((3, F.size))
        ab[0, 1:] = upper
        ab[1] = diag
        ab[2, :-1] = lower
        step = solve_banded((1, 1), ab, F)
        new = t[1:-1] - step
        if np.any(np.diff(np.concatenate([[0.0], new])) <= 0):
            break
        t[1:-1] = new
        if np.max(np.abs(step)) <= 1e-15 * max(1.0, np.max(np.abs(new))):
            break
    return t


def lloyd_max_design(bits: int, input_std: float = 1.0, tol: float = 1e-10,
                     max_iter: int = MAX_LLOYD_ITERATIONS) -> ScalarQuantizer:
    """Minimum-MSE quantizer for ``N(0, input_std^2)`` by Lloyd iteration.

    The design is symmetric, so only the positive half is iterated. It is
    seeded from the quantiles of ``N(0, 3)``, the asymptotically optimal point
    density. Plain centroid/boundary alternation converges slowly beyond about
    six bits, so after a warm-up it is polished by Newton steps on the same
    fixed-point equations; convergence is always certified with the Lloyd map.

    Raises
    ------
    QuantizerDesignError
        If the relative level change is still above ``tol`` after ``max_iter``
        iterations.
    """
    if not 1 <= bits <= 12:
        raise ValueError(f"bits={bits} outside 1..12")
    if input_std <= 0:
        raise ValueError("input_std must be positive")
    half = 2 ** (bits - 1)
    probs = 0.5 + 0.5 * np.arange(half + 1) / half
    t = norm.ppf(probs, scale=math.sqrt(3.0))
    t[0], t[-1] = 0.0, np.inf
    levels = _centroids(t)
    change = np.inf
    for it in range(max_iter):
        if it == 200:
            t = _newton_refine(t)
            levels = _centroids(t)
        t = _lloyd_step(t)
        new = _centroids(t)
        change = np.max(np.abs(new - levels) / np.abs(new))
        levels = new
        if change <= tol:
            break
    else:
        raise QuantizerDesignError(
            f"Lloyd-Max ({bits} bits) did not converge in {max_iter} iterations "
            f"(last relative change {change:.3e})"
        )
    t[1:-1] = 0.5 * (levels[:-1] + levels[1:])
    pos_th = t[1:-1]
    thresholds = np.concatenate([-pos_th[::-1], [0.0], pos_th]) * input_std
    lv = np.concatenate([-levels[::-1], levels]) * input_std
    return ScalarQuantizer(bits=bits, thresholds=thresholds, levels=lv)


def uniform_design(bits: int, step: float) -> ScalarQuantizer:
    """Mid-rise uniform quantizer; used in tests as a non-optimal reference."""
    L = 2**bits
    levels = (np.arange(L) - (L - 1) / 2.0) * step
    thresholds = 0.5 * (levels[:-1] + levels[1:])
    return ScalarQuantizer(bits=bits, thresholds=thresholds, levels=levels)


def sign_quantizer() -> ScalarQuantizer:
    """1-bit quantizer with levels +-1."""
    return ScalarQuantizer(bits=1, thresholds=np.array([0.0]), levels=np.array([-1.0, 1.0]))


def quantization_mse(q: ScalarQuantizer, sigma: float = 1.0) -> float:
    """``E[(Q(y) - y)^2]`` for ``y ~ N(0, sigma^2)`` in closed form."""
    if q.is_identity:
        return 0.0
    e = q.edges / sigma
    mass = ndtr(e[1:]) - ndtr(e[:-1])
    first = sigma * (_phi(e[:-1]) - _phi(e[1:]))
    # E[y^2 1_cell] = sigma^2 (mass + a phi(a) - b phi(b)), with x phi(x) -> 0 at +-inf
    def xphi(x):
        return np.where(np.isfinite(x), x * _phi(np.where(np.isfinite(x), x, 0.0)), 0.0)

    second = sigma**2 * (mass + xphi(e[:-1]) - xphi(e[1:]))
    lv = q.levels
    return float(np.sum(lv**2 * mass - 2 * lv * first + second))

"""Majorization-minimization solver for the Bussgang MAP problem.

Each iteration refreshes the activity responsibilities and the Student-term
weights at the current iterate and then minimizes a separable quadratic
surrogate in closed form::

    x_next = ((J - Omega2) x + f) / (J + 2 Lam0 + 2 Lam1 * W)

The data term is majorized with ``J I >= Omega2``; the prior with Jensen's
inequality over the two activity branches plus a tangent bound on the
concave log term.

:func:`solve` runs the iteration for one fixed prior. :func:`estimate` runs
it along a path of priors whose inactive-branch variance shrinks to the
target value, warm-starting each stage from the previous one. Starting
directly from ``x = 0`` with a narrow inactive branch leaves weak devices in
the basin of the all-zero point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import warnings

import numpy as np

from .bussgang import EffectiveLinearModel, SolverCoefficients
from .sparse_prior import (PriorHyper, SurrogateWeights, anneal_path, log_prior,
                           responsibilities, surrogate_weights)

log = logging.getLogger(__name__)


class ObjectiveIncreaseWarning(RuntimeWarning):
    """The objective went up by more than the tolerance; ``J`` is likely too small."""


@dataclass
class SolverOptions:
    """Iteration controls.

    ``max_iters`` and ``tol_rel`` apply per stage. ``anneal_stages = 1`` runs
    the plain iteration at the target prior; ``anneal_ratio`` is the ratio
    of the first-stage to the final inactive-branch variance. ``majorizer``
    selects ``J I`` (``"scalar"``) or a scaled diagonal (``"jacobi"``).
    """

    max_iters: int = 500
    tol_rel: float = 1e-6
    objective_check: bool = False
    increase_tol: float = 1e-6
    anneal_stages: int = 8
    anneal_ratio: float = 3000.0
    majorizer: str = "jacobi"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol_rel <= 0:
            raise ValueError("tol_rel must be positive")
        if self.anneal_stages < 1:
            raise ValueError("anneal_stages must be >= 1")
        if self.anneal_ratio < 1.0:
            raise ValueError("anneal_ratio must be >= 1")
        if self.majorizer not in ("scalar", "jacobi"):
            raise ValueError(f"unknown majorizer {self.majorizer!r}")


@dataclass
class SolverState:
    x: np.ndarray
    iter: int = 0
    obj_trace: list = field(default_factory=list)
    change_trace: list = field(default_factory=list)
    converged: bool = False
    weights: SurrogateWeights | None = None
    diagnostics: list = field(default_factory=list)
    stage_starts: list = field(default_factory=list)
    stage_obj_traces: list = field(default_factory=list)


def data_misfit(x: np.ndarray, model: EffectiveLinearModel, r_obs: np.ndarray) -> float:
    res = r_obs - model.apply_A(x)
    return 0.5 * float(res @ (res / model.Sigma_diag))


def objective(x: np.ndarray, coeffs: SolverCoefficients, r_obs: np.ndarray,
              hyper: PriorHyper) -> float:
    """Negative log-posterior without the ``log det Sigma`` constant.

    With the diagonal approximation the data term is evaluated through the
    approximate ``Omega2`` so that it stays consistent with the iteration.
    """
    N = coeffs.model.N
    if coeffs.diagonal_approx:
        const = 0.5 * float(r_obs @ (r_obs / coeffs.model.Sigma_diag))
        data = 0.5 * float(x @ (coeffs.Omega2 @ x)) - float(coeffs.f @ x) + const
    else:
        data = data_misfit(x, coeffs.model, r_obs)
    return data - log_prior(x, N, hyper)


def mm_step(x: np.ndarray, coeffs: SolverCoefficients, hyper: PriorHyper):
    """One MM update; returns ``(x_next, weights)``."""
    N = coeffs.model.N
    resp = responsibilities(x, N, hyper)
    wts = surrogate_weights(x, N, resp, hyper)
    numer = coeffs.J_diag * x - coeffs.Omega2 @ x + coeffs.f
    denom = coeffs.J_diag + 2.0 * wts.second_order
    return numer / denom, wts


def solve(coeffs: SolverCoefficients, r_obs: np.ndarray, hyper: PriorHyper,
          opts: SolverOptions | None = None, x0: np.ndarray | None = None):
    """Run the MM iteration from ``x0`` (zero by default).

    Returns
    -------
    (x_hat, SolverState)
    """
    opts = SolverOptions() if opts is None else opts
    n = coeffs.f.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    state = SolverState(x=x)
    if opts.objective_check:
        state.obj_trace.append(objective(x, coeffs, r_obs, hyper))
    for j in range(opts.max_iters):
        x_new, state.weights = mm_step(x, coeffs, hyper)
        if not np.all(np.isfinite(x_new)):
            raise FloatingPointError(f"non-finite iterate at iteration {j + 1}")
        change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), 1e-12)
        state.change_trace.append(float(change))
        x = x_new
        state.iter = j + 1
        if opts.objective_check:
            obj = objective(x, coeffs, r_obs, hyper)
            prev = state.obj_trace[-1]
            if obj - prev > opts.increase_tol * abs(prev):
                msg = f"objective increased at iteration {j + 1}: {prev:.12g} -> {obj:.12g} (delta {obj - prev:.3g})"
                state.diagnostics.append(msg)
                warnings.warn(msg, ObjectiveIncreaseWarning)
            state.obj_trace.append(obj)
        if change <= opts.tol_rel:
            state.converged = True
            break
    state.x = x
    log.debug("MM stopped after %d iterations (converged=%s)", state.iter, state.converged)
    return x, state


def estimate(coeffs: SolverCoefficients, r_obs: np.ndarray, hyper: PriorHyper,
             opts: SolverOptions | None = None):
    """MAP estimate at ``hyper`` via the annealed sequence of MM runs.

    The returned state concatenates the per-stage change traces;
    ``stage_starts`` holds the index into ``change_trace`` where each stage
    begins. With ``objective_check`` on, ``stage_obj_traces`` holds one trace
    per stage, each starting with the stage objective at the warm start.
    """
    opts = SolverOptions() if opts is None else opts
    x = None
    total = SolverState(x=np.zeros(coeffs.f.shape[0]))
    for h in anneal_path(hyper, opts.anneal_ratio, opts.anneal_stages):
        total.stage_starts.append(len(total.change_trace))
        x, st = solve(coeffs, r_obs, h, opts, x0=x)
        total.iter += st.iter
        total.obj_trace.extend(st.obj_trace)
        if opts.objective_check:
            total.stage_obj_traces.append(list(st.obj_trace))
        total.change_trace.extend(st.change_trace)
        total.diagnostics.extend(st.diagnostics)
        total.converged = st.converged
        total.weights = st.weights
    total.x = x
    return x, total


def surrogate_value(x: np.ndarray, x_ref: np.ndarray, coeffs: SolverCoefficients,
                    r_obs: np.ndarray, hyper: PriorHyper) -> float:
    """Full surrogate at ``x`` built around ``x_ref``, including the constants.

    Equals :func:`objective` at ``x = x_ref`` and upper-bounds it elsewhere.
    """
    N = coeffs.model.N
    resp = responsibilities(x_ref, N, hyper)
    wts = surrogate_weights(x_ref, N, resp, hyper)
    J, Om2, f = coeffs.J_diag, coeffs.Omega2, coeffs.f
    quad = 0.5 * float(x @ (J * x)) - float(x @ (J * x_ref - Om2 @ x_ref)) - float(x @ f)
    quad_ref = 0.5 * float(x_ref @ (J * x_ref)) - float(x_ref @ (J * x_ref - Om2 @ x_ref)) - float(x_ref @ f)
    prior = float(x @ (wts.second_order * x)) - float(x_ref @ (wts.second_order * x_ref))
    return quad - quad_ref + prior + objective(x_ref, coeffs, r_obs, hyper)


def majorize_quadratic_check(Omega: np.ndarray, Omega_tilde: np.ndarray, x: np.ndarray,
                             x0: np.ndarray, tol: float = 0.0) -> bool:
    """Check ``x'Om x <= x'Omt x - 2 x'(Omt - Om) x0 + x0'(Omt - Om) x0``."""
    return majorization_slack(Omega, Omega_tilde, x, x0) >= -tol


def majorization_slack(Omega, Omega_tilde, x, x0) -> float:
    D = Omega_tilde - Omega
    bound = x @ Omega_tilde @ x - 2.0 * x @ D @ x0 + x0 @ D @ x0
    return float(bound - x @ Omega @ x)

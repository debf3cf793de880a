"""Acceptance checks shared by the test suite and the ``selftest`` command.

Each check returns a :class:`CheckResult`; a check passes only if its
numerical condition holds and it finished within its time budget.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import contextlib
import io
import math
import os
import tempfile
import time
from typing import Callable

import numpy as np

from .bussgang import bussgang_gain, residual_variance
from .detection import detect, detection_rates, mse
from .experiment import SweepSpec, run_pipeline, run_sweep
from .mm_solver import SolverOptions, majorization_slack
from .quantizer import lloyd_max_design, quantize_scalar, sign_quantizer
from .sparse_prior import PriorHyper, log_prior_per_device
from .system_model import SystemConfig


@dataclass
class CheckResult:
    key: str
    title: str
    passed: bool
    detail: str
    seconds: float
    budget_s: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.key} {self.title}: {self.detail} ({self.seconds:.1f}s / {self.budget_s:g}s)"


def _timed(key: str, title: str, budget_s: float, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    dt = time.perf_counter() - t0
    if dt > budget_s:
        detail += "; over time budget"
    return CheckResult(key, title, bool(ok) and dt <= budget_s, detail, dt, budget_s)


# descent --------------------------------------------------------------------

def _descent(instances: int = 100) -> tuple[bool, str]:
    cfg = SystemConfig(N=40, M=16, T=32, q_s=0.1, adc_bits=2, snr_db=10.0)
    opts = SolverOptions(objective_check=True)
    worst = -math.inf
    n_iter = 0
    for seed in range(instances):
        art = run_pipeline(cfg, seed, opts)
        for trace in art.state.stage_obj_traces:
            f = np.asarray(trace)
            rel = (f[1:] - f[:-1]) / np.abs(f[:-1])
            n_iter += rel.size
            if rel.size:
                worst = max(worst, float(rel.max()))
    ok = worst <= 1e-9
    return ok, f"{instances} instances, {n_iter} iterations, worst relative increase {worst:.3g}"


def check_descent() -> CheckResult:
    return _timed("C1", "MM descent", 120.0, _descent)


# majorizer property ------------------------------------------------------------

def _lemma(count: int = 1000, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(count):
        G = rng.standard_normal((6, 6))
        Om = G @ G.T
        Omt = np.linalg.eigvalsh(Om)[-1] * np.eye(6)
        x, x0 = rng.standard_normal(6), rng.standard_normal(6)
        worst = min(worst, majorization_slack(Om, Omt, x, x0))
    return worst >= -1e-10, f"{count} draws, minimum slack {worst:.3g}"


def check_majorizer() -> CheckResult:
    return _timed("C2", "Majorizer inequality", 5.0, _lemma)


# Bussgang Monte Carlo ------------------------------------------------------------

def _bussgang_mc(samples: int = 10**7, seed: int = 0, chunk: int = 2 * 10**6) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for bits in (1, 2, 3):
        for sigma in (0.5, 1.0, 2.0):
            q = lloyd_max_design(bits, sigma)
            k = bussgang_gain(q, sigma)
            r = residual_variance(q, sigma)
            s1 = s2 = t1 = t2 = 0.0
            done = 0
            while done < samples:
                n = min(chunk, samples - done)
                y = sigma * rng.standard_normal(n)
                qy = quantize_scalar(q, y)
                g = qy * y / sigma**2
                e = (qy - k * y) ** 2
                s1 += g.sum(); s2 += (g * g).sum()
                t1 += e.sum(); t2 += (e * e).sum()
                done += n
            k_mc, r_mc = s1 / samples, t1 / samples
            k_se = math.sqrt(max(s2 / samples - k_mc**2, 0.0) / samples)
            r_se = math.sqrt(max(t2 / samples - r_mc**2, 0.0) / samples)
            worst = max(worst, abs(k_mc - k) / k_se, abs(r_mc - r) / r_se)
    one = sign_quantizer()
    k1, r1 = bussgang_gain(one, 1.0), residual_variance(one, 1.0)
    closed = abs(k1 - math.sqrt(2 / math.pi)) <= 1e-3 and abs(r1 - (1 - 2 / math.pi)) <= 1e-3
    ok = worst <= 3.0 and closed
    return ok, (f"largest deviation {worst:.2f} SE over 9 designs; one-bit k={k1:.6f}, "
                f"r_nq={r1:.6f}")


def check_bussgang() -> CheckResult:
    return _timed("C3", "Bussgang oracle", 60.0, _bussgang_mc)


# Lloyd-Max --------------------------------------------------------------------

def _lloyd() -> tuple[bool, str]:
    q = lloyd_max_design(2, 1.0)
    t_ref = np.array([-0.9816, 0.0, 0.9816])
    l_ref = np.array([-1.5104, -0.4528, 0.4528, 1.5104])
    err = max(np.abs(q.thresholds - t_ref).max(), np.abs(q.levels - l_ref).max())
    return err <= 1e-3, f"max deviation {err:.2e}"


def check_lloyd_max() -> CheckResult:
    return _timed("C4", "Lloyd-Max two-bit design", 1.0, _lloyd)


# detector oracle ------------------------------------------------------------------

def brute_force_activity(xr: np.ndarray, xi: np.ndarray, hyper: PriorHyper) -> int:
    """Posterior-odds decision from the two branch densities, element by element."""
    a, b, eps, q = hyper.a, hyper.b, hyper.epsilon, hyper.q_s
    log0 = [math.log(1.0 - q)]
    log1 = [math.log(q)]
    for u, v in zip(xr.tolist(), xi.tolist()):
        p = u * u + v * v
        log0.append(-math.log(math.pi * eps) - p / eps)
        log1.append(math.log(a) - math.log(math.pi * b) - (1.0 + a) * math.log1p(p / b))
    return int(math.fsum(log1) > math.fsum(log0))


def _detector(count: int = 10**4, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    hypers = [SystemConfig(M=32).prior_hyper(), PriorHyper(q_s=0.1, a=1e-6, b=1e-6, epsilon=1e-8 / 256)]
    dims = (1, 4, 128)
    mismatches = 0
    for i in range(count):
        M = dims[i % 3]
        hyper = hypers[(i // 3) % 2]
        # magnitudes spread log-uniformly across the decision boundary
        scale = math.sqrt(hyper.epsilon) * 10.0 ** rng.uniform(-1.0, 3.0)
        x = scale * rng.standard_normal(2 * M) * (rng.random(2 * M) < rng.uniform(0.05, 1.0))
        s_hat = int(detect(x, 1, hyper).s_hat[0])
        mismatches += s_hat != brute_force_activity(x[:M], x[M:], hyper)
    return mismatches == 0, f"{count} inputs, {mismatches} disagreements"


def check_detector() -> CheckResult:
    return _timed("C5", "Detector oracle", 30.0, _detector)


# recovery ----------------------------------------------------------------------

RECOVERY_CONFIG = SystemConfig(N=20, M=16, T=64, snr_db=30.0, adc_bits=None, N_c=1, on_grid=True)


def _recovery(trials: int = 50, seed_base: int = 0) -> tuple[bool, str]:
    cfg = RECOVERY_CONFIG
    errs, powers, tprs, fprs = [], [], [], []
    for seed in range(seed_base, seed_base + trials):
        art = run_pipeline(cfg, seed)
        errs.append(mse(art.x_hat, art.meas.x_true))
        act = art.scene.s.astype(bool)
        if act.any():
            comp = art.meas.x_true.reshape(2, cfg.N, cfg.Mt)[:, act]
            powers.append(float(np.mean(comp**2)))
        tpr, _, fpr = detection_rates(art.detection.s_hat, art.scene.s)
        if tpr is not None:
            tprs.append(tpr)
        if fpr is not None:
            fprs.append(fpr)
    ratio = float(np.mean(errs) / np.mean(powers))
    missed = sum(t < 1.0 for t in tprs)
    false = sum(f > 0.0 for f in fprs)
    ok = ratio <= 1e-3 and missed == 0 and false == 0
    return ok, (f"MSE / signal power {ratio:.3g} (limit 1e-3); mean TPR {np.mean(tprs):.4f} with "
                f"{missed} trials missing a device; mean FPR {np.mean(fprs):.4f}")


def check_recovery() -> CheckResult:
    return _timed("C6", "Well-posed recovery", 120.0, _recovery)


# trends ------------------------------------------------------------------------

def _trend(trials: int = 50) -> tuple[bool, str]:
    base = SystemConfig(N=50, M=32, adc_bits=3)
    pil = run_sweep(SweepSpec(replace(base, snr_db=10.0), "pilot_length", (40, 70, 100), trials))
    m_t = [r["mse_mean"] for r in pil]
    hi = run_sweep(SweepSpec(replace(base, snr_db=15.0), "adc_bits", (3, 1), trials))
    lo = run_sweep(SweepSpec(replace(base, snr_db=-5.0), "adc_bits", (3, 1), trials))
    m_hi = [r["mse_mean"] for r in hi]
    m_lo = [r["mse_mean"] for r in lo]
    ok_a = m_t[0] > m_t[1] > m_t[2]
    ok_b = m_hi[0] < m_hi[1] and max(m_lo) < 2.0 * min(m_lo)
    detail = (f"MSE over T=40,70,100: {', '.join(f'{v:.4g}' for v in m_t)}; "
              f"15 dB B=3 {m_hi[0]:.4g} vs B=1 {m_hi[1]:.4g}; "
              f"-5 dB B=3 {m_lo[0]:.4g} vs B=1 {m_lo[1]:.4g}")
    return ok_a and ok_b, detail


def check_trends() -> CheckResult:
    return _timed("C7", "Trend reproduction", 1200.0, _trend)


# determinism -------------------------------------------------------------------

def _determinism() -> tuple[bool, str]:
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for k in range(2):
            path = os.path.join(tmp, f"run{k}.csv")
            args = ["sweep", "--axis", "snr_db", "--values", "0,10", "--trials", "3",
                    "--set", "N=20", "--set", "M=16", "--out", path]
            with contextlib.redirect_stderr(io.StringIO()):
                code = main(args)
            if code != 0:
                return False, f"sweep exited with {code}"
            with open(path, "rb") as fh:
                outs.append(fh.read())
    same = outs[0] == outs[1]
    return same, f"{len(outs[0])} bytes, identical={same}"


def check_determinism() -> CheckResult:
    return _timed("C8", "Sweep determinism", 60.0, _determinism)


# prior normalization -----------------------------------------------------------

def _normalization() -> tuple[bool, str]:
    from scipy.integrate import dblquad

    hyper = SystemConfig(N=1, M=1, N_c=1).prior_hyper()

    def density(r, th):
        x = np.array([r * math.cos(th), r * math.sin(th)])
        return math.exp(float(log_prior_per_device(x, 1, hyper)[0])) * r

    # polar coordinates; radial breakpoints follow the narrow inactive branch
    w = math.sqrt(hyper.epsilon)
    brk = [0.0, w, 10 * w, 100 * w, 1e4 * w, np.inf]
    total = 0.0
    for lo, hi in zip(brk[:-1], brk[1:]):
        total += dblquad(density, 0.0, 2 * math.pi, lo, hi, epsabs=1e-12, epsrel=1e-9)[0]
    return abs(total - 1.0) <= 1e-3, f"integral {total:.6f}"


def check_normalization() -> CheckResult:
    return _timed("C9", "Prior normalization", 5.0, _normalization)


ALL_CHECKS = {
    "C1": check_descent,
    "C2": check_majorizer,
    "C3": check_bussgang,
    "C4": check_lloyd_max,
    "C5": check_detector,
    "C6": check_recovery,
    "C7": check_trends,
    "C8": check_determinism,
    "C9": check_normalization,
}

ORACLE_CHECKS = ("C1", "C2", "C3", "C4", "C5", "C9")

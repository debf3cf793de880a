import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jadce.sparse_prior import (PriorHyper, anneal_path, branch_log_densities, device_power,
                                log_prior, log_prior_per_device, prior_surrogate,
                                responsibilities, surrogate_weights)

SPEC_HYPER = PriorHyper(q_s=0.1, a=1e-6, b=1e-6, epsilon=1e-8)
TIED_HYPER = PriorHyper(q_s=0.1, a=1.0, b=1e-4, epsilon=1e-4)


def _neg_log_prior_grad(x, N, hyper, h=1e-7):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = -(log_prior(x + e, N, hyper) - log_prior(x - e, N, hyper)) / (2 * h)
    return g


class TestHyper:
    @pytest.mark.parametrize("kw", [{"q_s": -0.1}, {"q_s": 1.1}, {"a": 0.0}, {"b": -1.0}, {"epsilon": 0.0}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            PriorHyper(**{"q_s": 0.1, **kw})


class TestDevicePower:
    def test_layout(self):
        # N=2, M=2: device 0 owns entries 0,1 of each half
        x = np.array([1.0, 2.0, 3.0, 4.0, 1.0, 0.0, 0.0, 1.0])
        assert np.array_equal(device_power(x, 2), [[2.0, 4.0], [9.0, 17.0]])

    def test_length_check(self):
        with pytest.raises(ValueError):
            device_power(np.zeros(6), 4)


class TestLogPrior:
    def test_value_at_zero(self):
        # log[(1 - q) / (pi eps) + q a / (pi b)], evaluated in high precision
        assert log_prior(np.zeros(2), 1, SPEC_HYPER) == pytest.approx(17.17059034355625, rel=1e-12)

    def test_no_underflow_at_large_m(self):
        x = np.full(2 * 128, 0.3)
        lp = log_prior_per_device(x, 1, SPEC_HYPER)
        assert np.all(np.isfinite(lp))

    def test_branch_densities_single_element(self):
        p = np.array([[0.02]])
        l0, l1 = branch_log_densities(p, TIED_HYPER)
        assert l0[0] == pytest.approx(-math.log(math.pi * 1e-4) - 0.02 / 1e-4)
        assert l1[0] == pytest.approx(math.log(1.0 / (math.pi * 1e-4)) - 2.0 * math.log1p(200.0))

    def test_sums_over_devices(self, rng):
        x = rng.standard_normal(2 * 3 * 4) * 0.01
        assert log_prior(x, 3, TIED_HYPER) == pytest.approx(log_prior_per_device(x, 3, TIED_HYPER).sum())


class TestResponsibilities:
    def test_zero_device_is_inactive(self):
        r = responsibilities(np.zeros(2 * 8), 1, SPEC_HYPER)
        # log P0(0) - log P1(0) = M log(b / (a eps)) with M = 8
        assert r.lam0[0] == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("hyper", [SPEC_HYPER, TIED_HYPER])
    @pytest.mark.parametrize("M", [1, 4, 128])
    def test_strong_device_is_active(self, hyper, M):
        # every element at power 100 eps, so ||x[n]||^2 = 100 eps M
        amp = math.sqrt(100 * hyper.epsilon)
        x = np.concatenate([np.full(M, amp), np.zeros(M)])
        assert responsibilities(x, 1, hyper).lam1[0] >= 1 - 1e-10

    def test_sum_to_one(self, rng):
        r = responsibilities(rng.standard_normal(40) * 0.01, 5, TIED_HYPER)
        assert np.allclose(r.lam0 + r.lam1, 1.0)

    @pytest.mark.parametrize("q, expected", [(0.0, 0.0), (1.0, 1.0)])
    def test_endpoint_activity_ratio(self, q, expected):
        r = responsibilities(np.full(4, 0.1), 1, PriorHyper(q_s=q, a=1.0, b=1e-4, epsilon=1e-4))
        assert r.lam1[0] == expected


class TestSurrogate:
    def test_weights_layout(self):
        x = np.array([0.01, 0.0, 0.0, 0.02])
        resp = responsibilities(x, 1, TIED_HYPER)
        w = surrogate_weights(x, 1, resp, TIED_HYPER)
        assert np.allclose(w.Lam0_diag, resp.lam0[0] / 1e-4)
        assert np.allclose(w.Lam1_diag, 2.0 * resp.lam1[0] / 1e-4)
        p = np.array([1e-4, 4e-4])
        assert np.allclose(w.W_diag, np.tile(1 / (p / 1e-4 + 1), 2))
        assert np.all((w.W_diag > 0) & (w.W_diag <= 1))

    def test_single_element_student_slope(self):
        # with lam1 = 1, Lam1 W = (1 + a) / (b + p): the slope of the log-Student term
        h = PriorHyper(q_s=1.0, a=0.5, b=1e-3, epsilon=1e-3)
        x = np.array([0.03, -0.04])
        w = surrogate_weights(x, 1, responsibilities(x, 1, h), h)
        assert w.second_order[0] == pytest.approx(1.5 / (1e-3 + 0.0025))

    @pytest.mark.parametrize("hyper", [TIED_HYPER, PriorHyper(q_s=0.3, a=0.5, b=2e-4, epsilon=5e-5)])
    def test_gradient_matches_objective(self, hyper, rng):
        x = rng.standard_normal(2 * 2 * 3) * 0.02
        w = surrogate_weights(x, 2, responsibilities(x, 2, hyper), hyper)
        assert np.allclose(2 * w.second_order * x, _neg_log_prior_grad(x, 2, hyper), rtol=1e-5, atol=1e-3)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 1), st.floats(-3, 1))
def test_prior_surrogate_majorizes(seed, s1, s2):
    rng = np.random.default_rng(seed)
    x_ref = rng.standard_normal(12) * 10**s1 * 0.01
    x = rng.standard_normal(12) * 10**s2 * 0.01
    up = prior_surrogate(x, x_ref, 2, TIED_HYPER)
    assert up >= -log_prior(x, 2, TIED_HYPER) - 1e-9 * max(1.0, abs(up))
    assert prior_surrogate(x_ref, x_ref, 2, TIED_HYPER) == pytest.approx(-log_prior(x_ref, 2, TIED_HYPER))


class TestAnnealPath:
    def test_geometric_and_ends_at_target(self):
        path = anneal_path(TIED_HYPER, 1000.0, 4)
        eps = [h.epsilon for h in path]
        assert eps[-1] == TIED_HYPER.epsilon and path[-1] is TIED_HYPER
        assert np.allclose(np.diff(np.log10(eps)), -1.0)

    def test_threshold_ratio_constant(self):
        for h in anneal_path(TIED_HYPER, 50.0, 5):
            assert h.b / (h.a * h.epsilon) == pytest.approx(1.0)

    def test_single_stage(self):
        assert anneal_path(SPEC_HYPER, 10.0, 1) == [SPEC_HYPER]

    @pytest.mark.parametrize("ratio, stages", [(0.5, 3), (10.0, 0)])
    def test_invalid(self, ratio, stages):
        with pytest.raises(ValueError):
            anneal_path(TIED_HYPER, ratio, stages)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jadce.detection import (activity_statistics, detect, detection_rates, detection_threshold,
                             mse, reconstruct_channels)
from jadce.linops import to_real, vec
from jadce.sparse_prior import PriorHyper
from jadce.system_model import SystemConfig, build_grid

SPEC_HYPER = PriorHyper(q_s=0.1, a=1e-6, b=1e-6, epsilon=1e-8)
TIED_HYPER = PriorHyper(q_s=0.1, a=1.0, b=1e-4, epsilon=1e-4)


def _density_decision(x, N, hyper):
    """Direct density products (no logs); only safe for small M and moderate powers."""
    M = x.size // (2 * N)
    out = []
    for n in range(N):
        xr, xi = x[n * M:(n + 1) * M], x[N * M + n * M:N * M + (n + 1) * M]
        p = xr**2 + xi**2
        P0 = np.prod(np.exp(-p / hyper.epsilon) / (math.pi * hyper.epsilon))
        P1 = np.prod(hyper.a / (math.pi * hyper.b) * (1 + p / hyper.b) ** (-(1 + hyper.a)))
        out.append(int(hyper.q_s * P1 > (1 - hyper.q_s) * P0))
    return np.array(out)


class TestThreshold:
    def test_large_m_value(self):
        # high-precision oracle for M=128, q=0.1, a=b=1e-6, eps=1e-8
        assert detection_threshold(SPEC_HYPER, 128) == pytest.approx(2360.044359803239, rel=1e-12)

    def test_tied_hyper_is_prior_odds(self):
        h = SystemConfig(M=16).prior_hyper()
        assert detection_threshold(h, 16) == pytest.approx(math.log(9.0), abs=1e-9)

    @pytest.mark.parametrize("hyper", [SPEC_HYPER, TIED_HYPER])
    def test_zero_estimate_is_inactive(self, hyper):
        res = detect(np.zeros(2 * 5 * 8), 5, hyper)
        assert np.all(res.llr == 0.0) and not res.s_hat.any()

    @pytest.mark.parametrize("q, expected", [(0.0, 0), (1.0, 1)])
    def test_degenerate_activity(self, q, expected):
        h = PriorHyper(q_s=q, a=1.0, b=1e-4, epsilon=1e-4)
        assert np.all(detect(np.full(12, 0.3), 3, h).s_hat == expected)


class TestDecision:
    @pytest.mark.parametrize("hyper", [TIED_HYPER, PriorHyper(q_s=0.3, a=0.5, b=2e-4, epsilon=1e-4)])
    def test_agrees_with_density_products(self, hyper, rng):
        N, M = 40, 3
        scale = math.sqrt(hyper.epsilon) * 10 ** rng.uniform(-0.5, 0.7, size=2 * N * M)
        x = scale * rng.standard_normal(2 * N * M)
        got = detect(x, N, hyper).s_hat
        assert np.array_equal(got, _density_decision(x, N, hyper))
        assert 0 < got.sum() < N  # the draw straddles the boundary

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        M = 6
        xr, xi = rng.standard_normal(M) * 0.02, rng.standard_normal(M) * 0.02
        perm = rng.permutation(M)
        a = activity_statistics(np.concatenate([xr, xi]), 1, TIED_HYPER)
        b = activity_statistics(np.concatenate([xr[perm], xi[perm]]), 1, TIED_HYPER)
        assert a[0] == pytest.approx(b[0], rel=1e-12, abs=1e-12)

    def test_monotone_above_turning_point(self):
        # d llr / d p = 1/eps - (1+a)/(b+p) > 0 once p > (1+a) eps - b
        h = TIED_HYPER
        p0 = (1 + h.a) * h.epsilon - h.b
        p = p0 + np.geomspace(1e-6, 1e-1, 200)
        x = np.zeros((p.size, 2))
        x[:, 0] = np.sqrt(p)
        llr = [activity_statistics(row, 1, h)[0] for row in x]
        assert np.all(np.diff(llr) > 0)


class TestReconstruct:
    def test_round_trip(self, rng):
        M, Mt, N = 4, 4, 3
        U = build_grid(M, Mt)
        X = rng.standard_normal((Mt, N)) + 1j * rng.standard_normal((Mt, N))
        x = to_real(vec(X))
        s = np.array([1, 0, 1])
        H = reconstruct_channels(x, s, U)
        assert np.allclose(H[:, [0, 2]], U @ X[:, [0, 2]])
        assert np.allclose(H[:, 1], 0)

    def test_rejected_all(self, rng):
        U = build_grid(4, 4)
        assert not reconstruct_channels(rng.standard_normal(24), np.zeros(3), U).any()


class TestMetrics:
    def test_mse_offset(self, rng):
        x = rng.standard_normal(20)
        assert mse(x + 1.0, x) == pytest.approx(1.0)
        assert mse(x, x) == 0.0

    def test_mse_length_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.zeros(4), np.zeros(6))

    @pytest.mark.parametrize("s_hat, s_true, expected", [
        ([1, 0], [1, 0], (1.0, 0.0, 0.0)),
        ([0, 1], [1, 0], (0.0, 1.0, 1.0)),
        ([1, 1, 0, 0], [1, 0, 1, 0], (0.5, 0.5, 0.5)),
        ([1, 0], [0, 0], (None, None, 0.5)),
        ([1, 0], [1, 1], (0.5, 0.5, None)),
    ])
    def test_rates(self, s_hat, s_true, expected):
        assert detection_rates(s_hat, s_true) == expected

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=30))
    def test_tpr_plus_fnr(self, pairs):
        s_hat, s_true = zip(*pairs)
        tpr, fnr, fpr = detection_rates(s_hat, s_true)
        if tpr is not None:
            assert tpr + fnr == pytest.approx(1.0)
        assert fpr is None or 0.0 <= fpr <= 1.0

import math

import numpy as np
import pytest

from jadce.linops import as_dense
from jadce.system_model import (MIN_DISTANCE_KM, PROFILES, SystemConfig, build_grid,
                                generate_pilots, generate_scene, grid_sines, large_scale_gain,
                                noise_variance, sample_activity, sample_channel,
                                sample_distances, steering_vector, synthesize)


class TestSystemConfig:
    def test_defaults_are_desk_scale(self):
        cfg = SystemConfig()
        assert (cfg.N, cfg.M, cfg.Mt, cfg.T, cfg.q_s, cfg.adc_bits) == (50, 32, 32, 64, 0.1, 3)

    def test_paper_profile(self):
        p = PROFILES["paper"]
        assert (p.N, p.M, p.T) == (200, 128, 100)

    @pytest.mark.parametrize("kw", [
        {"Mt": 64}, {"q_s": 1.5}, {"N_c": 0}, {"N_c": 40}, {"adc_bits": 0},
        {"adc_bits": 13}, {"a": 0.0}, {"b": -1.0}, {"eps_rel": 0.0}, {"N": 0},
        {"cell_radius_km": 0.01},
    ])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            SystemConfig(**kw)

    def test_prior_hyper_ties_b_to_epsilon(self):
        h = SystemConfig(M=16, a=2.0).prior_hyper()
        assert h.epsilon == pytest.approx(1e-3 / 32)
        assert h.b == pytest.approx(2.0 * h.epsilon)

    def test_prior_hyper_explicit_b(self):
        assert SystemConfig(b=0.5).prior_hyper().b == 0.5

    def test_dict_round_trip(self):
        cfg = SystemConfig(N=7, adc_bits=None)
        assert SystemConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ValueError, match="unknown"):
            SystemConfig.from_dict({"N": 3, "bogus": 1})


class TestGeometry:
    def test_grid_is_unitary(self):
        U = build_grid(16)
        assert np.allclose(U.conj().T @ U, np.eye(16), atol=1e-12)

    def test_grid_sines_span(self):
        s = grid_sines(8)
        assert s[0] == -1.0 and s[-1] == pytest.approx(1.0 - 2.0 / 8)

    def test_steering_vector(self):
        a = steering_vector(math.asin(0.5), 4)
        assert np.allclose(a, np.exp(-1j * np.pi * np.arange(4) * 0.5) / 2.0)
        assert np.linalg.norm(a) == pytest.approx(1.0)

    def test_unsupported_grid(self):
        with pytest.raises(ValueError):
            build_grid(8, 16)

    @pytest.mark.parametrize("c, expected", [(1.0, 10**-12.81), (10.0, 10**-16.48)])
    def test_large_scale_gain(self, c, expected):
        assert large_scale_gain(c) == pytest.approx(expected, rel=1e-12)

    def test_distances_inside_annulus(self, rng):
        d = sample_distances(5000, 1.0, rng)
        assert d.min() >= MIN_DISTANCE_KM and d.max() <= 1.0
        # uniform over area: median radius near sqrt((r0^2 + 1) / 2)
        assert np.median(d) == pytest.approx(math.sqrt((MIN_DISTANCE_KM**2 + 1) / 2), abs=0.02)


class TestRandomScene:
    @pytest.mark.parametrize("q, expected", [(0.0, 0), (1.0, 20)])
    def test_activity_extremes(self, rng, q, expected):
        assert sample_activity(20, q, rng).sum() == expected

    def test_activity_rate(self, rng):
        assert sample_activity(20000, 0.1, rng).mean() == pytest.approx(0.1, abs=0.01)

    @pytest.mark.parametrize("on_grid", [False, True])
    def test_channel_energy_is_unit_on_average(self, rng, on_grid):
        cfg = SystemConfig(N=4000, M=8, N_c=2, on_grid=on_grid)
        Hbar, H, aoas, gains = sample_channel(cfg, rng)
        assert np.mean(np.sum(np.abs(H) ** 2, axis=0)) == pytest.approx(1.0, rel=0.05)
        assert np.allclose(build_grid(8) @ Hbar, H)
        assert aoas.shape == gains.shape == (4000, 2)

    def test_on_grid_single_cluster_is_one_sparse(self, rng):
        cfg = SystemConfig(N=30, M=8, N_c=1, on_grid=True)
        Hbar, *_ = sample_channel(cfg, rng)
        assert np.all(np.count_nonzero(Hbar, axis=0) == 1)

    def test_pilots_are_unit_modulus_qpsk(self, rng):
        D = generate_pilots(5, 9, rng).D
        assert D.shape == (5, 9)
        assert np.allclose(np.abs(D), 1.0)

    def test_noise_variance(self):
        assert noise_variance(np.array([1.0, 3.0]), 10.0) == pytest.approx(0.2)

    def test_scene_columns_follow_activity(self, rng):
        cfg = SystemConfig(N=12, M=8, q_s=0.5)
        sc = generate_scene(cfg, rng)
        assert np.all(sc.X[:, sc.s == 0] == 0)
        assert np.array_equal(sc.X[:, sc.s == 1], sc.Hbar[:, sc.s == 1])


class TestSynthesize:
    def test_real_model_matches_complex(self, small_cfg, rng):
        sc = generate_scene(small_cfg, rng)
        pil = generate_pilots(small_cfg.N, small_cfg.T, rng)
        Y, meas = synthesize(small_cfg, sc, pil, rng)
        assert Y.shape == (small_cfg.M, small_cfg.T)
        Phi = as_dense(meas.Phi)
        assert np.allclose(Phi @ meas.x_true + meas.v, meas.y)
        assert meas.sigma_v2 == pytest.approx(noise_variance(sc.g, small_cfg.snr_db))

    def test_dimension_mismatch(self, small_cfg, rng):
        sc = generate_scene(small_cfg, rng)
        pil = generate_pilots(small_cfg.N, small_cfg.T + 1, rng)
        with pytest.raises(ValueError, match="dimension mismatch"):
            synthesize(small_cfg, sc, pil, rng)

    def test_seeded_determinism(self, small_cfg):
        def make(seed):
            r = np.random.default_rng(seed)
            sc = generate_scene(small_cfg, r)
            return synthesize(small_cfg, sc, generate_pilots(small_cfg.N, small_cfg.T, r), r)[0]
        assert np.array_equal(make(3), make(3))
        assert not np.array_equal(make(3), make(4))

    def test_empirical_snr(self):
        cfg = SystemConfig(N=40, M=16, T=64, q_s=1.0, snr_db=5.0)
        ratios = []
        for seed in range(40):
            r = np.random.default_rng(seed)
            sc = generate_scene(cfg, r)
            _, meas = synthesize(cfg, sc, generate_pilots(cfg.N, cfg.T, r), r)
            sig = np.sum(sc.g * np.sum(np.abs(sc.Hbar) ** 2, axis=0)) / cfg.N
            ratios.append(sig / meas.sigma_v2)
        # received SNR averaged over devices, with unit-energy channels on average
        assert 10 * np.log10(np.mean(ratios)) == pytest.approx(5.0, abs=0.6)

"""Counter-based noise stream and smoothed evaluation reductions."""

import numpy as np
import pytest

from regcert.errors import DomainError
from regcert.models import ModelSpec
from regcert.region import AcceptRegion
from regcert.sampling import (NoiseConfig, counter_normals, counter_uniforms,
                              derive_seed, draw_noise, noise_block, smooth_eval)

LINEAR_I2 = ModelSpec(kind="linear", input_dim=2, output_dim=2,
                      parameters=(1.0, 0.0, 0.0, 1.0))


class TestCounterStream:
    def test_deterministic(self):
        a = counter_uniforms(123, 0, 1000)
        b = counter_uniforms(123, 0, 1000)
        assert a.tobytes() == b.tobytes()

    def test_offset_slicing(self):
        # Absolute positions: any chunking of the stream yields the same bits.
        whole = counter_uniforms(9, 0, 100)
        parts = np.concatenate([counter_uniforms(9, 0, 37),
                                counter_uniforms(9, 37, 13),
                                counter_uniforms(9, 50, 50)])
        assert whole.tobytes() == parts.tobytes()

    def test_open_interval(self):
        u = counter_uniforms(7, 0, 10 ** 5)
        assert np.all(u > 0.0) and np.all(u < 1.0)

    def test_seed_sensitivity(self):
        assert not np.array_equal(counter_uniforms(1, 0, 64), counter_uniforms(2, 0, 64))

    def test_uniform_moments(self):
        u = counter_uniforms(5, 0, 10 ** 5)
        assert abs(u.mean() - 0.5) < 4.0 * (1.0 / np.sqrt(12e5))
        assert abs(u.var() - 1.0 / 12.0) < 4e-3

    def test_normal_moments(self):
        z = counter_normals(99, 0, 10 ** 5)
        assert abs(z.mean()) < 4.0 / np.sqrt(1e5)
        assert abs(z.std() - 1.0) < 4.0 / np.sqrt(2e5)

    def test_derive_seed_stable(self):
        # Frozen: derive_seed must never change across releases, or every
        # pinned report in the wild stops reproducing.
        assert derive_seed(0, "point", 0) == 14879427354679318929
        assert derive_seed(0, "point", 0) != derive_seed(0, "point", 1)
        assert derive_seed(1, "a") != derive_seed(1, "b")


class TestDrawNoise:
    CFG = NoiseConfig(sigma=0.5, n=100, seed=77)

    def test_deterministic_per_index(self):
        a = draw_noise(self.CFG, 3, dim=4)
        b = draw_noise(self.CFG, 3, dim=4)
        assert a.tobytes() == b.tobytes()

    def test_block_matches_single_draws(self):
        block = noise_block(self.CFG, dim=3)
        for i in (0, 1, 50, 99):
            np.testing.assert_array_equal(block[i], draw_noise(self.CFG, i, dim=3))

    def test_index_range(self):
        with pytest.raises(DomainError):
            draw_noise(self.CFG, 100, dim=2)
        with pytest.raises(DomainError):
            draw_noise(self.CFG, -1, dim=2)

    def test_marginal_mean(self):
        cfg = NoiseConfig(sigma=2.0, n=10 ** 5, seed=5)
        block = noise_block(cfg, dim=2)
        bound = 4.0 * cfg.sigma / np.sqrt(cfg.n)
        assert np.all(np.abs(block.mean(axis=0)) < bound)

    def test_norm_concentration(self):
        # ||e|| concentrates near sigma * sqrt(d) for moderate d.
        cfg = NoiseConfig(sigma=0.1, n=2000, seed=6)
        norms = np.linalg.norm(noise_block(cfg, dim=100), axis=1)
        assert abs(norms.mean() - 0.1 * np.sqrt(100)) < 0.01

    def test_config_validation(self):
        with pytest.raises(DomainError):
            NoiseConfig(sigma=0.0, n=10)
        with pytest.raises(DomainError):
            NoiseConfig(sigma=1.0, n=0)


class TestSmoothEval:
    def test_constant_model_degenerate(self):
        spec = ModelSpec(kind="constant", input_dim=2, output_dim=2,
                         parameters=(1.0, 10.0))
        region = AcceptRegion(y=np.array([1.0, 0.0]), eps_y=np.array([0.5, 0.5]))
        ev = smooth_eval(spec, [0.0, 0.0], NoiseConfig(1.0, 64, 3), region)
        np.testing.assert_array_equal(ev.mean, [1.0, 10.0])
        np.testing.assert_array_equal(ev.covariance, np.zeros((2, 2)))
        np.testing.assert_array_equal(ev.accept_counts, [64, 0])

    def test_linear_gaussian_moments(self):
        region = AcceptRegion(y=np.zeros(2), eps_y=np.ones(2))
        cfg = NoiseConfig(sigma=1.0, n=10 ** 4, seed=11)
        ev = smooth_eval(LINEAR_I2, [0.0, 0.0], cfg, region)
        assert np.all(np.abs(ev.mean) < 4.0 / np.sqrt(cfg.n))
        assert np.linalg.norm(ev.covariance - np.eye(2)) < 0.1 * np.linalg.norm(np.eye(2))

    def test_determinism(self):
        region = AcceptRegion(y=np.array([7.43]), eps_y=np.array([6.0]))
        sine = ModelSpec(kind="synthetic-sine", input_dim=2, output_dim=1)
        cfg = NoiseConfig(sigma=0.23, n=2000, seed=123)
        a = smooth_eval(sine, [2.0, 2.0], cfg, region)
        b = smooth_eval(sine, [2.0, 2.0], cfg, region)
        assert a.mean.tobytes() == b.mean.tobytes()
        assert a.covariance.tobytes() == b.covariance.tobytes()
        assert np.array_equal(a.accept_counts, b.accept_counts)

    def test_accept_counts_monotone_in_eps(self):
        sine = ModelSpec(kind="synthetic-sine", input_dim=2, output_dim=1)
        cfg = NoiseConfig(sigma=0.23, n=2000, seed=42)
        y = np.array([7.4319750469207175])
        counts = []
        for eps in (1.0, 2.0, 4.0, 6.0, 9.0):
            ev = smooth_eval(sine, [2.0, 2.0], cfg, AcceptRegion(y=y, eps_y=np.array([eps])))
            counts.append(int(ev.accept_counts[0]))
        assert counts == sorted(counts)

    def test_covariance_consistency_decay(self):
        # Frobenius error of the sample covariance against the analytic one
        # shrinks through n = 1e2, 1e3, 1e4 for a linear Gaussian model.
        w = np.array([[1.0, 0.0], [0.6, 0.8]])
        spec = ModelSpec(kind="linear", input_dim=2, output_dim=2,
                         parameters=tuple(w.ravel()))
        analytic = w @ w.T
        region = AcceptRegion(y=np.zeros(2), eps_y=np.ones(2))
        errs = []
        for n in (100, 1000, 10000):
            ev = smooth_eval(spec, [0.0, 0.0], NoiseConfig(1.0, n, 17), region)
            errs.append(np.linalg.norm(ev.covariance - analytic))
        assert errs[0] > errs[1] > errs[2]

    def test_n1_zero_covariance_flagged(self):
        region = AcceptRegion(y=np.zeros(2), eps_y=np.ones(2))
        ev = smooth_eval(LINEAR_I2, [0.0, 0.0], NoiseConfig(1.0, 1, 0), region)
        np.testing.assert_array_equal(ev.covariance, np.zeros((2, 2)))
        assert ev.cov_degenerate

    def test_grouped_l2_counts(self):
        spec = ModelSpec(kind="constant", input_dim=1, output_dim=2,
                         parameters=(0.3, 0.4))
        region = AcceptRegion(y=np.zeros(2), eps_y=np.array([0.6, 0.6]),
                              diss="grouped-l2", groups=((0, 1),))
        ev = smooth_eval(spec, [0.0], NoiseConfig(1.0, 8, 0), region)
        # ||(0.3, 0.4)|| = 0.5 <= 0.6: whole group accepted every sample.
        np.testing.assert_array_equal(ev.accept_counts, [8, 8])
        tight = AcceptRegion(y=np.zeros(2), eps_y=np.array([0.4, 0.4]),
                             diss="grouped-l2", groups=((0, 1),))
        ev = smooth_eval(spec, [0.0], NoiseConfig(1.0, 8, 0), tight)
        np.testing.assert_array_equal(ev.accept_counts, [0, 0])

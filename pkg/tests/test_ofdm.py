import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from blindofdm.channel import bem_variances, build_matrices, sample_bem, tap_table
from blindofdm.ofdm import (
    ConfigError,
    OfdmConfig,
    channel_filter,
    complex_noise,
    dft_matrix,
    noise_variance,
    ofdm_modulate_with_cp,
    post_dft_receive,
    qpsk_symbols,
    remove_cp,
)

from conftest import short_channel_config


class TestConfig:
    @pytest.mark.parametrize("n, block, spacing, duration", [
        (32, 42, 320e3, 3.125e-6),
        (64, 74, 160e3, 6.25e-6),
        (128, 138, 80e3, 12.5e-6),
    ])
    def test_derived_quantities(self, n, block, spacing, duration):
        cfg = OfdmConfig(num_subcarriers=n)
        assert cfg.channel_order == 6
        assert cfg.bem_order == 2
        assert cfg.block_len == block
        assert cfg.subcarrier_spacing == pytest.approx(spacing, rel=1e-15)
        assert cfg.useful_duration == pytest.approx(duration, rel=1e-15)
        assert cfg.sample_period == pytest.approx(9.765625e-08, rel=1e-15)
        assert cfg.max_doppler_hz == pytest.approx(525.92592592592592593, rel=1e-14)

    def test_short_prefix_rejected(self):
        with pytest.raises(ConfigError, match="cyclic prefix"):
            OfdmConfig(num_subcarriers=32, cp_len=4)

    def test_overspread_rejected(self):
        with pytest.raises(ConfigError, match="underspread"):
            OfdmConfig(max_velocity_mps=1e8, light_speed_mps=3e8, max_delay_spread_s=500e-9)

    def test_delay_on_sample_boundary_not_rounded_up(self):
        cfg = OfdmConfig(max_delay_spread_s=5 * 9.765625e-08)
        assert cfg.channel_order == 5


class TestDft:
    def test_trivial_sizes(self):
        assert_allclose(dft_matrix(1), [[1.0]])
        assert_allclose(dft_matrix(2), np.array([[1, 1], [1, -1]]) / np.sqrt(2), atol=1e-15)

    @pytest.mark.parametrize("n", [32, 64, 128])
    def test_unitary(self, n):
        f = dft_matrix(n)
        assert np.linalg.norm(f @ f.conj().T - np.eye(n)) < 1e-10
        assert np.linalg.norm(f.conj().T @ f - np.eye(n)) < 1e-10

    def test_matches_fft(self, rng):
        x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        assert_allclose(dft_matrix(16) @ x, np.fft.fft(x, norm="ortho"), atol=1e-13)


class TestQpsk:
    def test_unit_modulus_and_determinism(self):
        a = qpsk_symbols(1000, np.random.default_rng(3))
        b = qpsk_symbols(1000, np.random.default_rng(3))
        assert_array_equal(a, b)
        assert_allclose(np.abs(a), 1.0, rtol=0, atol=1e-15)

    def test_uniform_over_points(self):
        d = qpsk_symbols(100_000, np.random.default_rng(5))
        codes = (d.real > 0).astype(int) * 2 + (d.imag > 0).astype(int)
        freq = np.bincount(codes, minlength=4) / d.size
        assert_allclose(freq, 0.25, atol=0.01)
        # chi-square with 3 dof, 0.999 quantile is 16.27
        counts = np.bincount(codes, minlength=4)
        chi2 = np.sum((counts - d.size / 4) ** 2 / (d.size / 4))
        assert chi2 < 16.27


class TestModulation:
    def test_hand_evaluated_block(self):
        cfg = OfdmConfig(num_subcarriers=4, cp_len=2, max_delay_spread_s=2e-7)
        assert_allclose(ofdm_modulate_with_cp(np.array([1, 0, 0, 0]), cfg), 0.5 * np.ones(6), atol=1e-15)

    def test_single_tone_gives_constant_block(self):
        cfg = short_channel_config(8)
        d = np.zeros(8, complex)
        d[0] = np.sqrt(8)
        assert_allclose(ofdm_modulate_with_cp(d, cfg), np.ones(10), atol=1e-14)

    def test_prefix_copies_tail_and_removal_inverts(self, rng, cfg32):
        d = qpsk_symbols(32, rng)
        s = ofdm_modulate_with_cp(d, cfg32)
        assert s.shape == (42,)
        assert_array_equal(s[:10], s[32:])
        assert_allclose(np.fft.fft(remove_cp(s, cfg32), norm="ortho"), d, atol=1e-14)
        assert np.linalg.norm(s[10:]) == pytest.approx(np.linalg.norm(d), rel=1e-13)

    def test_dimension_mismatch(self, cfg32):
        with pytest.raises(ValueError):
            ofdm_modulate_with_cp(np.ones(31), cfg32)
        with pytest.raises(ValueError):
            post_dft_receive(np.ones(41), cfg32)


class TestChannelFilter:
    def test_identity_channel(self, rng):
        s = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        taps = np.zeros((20, 3), complex)
        taps[:, 0] = 1.0
        assert_allclose(channel_filter(s, taps), s)

    def test_time_invariant_matches_convolution(self, rng):
        s = rng.standard_normal(30) + 1j * rng.standard_normal(30)
        h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        taps = np.tile(h, (30, 1))
        assert_allclose(channel_filter(s, taps), np.convolve(s, h)[:30], atol=1e-13)

    def test_noise_variance(self):
        y = channel_filter(np.zeros(100_000, complex), np.ones((100_000, 1)), 1.0, np.random.default_rng(0))
        assert np.mean(np.abs(y) ** 2) == pytest.approx(1.0, abs=0.02)
        assert abs(np.mean(y.real**2) - np.mean(y.imag**2)) < 0.02

    def test_negative_noise_rejected(self):
        with pytest.raises(ValueError):
            channel_filter(np.ones(4), np.ones((4, 1)), -1.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            complex_noise((3,), -0.1, np.random.default_rng(0))


class TestReceiverChain:
    @pytest.mark.parametrize("n", [32, 64])
    def test_sample_path_equals_matrix_model(self, n):
        cfg = OfdmConfig(num_subcarriers=n)
        rng = np.random.default_rng(n)
        real = sample_bem(cfg, bem_variances(cfg), np.arange(100), rng)
        d = qpsk_symbols(n, rng, size=100)
        y = channel_filter(ofdm_modulate_with_cp(d, cfg), tap_table(real))
        f = dft_matrix(n)
        h_time = build_matrices(real).time
        expected = (f @ h_time @ f.conj().T @ d[..., None])[..., 0]
        assert np.max(np.abs(post_dft_receive(y, cfg) - expected)) < 1e-9

    def test_receive_is_norm_preserving(self, rng, cfg32):
        y = rng.standard_normal(42) + 1j * rng.standard_normal(42)
        assert np.linalg.norm(post_dft_receive(y, cfg32)) == pytest.approx(np.linalg.norm(y[10:]), rel=1e-13)

    def test_prefix_content_ignored(self, rng, cfg32):
        y = rng.standard_normal(42) + 1j * rng.standard_normal(42)
        z = y.copy()
        z[:10] = 0
        assert_array_equal(post_dft_receive(y, cfg32), post_dft_receive(z, cfg32))


class TestNoiseVariance:
    def test_conventions(self):
        assert noise_variance(10.0, 10.0, 32) == pytest.approx(1.0)
        assert noise_variance(10.0, 10.0, 32, "normalized") == pytest.approx(1.0 / 32)
        with pytest.raises(ValueError):
            noise_variance(1.0, 0.0, 32, "bogus")

    @given(st.floats(-20, 50), st.floats(1e-3, 1e3))
    def test_snr_roundtrip(self, snr_db, energy):
        var = noise_variance(energy, snr_db, 16)
        assert 10 * np.log10(energy / var) == pytest.approx(snr_db, abs=1e-9)

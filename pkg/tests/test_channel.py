import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import crandn as cn
from dbuofdm import ofdm
from dbuofdm.channel import (Echo, PathSet, TapChannel, apply_channel, crandn, draw_tworay,
                             sensing_observe, snr_to_noise_var, steering, trial_rng)
from dbuofdm.grid import CONFIG_1, GridConfig


class TestRandom:
    def test_crandn_variance(self):
        z = crandn(np.random.default_rng(0), 200_000, var=0.25)
        assert np.mean(np.abs(z) ** 2) == pytest.approx(0.25, rel=0.02)
        assert np.var(z.real) == pytest.approx(np.var(z.imag), rel=0.03)

    def test_trial_rng_independent_of_order(self):
        a = trial_rng(5, 3).standard_normal(4)
        trial_rng(5, 2).standard_normal(100)
        assert np.array_equal(trial_rng(5, 3).standard_normal(4), a)
        assert not np.array_equal(trial_rng(5, 4).standard_normal(4), a)

    def test_snr(self):
        assert snr_to_noise_var(0) == 1.0
        assert snr_to_noise_var(10) == pytest.approx(0.1)
        assert np.allclose(snr_to_noise_var([20, 30]), [0.01, 0.001])


class TestTwoRay:
    def test_tap_powers(self):
        ch = draw_tworay(np.random.default_rng(1), 64, size=100_000)
        p = np.mean(np.abs(ch.taps) ** 2, axis=0)
        assert np.allclose(p, 1.0, rtol=0.02)
        assert ch.freq_response.shape == (100_000, 64)

    def test_freq_response(self):
        ch = TapChannel.from_taps([1, 1j], 8)
        assert np.allclose(ch.freq_response, 1 + 1j * np.exp(-2j * np.pi * np.arange(8) / 8))

    def test_too_many_taps(self):
        with pytest.raises(ValueError):
            TapChannel.from_taps(np.ones(9), 8)


class TestApplyChannel:
    def test_unit_tap(self, rng):
        x = cn(rng, (2, 8, 80))
        assert np.array_equal(apply_channel(x, TapChannel.from_taps([1], 64), 0.0), x)

    def test_delay_tap_is_circular_shift(self, rng):
        body = cn(rng, (8, 64))
        x = ofdm.add_cp(body, 16)
        y = apply_channel(x, TapChannel.from_taps([0, 1], 64), 0.0)
        assert np.allclose(y[:, 16:], np.roll(body, 1, axis=-1))

    def test_isi_crosses_symbol_boundary(self):
        x = np.zeros((2, 5), dtype=complex)
        x[0, -1] = 1.0
        y = apply_channel(x, TapChannel.from_taps([0, 1], 4), 0.0)
        assert y[1, 0] == 1.0 and np.count_nonzero(y) == 1

    def test_per_frame_taps(self, rng):
        x = cn(rng, (3, 2, 10))
        taps = cn(rng, (3, 2))
        y = apply_channel(x, TapChannel.from_taps(taps, 8), 0.0)
        for f in range(3):
            ref = apply_channel(x[f], TapChannel.from_taps(taps[f], 8), 0.0)
            assert np.allclose(y[f], ref)

    def test_noise_variance(self):
        rng = np.random.default_rng(2)
        x = np.zeros((100, 10, 80), dtype=complex)
        y = apply_channel(x, TapChannel.from_taps([1], 64), 0.3, rng)
        assert np.mean(np.abs(y) ** 2) == pytest.approx(0.3, rel=0.02)

    def test_noise_needs_rng(self, rng):
        with pytest.raises(ValueError):
            apply_channel(cn(rng, (1, 8)), TapChannel.from_taps([1], 8), 0.1)

    def test_cp_memory_check(self, rng):
        with pytest.raises(ValueError):
            apply_channel(cn(rng, (1, 10)), TapChannel.from_taps([1, 1, 1], 8), 0.0, cp_len=1)


class TestSteering:
    def test_zero_delay(self):
        a, b = steering(0.0, 0.0, CONFIG_1)
        assert np.allclose(a, 1) and np.allclose(b, 1)
        assert a.shape == (64,) and b.shape == (8,)

    def test_delay_alias(self):
        a, _ = steering(1 / CONFIG_1.subcarrier_spacing_hz, 0.0, CONFIG_1)
        assert np.allclose(a, 1)

    def test_half_cycle_doppler(self):
        cfg = GridConfig(symbols_per_frame=2)
        _, b = steering(0.0, 1 / (2 * cfg.total_symbol_duration), cfg)
        assert np.allclose(b, [1, -1])


class TestSensingObserve:
    def test_unit_path(self, rng):
        S = cn(rng, (8, 64))
        Y = sensing_observe(S, PathSet([Echo(1.0, 0.0, 0.0)]), 0.0, CONFIG_1)
        assert np.allclose(Y, S)

    def test_one_sample_delay(self, rng):
        S = cn(rng, (8, 64))
        tau = 1 / (64 * CONFIG_1.subcarrier_spacing_hz)
        Y = sensing_observe(S, PathSet([Echo(1.0, tau, 0.0)]), 0.0, CONFIG_1)
        assert np.allclose(Y, S * np.exp(-2j * np.pi * np.arange(64) / 64))

    def test_superposition(self, rng):
        S = cn(rng, (8, 64))
        e1, e2 = Echo(0.5j, 1e-7, 300.0), Echo(-0.8, 2e-7, -500.0)
        Y = sensing_observe(S, PathSet([e1, e2]), 0.0, CONFIG_1)
        Y1 = sensing_observe(S, PathSet([e1]), 0.0, CONFIG_1)
        Y2 = sensing_observe(S, PathSet([e2]), 0.0, CONFIG_1)
        assert np.allclose(Y, Y1 + Y2)

    def test_noise_needs_rng(self, rng):
        with pytest.raises(ValueError):
            sensing_observe(cn(rng, (8, 64)), PathSet([]), 0.1, CONFIG_1)

    def test_pathset_io(self, tmp_path):
        ps = PathSet([Echo(0.3 - 0.2j, 1e-7, 120.5), Echo(1.0, 5e-7, -3.0)])
        ps.save(tmp_path / "p.json")
        back = PathSet.load(tmp_path / "p.json")
        assert np.array_equal(back.betas, ps.betas)
        assert np.array_equal(back.taus, ps.taus)
        assert np.array_equal(back.nus, ps.nus)
        assert len(back) == 2

    def test_pathset_validate(self):
        cfg = CONFIG_1
        PathSet([Echo(1, 0.5 * cfg.cp_duration, 0.1 / cfg.total_symbol_duration)]).validate(cfg)
        with pytest.raises(ValueError):
            PathSet([Echo(1, cfg.cp_duration, 0.0)]).validate(cfg)
        with pytest.raises(ValueError):
            PathSet([Echo(1, 0.0, 0.5 / cfg.total_symbol_duration)]).validate(cfg)

    @given(st.floats(0, 1e-6), st.floats(-2000, 2000), st.integers(0, 2**32 - 1))
    def test_modulus_preserved(self, tau, nu, seed):
        S = cn(np.random.default_rng(seed), (8, 64))
        Y = sensing_observe(S, PathSet([Echo(1.0, tau, nu)]), 0.0, CONFIG_1)
        assert np.allclose(np.abs(Y), np.abs(S))

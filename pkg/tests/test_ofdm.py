import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import crandn
from dbuofdm import modem, ofdm
from dbuofdm.channel import TapChannel, apply_channel
from dbuofdm.grid import CONFIG_3, GridConfig, build_grid
from dbuofdm.unitary import HouseholderParams, UdataApplier, assemble_global, identity_transform


class TestModulate:
    def test_single_tone_constant_envelope(self):
        S = np.zeros(64, dtype=complex)
        S[5] = 1.0
        x = ofdm.modulate(S)
        assert np.allclose(np.abs(x), 1 / 8)

    def test_cp_is_tail_copy(self, rng):
        x = ofdm.modulate(crandn(rng, (3, 64)), cp_len=16)
        assert x.shape == (3, 80)
        assert np.array_equal(x[:, :16], x[:, -16:])

    def test_dense_oracle(self, grid1, rng):
        p = HouseholderParams.random(46, 6, 1, rng, phase_scale=1.0)
        T = assemble_global(UdataApplier(p), grid1)
        S = ofdm.build_freq_grid(grid1, crandn(rng, (4, 46)))
        ref = S @ (oracles.dft_matrix(64).conj().T @ oracles.dense_global(p, grid1)).T
        assert np.allclose(ofdm.modulate(S, T), ref, atol=1e-13)

    def test_rejects_energy_on_nulls(self, grid1):
        S = np.zeros(64, dtype=complex)
        S[grid1.null_idx[0]] = 1
        with pytest.raises(ValueError):
            ofdm.modulate(S, identity_transform(grid1))

    def test_demodulate_inverts(self, rng):
        S = crandn(rng, (2, 8, 64))
        assert np.allclose(ofdm.demodulate(ofdm.modulate(S, cp_len=16), 64, 16), S)

    def test_demodulate_length_check(self):
        with pytest.raises(ValueError):
            ofdm.demodulate(np.zeros(79), 64, 16)

    def test_shift_theorem(self, rng):
        S = crandn(rng, 64)
        x = ofdm.modulate(S, cp_len=16)[None]
        y = apply_channel(x, TapChannel.from_taps([0, 1], 64), 0.0)
        Y = ofdm.demodulate(y, 64, 16)[0]
        assert np.allclose(Y, np.exp(-2j * np.pi * np.arange(64) / 64) * S)

    def test_two_tap_diagonalization(self, grid1, rng):
        p = HouseholderParams.random(46, 4, 1, rng)
        T = assemble_global(UdataApplier(p), grid1)
        S = ofdm.build_freq_grid(grid1, crandn(rng, (8, 46)))
        h = np.array([0.8 - 0.3j, 0.4j])
        y = apply_channel(ofdm.modulate(S, T, 16), TapChannel.from_taps(h, 64), 0.0)
        Y = ofdm.demodulate(y, 64, 16)
        F = oracles.dft_matrix(64)
        C = oracles.circulant(h, 64)
        ref = (F @ C @ F.conj().T @ T(S).T).T
        assert np.allclose(Y, ref, atol=1e-12)
        lam = np.fft.fft(h, 64)
        assert np.allclose(Y, lam * T(S), atol=1e-12)

    def test_random_frame(self, grid1, rng):
        fr = ofdm.random_frame(grid1, modem.constellation(16), rng, lead=(2,))
        assert fr.freq_grid.shape == (2, 8, 64)
        assert fr.time_samples.shape == (2, 8, 80)
        assert fr.payload_bits.shape == (2, 8, 46 * 4)
        assert np.all(fr.freq_grid[..., grid1.null_idx] == 0)
        assert np.allclose(fr.freq_grid[..., grid1.pilot_idx], grid1.pilot_symbols)


class TestPapr:
    def test_constant_envelope(self):
        assert ofdm.papr_db(np.exp(1j * np.arange(10))) == pytest.approx(0.0, abs=1e-12)

    def test_impulse(self):
        assert ofdm.papr_db([1, 0, 0, 0]) == pytest.approx(6.0206, abs=1e-4)

    def test_all_ones_grid(self):
        x = ofdm.modulate(np.ones(64))
        assert ofdm.papr_db(x) == pytest.approx(18.062, abs=1e-3)

    def test_zero_signal(self):
        with pytest.raises(ValueError):
            ofdm.papr_db(np.zeros(4))

    def test_ccdf_counts(self):
        assert ofdm.ccdf([3, 5, 7], [4])[0] == pytest.approx(2 / 3)
        assert ofdm.ccdf([3, 5, 7], [2])[0] == 1.0
        assert ofdm.ccdf([3, 5, 7], [8])[0] == 0.0

    @given(st.lists(st.floats(-5, 20), min_size=1, max_size=50))
    def test_ccdf_monotone(self, samples):
        thr = np.linspace(-6, 21, 40)
        c = ofdm.ccdf(samples, thr)
        assert np.all(np.diff(c) <= 0)
        assert c[0] == 1.0 and c[-1] == 0.0

    def test_papr_at_ccdf(self):
        s = np.arange(100.0)
        v = ofdm.papr_at_ccdf(s, 0.05)
        assert ofdm.ccdf(s, [v])[0] <= 0.05
        assert ofdm.ccdf(s, [v - 1])[0] > 0.05


class TestPaprLoss:
    def test_below_target(self):
        x = np.exp(1j * np.arange(16))[None]
        assert ofdm.papr_loss(x, 3.0) == 0.0

    def _with_papr(self, db, n=64):
        peak = 10 ** (db / 10)
        # one sample of power peak*mean, rest equal; solve for their power
        rest = (n - peak) / (n - 1)
        x = np.full(n, np.sqrt(rest), dtype=complex)
        x[0] = np.sqrt(peak)
        return x

    def test_one_db_over(self):
        x = self._with_papr(7.0)[None]
        assert ofdm.papr_db(x)[0] == pytest.approx(7.0)
        assert ofdm.papr_loss(x, 6.0, 2) == pytest.approx(1.0)

    def test_mean_over_symbols(self):
        quiet = np.exp(1j * np.arange(64))
        x = np.stack([self._with_papr(6.5), self._with_papr(7.5), quiet, quiet])
        assert ofdm.papr_loss(x, 6.0, 1) == pytest.approx(0.5)

    def test_infinite_target(self, rng):
        assert ofdm.papr_loss(crandn(rng, (5, 64)), np.inf) == 0.0

    def test_bad_hardness(self, rng):
        with pytest.raises(ValueError):
            ofdm.papr_loss(crandn(rng, (1, 8)), 3.0, 3)


class TestOversample:
    def test_factor_one(self, rng):
        S = crandn(rng, (3, 64))
        assert np.allclose(ofdm.oversample(S, 1), ofdm.modulate(S))

    def test_single_tone(self):
        S = np.zeros(64, dtype=complex)
        S[60] = 1
        assert ofdm.papr_db(ofdm.oversample(S, 4)) == pytest.approx(0.0, abs=1e-10)

    def test_contains_nyquist_samples(self, grid1, rng):
        S = ofdm.build_freq_grid(grid1, crandn(rng, 46))
        x4 = ofdm.oversample(S, 4)
        assert np.allclose(x4[::4], ofdm.modulate(S))
        assert np.mean(np.abs(x4) ** 2) == pytest.approx(np.mean(np.abs(ofdm.modulate(S)) ** 2))

    def test_bad_factor(self):
        with pytest.raises(ValueError):
            ofdm.oversample(np.ones(4), 0)
        with pytest.raises(ValueError):
            ofdm.oversample(np.ones(4), 1.5)

    def test_oversampling_raises_papr(self, grid1, rng):
        S = ofdm.build_freq_grid(grid1, modem.map_bits(modem.random_bits(rng, (2000, 184)),
                                                      modem.constellation(16)))
        p1 = ofdm.papr_db(ofdm.oversample(S, 1))
        p4 = ofdm.papr_db(ofdm.oversample(S, 4))
        assert np.all(p4 >= p1 - 1e-9)
        assert ofdm.papr_at_ccdf(p4, 1e-2) > ofdm.papr_at_ccdf(p1, 1e-2)


class TestDfts:
    def test_single_carrier_property(self):
        g = build_grid(GridConfig(64, 16, 0, 0, 0, 2))
        x = ofdm.dfts_modulate(np.ones((2, 64)), g, "comb")
        assert np.all(ofdm.papr_db(x[..., 16:]) <= 0.5)

    def test_contiguous_band_low_papr(self):
        # N_data contiguous bins out of a wider FFT: constant input is a pure tone
        g = build_grid(GridConfig(64, 16, 8, 0, 0, 2))
        x = ofdm.dfts_modulate(np.ones((2, g.n_data)), g, "comb")
        assert np.all(ofdm.papr_db(x[..., 16:]) <= 0.5)

    def test_block_pilot_symbol(self, grid1):
        bins, n_sym = ofdm.dfts_layout(grid1, "block")
        assert n_sym == 7 and len(bins) == 54
        S = ofdm.dfts_freq_grid(np.zeros((7, 54)), grid1, "block")
        assert np.count_nonzero(S[1:]) == 0
        assert np.allclose(np.abs(np.fft.ifft(S[0, bins], norm="ortho")), 1.0)
        assert np.all(S[0, grid1.null_idx] == 0)

    def test_comb_pilots_punctured(self, grid1, rng):
        S = ofdm.dfts_freq_grid(crandn(rng, (8, 46)), grid1, "comb")
        assert np.allclose(S[:, grid1.pilot_idx], grid1.pilot_symbols)
        assert np.all(S[:, grid1.null_idx] == 0)

    def test_spreading_is_unitary(self, grid1, rng):
        d = crandn(rng, (7, 54))
        S = ofdm.dfts_freq_grid(d, grid1, "block")
        bins, _ = ofdm.dfts_layout(grid1, "block")
        assert np.allclose(np.fft.ifft(S[1:, bins], axis=-1, norm="ortho"), d)

    def test_bad_mode_and_shape(self, grid1):
        with pytest.raises(ValueError):
            ofdm.dfts_layout(grid1, "lattice")
        with pytest.raises(ValueError):
            ofdm.dfts_freq_grid(np.zeros((8, 54)), grid1, "block")
        with pytest.raises(ValueError):
            ofdm.dfts_layout(build_grid(GridConfig(64, 16, 4, 2, 8, 1)), "block")


@pytest.mark.slow
class TestOfdmCcdfReference:
    def test_n256_tail(self):
        """Classic OFDM tail, read with 4x oversampling (Nyquist-rate samples miss peaks)."""
        g = build_grid(CONFIG_3)
        rng = np.random.default_rng(3)
        c = modem.constellation(16)
        papr = []
        for _ in range(20):
            bits = modem.random_bits(rng, (5000, 206 * 4))
            S = ofdm.build_freq_grid(g, modem.map_bits(bits, c))
            papr.append(ofdm.papr_db(ofdm.oversample(S, 4)))
        v = ofdm.papr_at_ccdf(np.concatenate(papr), 1e-3)
        assert 11.0 <= v <= 12.0

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from dbuofdm.modem import (CLAMP_EPS, bce_loss, constellation, hard_demap, map_bits,
                           random_bits, soft_demap)

ORDERS = [4, 16, 64]


class TestConstellation:
    @pytest.mark.parametrize("order", ORDERS)
    def test_unit_energy(self, order):
        c = constellation(order)
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
        assert len(np.unique(c.points)) == order

    @pytest.mark.parametrize("order", ORDERS)
    def test_gray_neighbours(self, order):
        """Points adjacent along either axis differ in exactly one bit."""
        c = constellation(order)
        d_min = np.min(np.abs(c.points[:, None] - c.points[None, :]) + 10 * np.eye(order))
        for i in range(order):
            for j in range(order):
                if i != j and np.isclose(abs(c.points[i] - c.points[j]), d_min):
                    assert np.sum(c.labels[i] != c.labels[j]) == 1

    def test_names(self):
        assert np.array_equal(constellation("QPSK").points, constellation(4).points)
        assert constellation("16qam").name == "16qam"
        with pytest.raises(ValueError):
            constellation("8psk")
        with pytest.raises(ValueError):
            constellation(32)


class TestMapBits:
    def test_qpsk_zero(self):
        assert map_bits([0, 0], constellation(4))[0] == pytest.approx((1 + 1j) / np.sqrt(2))

    def test_16qam_corner(self):
        s = map_bits([0, 0, 0, 0], constellation(16))[0]
        assert abs(s) ** 2 == pytest.approx(1.8)
        assert s.real > 0 and s.imag > 0

    def test_shapes(self, rng):
        bits = random_bits(rng, (3, 5, 16))
        assert map_bits(bits, constellation(16)).shape == (3, 5, 4)

    def test_bad_bits(self):
        with pytest.raises(ValueError):
            map_bits([0, 1, 1], constellation(4))
        with pytest.raises(ValueError):
            map_bits([0, 2], constellation(4))

    @given(st.sampled_from(ORDERS), st.integers(0, 2**32 - 1))
    def test_round_trip(self, order, seed):
        c = constellation(order)
        bits = random_bits(np.random.default_rng(seed), (7, 6 * c.bits_per_symbol))
        assert np.array_equal(hard_demap(map_bits(bits, c), c), bits)


class TestSoftDemap:
    def test_concentrates_on_label(self):
        c = constellation(16)
        for i in range(16):
            p = soft_demap(c.points[i:i + 1], 1e-6, c)
            assert np.allclose(p, c.labels[i], atol=1e-9)

    def test_qpsk_origin(self):
        assert np.allclose(soft_demap([0j], 1.0, constellation(4)), 0.5)

    def test_brute_force_16qam(self):
        c = constellation(16)
        y = 0.3 + 0.1j
        ref = oracles.posterior_bit_one(y, 0.5, c.points, c.labels)
        assert np.allclose(soft_demap([y], 0.5, c), ref, rtol=1e-12)

    @given(st.sampled_from(ORDERS), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.01, 3))
    def test_matches_exhaustive_sum(self, order, re, im, nv):
        c = constellation(order)
        y = complex(re, im)
        ref = np.clip(oracles.posterior_bit_one(y, nv, c.points, c.labels), CLAMP_EPS, 1 - CLAMP_EPS)
        assert np.allclose(soft_demap([y], nv, c), ref, rtol=1e-9, atol=1e-12)

    def test_clamped(self):
        c = constellation(4)
        p = soft_demap([10 + 10j], 1e-4, c)
        assert np.all(p >= CLAMP_EPS) and np.all(p <= 1 - CLAMP_EPS)

    def test_per_entry_noise(self, rng):
        c = constellation(16)
        y = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        nv = np.linspace(0.1, 1, 5)
        p = soft_demap(y, nv, c).reshape(5, 4)
        for i in range(5):
            assert np.allclose(p[i], soft_demap(y[i:i + 1], nv[i], c))

    def test_nonpositive_noise(self):
        with pytest.raises(ValueError):
            soft_demap([0j], 0.0, constellation(4))


class TestBce:
    def test_perfect(self):
        assert bce_loss([1, 0, 1], [1, 0, 1]) == pytest.approx(0.0, abs=1e-10)

    def test_half(self):
        assert bce_loss([1, 0, 0, 1], [0.5] * 4) == pytest.approx(1.0)

    def test_worked_value(self):
        ref = -0.5 * (np.log2(0.9) + np.log2(0.8))
        assert bce_loss([1, 0], [0.9, 0.2]) == pytest.approx(ref)
        assert bce_loss([1, 0], [0.9, 0.2]) == pytest.approx(0.2370, abs=5e-5)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            bce_loss([1, 0], [0.5])

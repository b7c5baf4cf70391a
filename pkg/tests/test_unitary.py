import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import crandn
from dbuofdm.grid import CONFIG_1, GridConfig, build_grid
from dbuofdm.unitary import (MATERIALIZE_CAP, HouseholderParams, UdataApplier, assemble_global,
                             build_udata_applier, householder_apply, identity_transform,
                             load_model, materialize, save_model, split_blocks)


@st.composite
def param_draws(draw, max_n=40, max_k=12):
    n = draw(st.integers(1, max_n))
    k = draw(st.integers(0, max_k))
    b = draw(st.integers(1, n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    p = HouseholderParams.random(n, k, b, rng, phase_scale=1.0)
    return p, rng


class TestHouseholderApply:
    def test_first_axis_vector(self, rng):
        x = crandn(rng, 5)
        e1 = np.eye(5)[0]
        out = householder_apply(e1, x)
        assert np.allclose(out, np.r_[-x[0], x[1:]])

    def test_orthogonal_input_fixed(self):
        v = np.array([1, 1j, 0, 0])
        u = v.conj() / np.linalg.norm(v)
        x = np.array([1, 1j, 3, -2], dtype=complex)   # u^H x = 0
        assert abs(np.vdot(u, x)) < 1e-15
        assert np.allclose(householder_apply(v, x), x)

    def test_dense_oracle(self):
        rng = np.random.default_rng(7)
        v, x = crandn(rng, 9), crandn(rng, 9)
        assert np.allclose(householder_apply(v, x), oracles.reflection_matrix(v) @ x, atol=1e-14)

    def test_zero_vector(self):
        with pytest.raises(ValueError):
            householder_apply(np.zeros(3), np.ones(3))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            householder_apply(np.ones(3), np.ones(4))


class TestParams:
    def test_split_blocks(self):
        assert split_blocks(46, 1) == (46,)
        assert split_blocks(46, 4) == (12, 12, 11, 11)
        assert split_blocks(5, 5) == (1,) * 5
        with pytest.raises(ValueError):
            split_blocks(5, 6)
        with pytest.raises(ValueError):
            split_blocks(5, 0)

    def test_identity_requires_even_k(self):
        with pytest.raises(ValueError):
            HouseholderParams.identity(8, 3)

    def test_bad_phase_length(self):
        with pytest.raises(ValueError):
            HouseholderParams(1, (4,), [np.ones((1, 4))], np.zeros(3))

    def test_bad_block_count(self):
        with pytest.raises(ValueError):
            HouseholderParams(1, (2, 2), [np.ones((1, 4))], np.zeros(4))

    def test_save_load_exact(self, tmp_path, rng):
        p = HouseholderParams.random(46, 5, 3, rng, phase_scale=0.7)
        save_model(p, tmp_path / "m.json", extra={"task": "papr"})
        q = load_model(tmp_path / "m.json")
        assert q.blocks == p.blocks and q.k_factors == p.k_factors
        for a, b in zip(p.v, q.v):
            assert np.array_equal(a, b)
        assert np.array_equal(p.d, q.d)

    def test_load_rejects_bad_version(self, rng):
        d = HouseholderParams.random(4, 1, 1, rng).to_dict()
        d["version"] = 99
        with pytest.raises(ValueError):
            HouseholderParams.from_dict(d)

    def test_load_rejects_inconsistent(self, rng):
        d = HouseholderParams.random(4, 2, 1, rng).to_dict()
        d["n_data"] = 5
        with pytest.raises(ValueError):
            HouseholderParams.from_dict(d)
        d = HouseholderParams.random(4, 2, 1, rng).to_dict()
        d["v"] = d["v"][:1]
        with pytest.raises(ValueError):
            HouseholderParams.from_dict(d)


class TestApplier:
    def test_k0_identity(self, rng):
        app = build_udata_applier(HouseholderParams.identity(10))
        x = crandn(rng, (3, 10))
        assert np.array_equal(app.forward(x), x)
        assert np.array_equal(app.adjoint(x), x)

    def test_paired_identity(self, rng):
        app = UdataApplier(HouseholderParams.identity(10, 4, 2))
        x = crandn(rng, 10)
        assert np.allclose(app.forward(x), x, atol=1e-15)

    def test_matches_dense_product(self):
        rng = np.random.default_rng(11)
        p = HouseholderParams.random(20, 6, 3, rng, phase_scale=1.0)
        ref = oracles.dense_udata(p)
        assert np.allclose(materialize(UdataApplier(p)), ref, atol=1e-13)
        assert np.allclose(materialize(UdataApplier(p), adjoint=True), ref.conj().T, atol=1e-13)

    def test_materialize_identity(self):
        assert np.array_equal(materialize(UdataApplier(HouseholderParams.identity(7))), np.eye(7))

    def test_materialize_cap(self):
        p = HouseholderParams.identity(MATERIALIZE_CAP + 1)
        with pytest.raises(ValueError):
            materialize(UdataApplier(p))

    def test_wrong_width(self, rng):
        app = UdataApplier(HouseholderParams.random(8, 2, 1, rng))
        with pytest.raises(ValueError):
            app.forward(np.zeros(7))

    def test_near_zero_vector_is_identity(self, caplog):
        v = [np.array([[1e-14, 0, 0], [1, 2, 3j]])]
        p = HouseholderParams(2, (3,), v, np.zeros(3))
        with caplog.at_level(logging.WARNING):
            app = UdataApplier(p)
        assert "near zero" in caplog.text
        x = np.array([1, 2j, 3])
        assert np.allclose(app.forward(x), householder_apply(v[0][1], x))

    def test_batched_leading_axes(self, rng):
        p = HouseholderParams.random(12, 3, 2, rng)
        app = UdataApplier(p)
        x = crandn(rng, (2, 3, 12))
        out = app.forward(x)
        assert out.shape == x.shape
        assert np.allclose(out[1, 2], app.forward(x[1, 2]))
        assert np.array_equal(x, x.copy())   # input untouched

    @given(param_draws())
    def test_unitary_property(self, draw):
        p, rng = draw
        U = materialize(UdataApplier(p))
        assert np.linalg.norm(U.conj().T @ U - np.eye(p.n_data)) <= 1e-10
        x = crandn(rng, p.n_data)
        app = UdataApplier(p)
        assert np.linalg.norm(app.adjoint(app.forward(x)) - x) <= 1e-10 * np.linalg.norm(x)
        assert np.linalg.norm(app.forward(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)

    @given(param_draws(max_n=16, max_k=6))
    def test_dense_oracle_property(self, draw):
        p, _ = draw
        assert np.allclose(materialize(UdataApplier(p)), oracles.dense_udata(p), atol=1e-12)

    @given(st.integers(1, 30), st.integers(0, 2**32 - 1))
    def test_single_block_size_one_is_phase(self, n, seed):
        rng = np.random.default_rng(seed)
        p = HouseholderParams.random(n, 3, n, rng, phase_scale=1.0)
        U = materialize(UdataApplier(p))
        # 1x1 reflections are -1; three of them give -exp(jd)
        assert np.allclose(U, np.diag(-np.exp(1j * p.d)), atol=1e-13)


class TestGlobalTransform:
    def test_zero_data_passthrough(self, grid1, rng):
        p = HouseholderParams.random(46, 4, 1, rng)
        T = assemble_global(UdataApplier(p), grid1)
        s = crandn(rng, 64)
        s[grid1.data_idx] = 0
        assert np.array_equal(T.apply(s), s)

    def test_dense_global(self, grid1, rng):
        p = HouseholderParams.random(46, 4, 2, rng, phase_scale=1.0)
        T = assemble_global(UdataApplier(p), grid1)
        s = crandn(rng, (5, 64))
        ref = oracles.dense_global(p, grid1)
        assert np.allclose(T(s), s @ ref.T, atol=1e-13)
        assert np.allclose(T.H(s), s @ ref.conj(), atol=1e-13)
        assert np.allclose(T.H(T(s)), s, atol=1e-13)

    def test_identity_transform(self, grid1, rng):
        s = crandn(rng, 64)
        assert np.array_equal(identity_transform(grid1)(s), s)

    def test_size_checks(self, grid1, rng):
        with pytest.raises(ValueError):
            assemble_global(UdataApplier(HouseholderParams.identity(45)), grid1)
        T = identity_transform(grid1)
        with pytest.raises(ValueError):
            T(np.zeros(63))

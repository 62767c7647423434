"""Backend agreement and index-math checks for the hot kernels.

kernels_numpy defines the semantics; kernels_numba must reproduce them. Both
are imported directly so the tests are independent of the BLENDSDF_BACKEND
routing (which test_backend_flag covers separately).
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blendsdf import kernels_numba as knb
from blendsdf import kernels_numpy as knp
from blendsdf import synth


def random_case(seed, n=257, res=16, channels=4, tsize=512, hashed=True, dtype=np.float32):
    rng = np.random.default_rng(seed)
    table = rng.normal(size=(tsize if hashed else res**3, channels)).astype(dtype)
    u = rng.uniform(-1.0, res + 1.0, size=(n, 3)).astype(dtype)  # includes out-of-range
    return table, u


class TestBackendAgreement:
    @pytest.mark.parametrize("hashed", [False, True])
    @pytest.mark.parametrize("seed", range(3))
    def test_grid_fwd(self, seed, hashed):
        table, u = random_case(seed, hashed=hashed)
        a = np.zeros((u.shape[0], table.shape[1]), table.dtype)
        b = np.zeros_like(a)
        knb.grid_fwd(table, u, 16, hashed, 512, a)
        knp.grid_fwd(table, u, 16, hashed, 512, b)
        np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-6)

    @pytest.mark.parametrize("seed", range(3))
    def test_grid_fwd_jac(self, seed):
        table, u = random_case(seed)
        a = np.zeros((u.shape[0], table.shape[1], 4), table.dtype)
        b = np.zeros_like(a)
        js = np.float32(1.375)
        knb.grid_fwd_jac(table, u, 16, True, 512, js, a)
        knp.grid_fwd_jac(table, u, 16, True, 512, js, b)
        np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-6)

    @pytest.mark.parametrize("seed", range(3))
    def test_grid_bwd_table(self, seed):
        table, u = random_case(seed)
        rng = np.random.default_rng(seed + 100)
        gf = rng.normal(size=(u.shape[0], 4)).astype(np.float32)
        gj = rng.normal(size=(u.shape[0], 4, 3)).astype(np.float32)
        js = np.float32(0.75)
        a = np.zeros_like(table)
        b = np.zeros_like(table)
        knb.grid_bwd_table(u, 16, True, 512, gf, gj, js, a)
        knp.grid_bwd_table(u, 16, True, 512, gf, gj, js, b)
        np.testing.assert_allclose(a, b, rtol=1e-4, atol=1e-5)

    @pytest.mark.parametrize("seed", range(3))
    def test_grid_bwd_u(self, seed):
        table, u = random_case(seed)
        rng = np.random.default_rng(seed + 200)
        gf = rng.normal(size=(u.shape[0], 4)).astype(np.float32)
        a = knb.grid_bwd_u(table, u, 16, True, 512, gf)
        b = knp.grid_bwd_u(table, u, 16, True, 512, gf)
        np.testing.assert_allclose(a, b, rtol=1e-4, atol=1e-5)

    def test_strided_views_accepted(self):
        # callers hand buffer slices to the kernels; both backends must agree
        table, u = random_case(7)
        big_a = np.zeros((u.shape[0], 12), np.float32)
        big_b = np.zeros_like(big_a)
        knb.grid_fwd(table, u, 16, True, 512, big_a[:, 4:8])
        knp.grid_fwd(table, u, 16, True, 512, big_b[:, 4:8])
        np.testing.assert_allclose(big_a, big_b, rtol=1e-6, atol=1e-6)
        assert np.all(big_a[:, :4] == 0) and np.all(big_a[:, 8:] == 0)

    def test_trace_agreement(self):
        scene = synth.preset_scene("mirror_ball")
        ptypes, pdatas, mats = scene.arrays()
        bottom, top, bdirs, bcols, power = scene.env_arrays()
        rng = np.random.default_rng(3)
        origins = np.tile([0.0, -2.5, 0.6], (400, 1))
        dirs = rng.normal(size=(400, 3))
        dirs[:, 1] = np.abs(dirs[:, 1]) + 0.5
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        args = (ptypes, pdatas, mats, bottom, top, bdirs, bcols, power,
                synth.TRACE_TOL, synth.TRACE_MAX_STEPS, float(scene.far))
        ra, da, na, ha, pa, sa = knb.trace(origins, dirs, *args)
        rb, db, nb_, hb, pb, sb = knp.trace(origins, dirs, *args)
        same = ha.astype(bool) == hb.astype(bool)
        # march step order differs slightly between the two formulations at
        # grazing rays; require near-total agreement and identical shading
        assert same.mean() > 0.99
        np.testing.assert_allclose(ra[same], rb[same], atol=1e-6)
        hit = ha.astype(bool) & same
        np.testing.assert_allclose(da[hit], db[hit], atol=1e-4)
        np.testing.assert_allclose(na[hit], nb_[hit], atol=1e-4)
        assert np.array_equal(pa[hit], pb[hit])


class TestIndexMath:
    def test_dense_layout_row_major_x_fastest(self):
        assert knp.slots(0, 0, 0, 32, False, 0) == 0
        assert knp.slots(1, 0, 0, 32, False, 0) == 1
        assert knp.slots(0, 1, 0, 32, False, 0) == 32
        assert knp.slots(0, 0, 1, 32, False, 0) == 32 * 32

    def test_hash_deterministic(self):
        a = knp.slots(5, 9, 2, 64, True, 4096)
        b = knp.slots(5, 9, 2, 64, True, 4096)
        assert a == b

    def test_hash_primes(self):
        assert knp.HASH_PRIMES == (1, 2654435761, 805459861)

    def test_hash_quality(self):
        # load factor over random cells: max bucket < 3x the mean bucket
        rng = np.random.default_rng(0)
        tsize = 1 << 12
        cells = rng.integers(0, 4096, size=(100_000, 3))
        idx = knp.slots(cells[:, 0], cells[:, 1], cells[:, 2], 4096, True, tsize)
        counts = np.bincount(idx, minlength=tsize)
        assert counts.max() < 3.0 * counts.mean()

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_hash_in_range(self, seed):
        rng = np.random.default_rng(seed)
        cell = rng.integers(0, 5000, size=3)
        s = knp.slots(cell[0], cell[1], cell[2], 8192, True, 999)
        assert 0 <= s < 999

    def test_corner_clamp(self):
        # out-of-range u uses the nearest valid cell, no out-of-bounds reads
        table = np.ones((8, 2), np.float32)
        u = np.array([[-5.0, 0.0, 0.0], [99.0, 1.0, 1.0]], np.float32)
        out = np.zeros((2, 2), np.float32)
        knp.grid_fwd(table, u, 2, False, 0, out)
        assert np.all(np.isfinite(out))


class TestKernelGradients:
    def test_bwd_table_is_fwd_transpose(self):
        # <g, fwd(table)> must equal <bwd_table(g), table> (adjoint identity)
        table, u = random_case(11, n=64, dtype=np.float64)
        u = u.astype(np.float64)
        g = np.random.default_rng(1).normal(size=(64, 4))
        out = np.zeros((64, 4))
        knp.grid_fwd(table.astype(np.float64), u, 16, True, 512, out)
        gt = np.zeros((512, 4))
        knp.grid_bwd_table(u, 16, True, 512, g, None, 1.0, gt)
        lhs = float((g * out).sum())
        rhs = float((gt * table).sum())
        assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(lhs))

    def test_bwd_u_finite_difference(self):
        rng = np.random.default_rng(4)
        table = rng.normal(size=(512, 4))
        u = rng.uniform(1.0, 13.9, size=(20, 3))
        u = np.where(np.abs(u - np.round(u)) < 0.05, u + 0.1, u)  # avoid cell edges
        g = rng.normal(size=(20, 4))
        gu = knp.grid_bwd_u(table, u, 16, True, 512, g)
        eps = 1e-6
        for i in range(5):
            for k in range(3):
                up, um = u.copy(), u.copy()
                up[i, k] += eps
                um[i, k] -= eps
                op = np.zeros((20, 4)); om = np.zeros((20, 4))
                knp.grid_fwd(table, up, 16, True, 512, op)
                knp.grid_fwd(table, um, 16, True, 512, om)
                fd = ((op - om) * g).sum() / (2 * eps)
                assert abs(fd - gu[i, k]) < 1e-5 * max(1.0, abs(fd))

    def test_jac_matches_fwd_difference(self):
        rng = np.random.default_rng(5)
        table = rng.normal(size=(512, 4))
        u = rng.uniform(1.0, 13.9, size=(10, 3))
        u = np.where(np.abs(u - np.round(u)) < 0.05, u + 0.1, u)
        pack = np.zeros((10, 4, 4))
        knp.grid_fwd_jac(table, u, 16, True, 512, 1.0, pack)
        eps = 1e-6
        for k in range(3):
            up, um = u.copy(), u.copy()
            up[:, k] += eps
            um[:, k] -= eps
            op = np.zeros((10, 4)); om = np.zeros((10, 4))
            knp.grid_fwd(table, up, 16, True, 512, op)
            knp.grid_fwd(table, um, 16, True, 512, om)
            np.testing.assert_allclose(pack[:, :, 1 + k], (op - om) / (2 * eps), atol=1e-5)


class TestDeterminism:
    def test_repeat_calls_bit_identical(self):
        table, u = random_case(21, n=4096)
        a = np.zeros((4096, 4), np.float32)
        b = np.zeros_like(a)
        knb.grid_fwd(table, u, 16, True, 512, a)
        knb.grid_fwd(table, u, 16, True, 512, b)
        assert np.array_equal(a, b)
        pa = np.zeros((4096, 4, 4), np.float32)
        pb = np.zeros_like(pa)
        knb.grid_fwd_jac(table, u, 16, True, 512, np.float32(1.0), pa)
        knb.grid_fwd_jac(table, u, 16, True, 512, np.float32(1.0), pb)
        assert np.array_equal(pa, pb)

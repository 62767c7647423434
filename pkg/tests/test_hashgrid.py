"""Feature pyramid: level layout, unlock schedule, encoding and gradients."""

import numpy as np
import pytest

from blendsdf import autodiff as ad
from blendsdf import hashgrid


def small_pyramid(seed=0, dtype=np.float64, **kw):
    args = dict(levels=4, base_res=4, max_res=16, channels=2, table_size=64,
                l_init=2, unlock_frac=0.02, dtype=dtype)
    args.update(kw)
    return hashgrid.Pyramid(np.random.default_rng(seed), **args)


class TestLayout:
    def test_level_resolutions_geometric(self):
        res = hashgrid.level_resolutions(15, 32, 4096)
        assert res[0] == 32 and res[-1] == 4096
        assert res == sorted(res)
        # growth ratio is near-constant: 4096/32 = 2^7 over 14 steps
        ratios = [res[i + 1] / res[i] for i in range(10)]
        assert all(1.3 < r < 1.5 for r in ratios)

    def test_named_resolutions(self):
        res = hashgrid.level_resolutions(15, 32, 4096)
        assert res[2] == 64
        assert res[7] == 362
        assert res[14] == 4096

    def test_dense_vs_hashed_split(self):
        pyr = hashgrid.Pyramid(np.random.default_rng(0), levels=15, base_res=32,
                               max_res=4096, channels=4, table_size=2**19)
        for l, res in enumerate(pyr.resolutions):
            dense = res**3 <= 2**19
            assert pyr.hashed[l] == (not dense)
            expect = res**3 if dense else 2**19
            assert pyr.tables[l].values.shape == (expect, 4)

    def test_feature_len(self):
        assert small_pyramid().feature_len == 8

    def test_init_range(self):
        pyr = small_pyramid(seed=3, dtype=np.float32)
        for t in pyr.tables:
            assert np.abs(t.values).max() <= 1e-4


class TestUnlockSchedule:
    def test_paper_endpoints(self):
        pyr = hashgrid.Pyramid(np.random.default_rng(0), levels=15, base_res=32,
                               max_res=4096, l_init=4, unlock_frac=0.02)
        assert pyr.active_levels(0.0) == 4
        assert pyr.active_levels(0.05) == 6
        assert pyr.active_levels(0.25) == 15

    def test_monotone_and_saturates(self):
        pyr = hashgrid.Pyramid(np.random.default_rng(0), levels=15, base_res=32,
                               max_res=4096, l_init=4, unlock_frac=0.02)
        ts = np.linspace(0, 1, 101)
        vals = [pyr.active_levels(t) for t in ts]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert pyr.active_levels(0.22) == 15


class TestEncode:
    def test_zero_tables_zero_features(self):
        pyr = small_pyramid()
        for t in pyr.tables:
            t.values[...] = 0.0
        tape = ad.Tape()
        out = pyr.encode(tape, np.random.default_rng(1).uniform(-2, 2, (5, 3)), active=4)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_vertex_identity(self):
        # a query exactly on a lattice vertex returns that vertex's feature
        pyr = small_pyramid(levels=1, base_res=4, max_res=4, table_size=64)
        res = pyr.resolutions[0]
        cell = np.array([1, 2, 1])
        h = hashgrid.DOMAIN_HALF
        y = cell * (2 * h / (res - 1)) - h
        tape = ad.Tape()
        out = pyr.encode(tape, y[None, :], active=1)
        slot = cell[0] + res * (cell[1] + res * cell[2])
        np.testing.assert_allclose(out.data[0], pyr.tables[0].values[slot], atol=1e-12)

    def test_cell_center_mean_of_corners(self):
        pyr = small_pyramid(levels=1, base_res=4, max_res=4, table_size=64)
        res = pyr.resolutions[0]
        h = hashgrid.DOMAIN_HALF
        step = 2 * h / (res - 1)
        y = np.array([[step / 2 - h, step / 2 - h, step / 2 - h]])
        tape = ad.Tape()
        out = pyr.encode(tape, y, active=1)
        corners = []
        for dz in (0, 1):
            for dy in (0, 1):
                for dx in (0, 1):
                    corners.append(pyr.tables[0].values[dx + res * (dy + res * dz)])
        np.testing.assert_allclose(out.data[0], np.mean(corners, axis=0), atol=1e-12)

    def test_continuity_across_cell_boundary(self):
        pyr = small_pyramid(seed=5)
        res = pyr.resolutions[1]
        h = hashgrid.DOMAIN_HALF
        edge = 2 * h / (res - 1) - h  # first interior lattice plane
        eps = 1e-9
        t1, t2 = ad.Tape(), ad.Tape()
        lo = pyr.encode(t1, np.array([[edge - eps, 0.3, -0.2]]), active=4)
        hi = pyr.encode(t2, np.array([[edge + eps, 0.3, -0.2]]), active=4)
        np.testing.assert_allclose(lo.data, hi.data, atol=1e-6)

    def test_inactive_levels_zero_and_gradfree(self):
        pyr = small_pyramid(seed=6)
        y = np.random.default_rng(2).uniform(-1, 1, (7, 3))
        tape = ad.Tape()
        out = pyr.encode(tape, y, active=2)
        c = pyr.channels
        np.testing.assert_array_equal(out.data[:, 2 * c:], 0.0)
        tape.backward(ad.sum_(ad.square(out)))
        tape.accumulate_param_grads()
        assert np.any(pyr.tables[0].grad != 0)
        np.testing.assert_array_equal(pyr.tables[2].grad, 0.0)
        np.testing.assert_array_equal(pyr.tables[3].grad, 0.0)

    def test_clamps_out_of_range(self):
        pyr = small_pyramid(seed=7)
        t1, t2 = ad.Tape(), ad.Tape()
        far = pyr.encode(t1, np.array([[5.0, -9.0, 2.0]]), active=4)
        edge = pyr.encode(t2, np.array([[2.0, -2.0, 2.0]]), active=4)
        np.testing.assert_allclose(far.data, edge.data, atol=1e-12)


class TestEncodeGradients:
    def test_table_gradients(self):
        pyr = small_pyramid(seed=8)
        y = np.random.default_rng(3).uniform(-1.8, 1.8, (6, 3))
        weights = np.random.default_rng(4).normal(size=(6, pyr.feature_len))

        tape = ad.Tape()
        out = pyr.encode(tape, y, active=4)
        tape.backward(ad.sum_(out * tape.constant(weights)))
        tape.accumulate_param_grads()
        eps = 1e-6
        worst = 0.0
        for t in pyr.tables:
            g = t.grad
            idx = np.argwhere(np.abs(g) > 1e-12)[:6]
            for i, j in idx:
                orig = t.values[i, j]
                t.values[i, j] = orig + eps
                hi = float((pyr.encode(ad.Tape(), y, 4).data * weights).sum())
                t.values[i, j] = orig - eps
                lo = float((pyr.encode(ad.Tape(), y, 4).data * weights).sum())
                t.values[i, j] = orig
                fd = (hi - lo) / (2 * eps)
                worst = max(worst, abs(fd - g[i, j]) / max(abs(fd), 1e-6))
        assert worst < 1e-4

    def test_position_jacobian(self):
        # the jac output is the derivative of the features w.r.t. y
        pyr = small_pyramid(seed=9)
        rng = np.random.default_rng(5)
        y = rng.uniform(-1.5, 1.5, (8, 3))
        tape = ad.Tape()
        feat, jac = pyr.encode(tape, y, active=4, want_jac=True)
        eps = 1e-6
        for k in range(3):
            yp, ym = y.copy(), y.copy()
            yp[:, k] += eps
            ym[:, k] -= eps
            fp = pyr.encode(ad.Tape(), yp, 4).data
            fm = pyr.encode(ad.Tape(), ym, 4).data
            fd = (fp - fm) / (2 * eps)
            err = np.abs(jac.data[:, :, k] - fd)
            assert err.max() < 1e-4 * max(1.0, np.abs(fd).max())

    def test_jac_pack_gradients(self):
        # losses differentiate through both feat and jac; check the fused node
        pyr = small_pyramid(seed=10)
        y = np.random.default_rng(6).uniform(-1.5, 1.5, (5, 3))
        wf = np.random.default_rng(7).normal(size=(5, pyr.feature_len))
        wj = np.random.default_rng(8).normal(size=(5, pyr.feature_len, 3))

        tape = ad.Tape()
        feat, jac = pyr.encode(tape, y, active=4, want_jac=True)
        loss = ad.sum_(feat * tape.constant(wf)) + ad.sum_(jac * tape.constant(wj))
        tape.backward(loss)
        tape.accumulate_param_grads()
        eps = 1e-6
        worst = 0.0
        for t in pyr.tables:
            idx = np.argwhere(np.abs(t.grad) > 1e-12)[:5]
            for i, j in idx:
                orig = t.values[i, j]
                vals = []
                for sgn in (1, -1):
                    t.values[i, j] = orig + sgn * eps
                    f2, j2 = pyr.encode(ad.Tape(), y, 4, want_jac=True)
                    vals.append(float((f2.data * wf).sum() + (j2.data * wj).sum()))
                t.values[i, j] = orig
                fd = (vals[0] - vals[1]) / (2 * eps)
                worst = max(worst, abs(fd - t.grad[i, j]) / max(abs(fd), 1e-6))
        assert worst < 1e-4


class TestPenalty:
    def test_zero_tables(self):
        pyr = small_pyramid()
        for t in pyr.tables:
            t.values[...] = 0.0
        tape = ad.Tape()
        assert float(pyr.penalty(tape, 4).data) == 0.0

    def test_constant_tables(self):
        pyr = small_pyramid()
        for t in pyr.tables:
            t.values[...] = 0.5
        tape = ad.Tape()
        # each active level contributes mean(c^2) = 0.25
        np.testing.assert_allclose(float(pyr.penalty(tape, 3).data), 3 * 0.25, atol=1e-12)

    def test_matches_two_pass_oracle(self):
        pyr = small_pyramid(seed=11)
        for t in pyr.tables:
            t.values[...] = np.random.default_rng(12).normal(size=t.values.shape)
        tape = ad.Tape()
        got = float(pyr.penalty(tape, 4).data)
        expect = sum(float(np.mean(t.values**2)) for t in pyr.tables)
        assert abs(got - expect) < 1e-6 * max(1.0, abs(expect))

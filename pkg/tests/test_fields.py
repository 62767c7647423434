"""Scene contraction, the distance network, and the density transform."""

import numpy as np
import pytest

from blendsdf import autodiff as ad
from blendsdf import fields, hashgrid


def make_net(seed=0, dtype=np.float64, hidden=16, bottleneck=8):
    rng = np.random.default_rng(seed)
    pyr = hashgrid.Pyramid(rng, levels=3, base_res=4, max_res=16, channels=2,
                           table_size=256, l_init=3, dtype=dtype)
    net = fields.SdfNet("sdf", pyr, rng, hidden=hidden, depth=2,
                        bottleneck=bottleneck, radius=0.5, dtype=dtype)
    return net, pyr


class TestContraction:
    def test_identity_inside_unit_ball(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-0.57, 0.57, (50, 3))
        np.testing.assert_array_equal(fields.contract(x), x)

    def test_formula_outside(self):
        x = np.array([[3.0, 0.0, 0.0]])
        np.testing.assert_allclose(fields.contract(x), [[2 - 1 / 3, 0, 0]], atol=1e-12)
        x = np.array([[0.0, -4.0, 0.0]])
        np.testing.assert_allclose(fields.contract(x), [[0, -(2 - 0.25), 0]], atol=1e-12)

    def test_range_bounded_by_two(self):
        rng = np.random.default_rng(1)
        x = rng.normal(scale=50.0, size=(500, 3))
        y = fields.contract(x)
        assert np.linalg.norm(y, axis=-1).max() < 2.0

    def test_roundtrip(self):
        rng = np.random.default_rng(2)
        x = rng.normal(scale=3.0, size=(200, 3))
        y = fields.contract(x)
        np.testing.assert_allclose(fields.uncontract(y), x, rtol=1e-10, atol=1e-10)

    def test_continuity_at_unit_sphere(self):
        d = np.array([0.6, -0.64, 0.48])
        d /= np.linalg.norm(d)
        eps = 1e-9
        lo = fields.contract((d * (1 - eps))[None])
        hi = fields.contract((d * (1 + eps))[None])
        np.testing.assert_allclose(lo, hi, atol=1e-7)

    def test_jacobian_finite_difference(self):
        rng = np.random.default_rng(3)
        x = np.concatenate([rng.uniform(-0.9, 0.9, (4, 3)),
                            rng.normal(scale=3.0, size=(4, 3))])
        x = x[np.abs(np.linalg.norm(x, axis=-1) - 1.0) > 0.05]
        jac = fields.contract_jacobian(x)
        eps = 1e-7
        for k in range(3):
            xp, xm = x.copy(), x.copy()
            xp[:, k] += eps
            xm[:, k] -= eps
            fd = (fields.contract(xp) - fields.contract(xm)) / (2 * eps)
            np.testing.assert_allclose(jac[:, :, k], fd, atol=1e-5)


class TestDensity:
    def beta(self, tape, val):
        return tape.leaf(np.asarray(val))

    def test_half_over_beta_at_zero(self):
        tape = ad.Tape()
        d = tape.constant(np.zeros(1))
        sigma = fields.laplace_density(d, self.beta(tape, 0.1))
        np.testing.assert_allclose(sigma.data, 5.0, atol=1e-12)

    def test_laplace_cdf_values(self):
        tape = ad.Tape()
        d = tape.constant(np.array([0.1, -0.1]))
        sigma = fields.laplace_density(d, self.beta(tape, 0.1))
        expect = np.array([0.5 * np.exp(-1.0), 1 - 0.5 * np.exp(-1.0)]) / 0.1
        np.testing.assert_allclose(sigma.data, expect, atol=1e-12)

    def test_positive_and_decreasing(self):
        tape = ad.Tape()
        d = tape.constant(np.linspace(-2, 2, 201))
        sigma = fields.laplace_density(d, self.beta(tape, 0.07)).data
        assert np.all(sigma > 0)
        assert np.all(np.diff(sigma) < 0)

    def test_saturates_at_inverse_beta(self):
        tape = ad.Tape()
        d = tape.constant(np.array([-50.0]))
        sigma = fields.laplace_density(d, self.beta(tape, 0.25))
        np.testing.assert_allclose(sigma.data, 4.0, atol=1e-9)

    def test_gradients_wrt_d_and_beta(self):
        rng = np.random.default_rng(4)
        d = rng.normal(size=(12,))
        d = np.where(np.abs(d) < 0.1, 0.3, d)  # |s| kink sits at d = 0

        def build(tape, dv, bv):
            return ad.sum_(ad.square(fields.laplace_density(dv, bv)))

        err = ad.grad_check(build, [d, np.array(0.17)])
        assert err < 1e-4


class TestSdfNet:
    def test_sphere_init(self):
        # the geometric init is a rough sphere: negative at the center,
        # positive well outside, and the zero crossing near the set radius
        net, _ = make_net(seed=1, hidden=32)
        rng = np.random.default_rng(5)
        dirs = rng.normal(size=(64, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        ts = np.linspace(0.02, 1.4, 160)
        pts = (dirs[:, None, :] * ts[None, :, None]).reshape(-1, 3)
        d = net.forward(ad.Tape(), pts, active=3)["d"].data.reshape(64, -1)
        assert np.all(d[:, 0] < 0)  # inside near the center
        assert np.all(d[:, -1] > 0)  # outside at radius 1.4
        roots = ts[np.argmax(np.sign(d) > 0, axis=1)]
        assert 0.25 < roots.mean() < 0.75

    def test_normals_match_finite_difference(self):
        net, _ = make_net(seed=2)
        rng = np.random.default_rng(6)
        x = rng.uniform(-1.4, 1.4, (10, 3))
        tape = ad.Tape()
        out = net.forward(tape, x, active=3, want_normals=True)
        eps = 1e-6
        for k in range(3):
            xp, xm = x.copy(), x.copy()
            xp[:, k] += eps
            xm[:, k] -= eps
            dp = net.forward(ad.Tape(), xp, 3)["d"].data
            dm = net.forward(ad.Tape(), xm, 3)["d"].data
            fd = (dp - dm) / (2 * eps)
            np.testing.assert_allclose(out["grad"].data[:, k], fd, atol=1e-5)
        n = out["normal"].data
        np.testing.assert_allclose(np.linalg.norm(n, axis=-1), 1.0, atol=1e-6)

    def test_aux_outputs(self):
        net, _ = make_net(seed=3)
        x = np.random.default_rng(7).uniform(-1, 1, (6, 3))
        tape = ad.Tape()
        out = net.forward(tape, x, active=3, want_normals=True, want_aux=True)
        assert out["b"].data.shape == (6, 8)
        np.testing.assert_allclose(np.linalg.norm(out["n_pred"].data, axis=-1), 1.0, atol=1e-5)

    def test_table_gradients_through_forward(self):
        net, pyr = make_net(seed=4)
        # the sphere init zeroes the trunk rows that read the grid; nudge
        # off that point so the tables actually participate
        w0 = net.trunk.layers[0][0]
        w0.values += np.random.default_rng(12).normal(0, 0.05, w0.values.shape)
        x = np.random.default_rng(8).uniform(-1.2, 1.2, (5, 3))
        tape = ad.Tape()
        out = net.forward(tape, x, active=3, want_normals=True)
        loss = ad.sum_(ad.square(out["d"])) + ad.sum_(ad.square(out["grad"]))
        tape.backward(loss)
        tape.accumulate_param_grads()
        eps = 1e-6
        worst = 0.0
        checked = 0
        for t in pyr.tables:
            idx = np.argwhere(np.abs(t.grad) > 1e-10)[:4]
            checked += len(idx)
            for i, j in idx:
                orig = t.values[i, j]
                vals = []
                for sgn in (1, -1):
                    t.values[i, j] = orig + sgn * eps
                    o = net.forward(ad.Tape(), x, 3, want_normals=True)
                    vals.append(float((o["d"].data**2).sum() + (o["grad"].data**2).sum()))
                t.values[i, j] = orig
                fd = (vals[0] - vals[1]) / (2 * eps)
                worst = max(worst, abs(fd - t.grad[i, j]) / max(abs(fd), 1e-6))
        assert checked >= 8
        assert worst < 1e-4

    def test_mlp_weight_gradients_through_normals(self):
        net, _ = make_net(seed=5)
        x = np.random.default_rng(9).uniform(-1.2, 1.2, (4, 3))
        params = net.parameters()
        tape = ad.Tape()
        out = net.forward(tape, x, active=3, want_normals=True)
        loss = ad.sum_(ad.square(out["grad"]))
        tape.backward(loss)
        tape.accumulate_param_grads()
        eps = 1e-6
        checked = 0
        worst = 0.0
        for p in params:
            if p.grad is None or not np.any(np.abs(p.grad) > 1e-10):
                continue
            flat_idx = int(np.argmax(np.abs(p.grad)))
            orig = p.values.reshape(-1)[flat_idx]
            vals = []
            for sgn in (1, -1):
                p.values.reshape(-1)[flat_idx] = orig + sgn * eps
                o = net.forward(ad.Tape(), x, 3, want_normals=True)
                vals.append(float((o["grad"].data**2).sum()))
            p.values.reshape(-1)[flat_idx] = orig
            fd = (vals[0] - vals[1]) / (2 * eps)
            g = p.grad.reshape(-1)[flat_idx]
            worst = max(worst, abs(fd - g) / max(abs(fd), 1e-6))
            checked += 1
        # only the trunk and distance-head weights feed the analytic normal
        assert checked >= 3
        assert worst < 1e-4

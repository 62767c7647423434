"""Ray interval tests: spacing bijections, inverse-CDF resampling, and the
proposal consistency loss with its prorated overlap bounds."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blendsdf import autodiff as ad
from blendsdf import sampling


def brute_bounds(prop_edges, nerf_edges, nerf_weights):
    """Direct interval-intersection proration, one pair at a time."""
    n_rays, n_prop = prop_edges.shape[0], prop_edges.shape[1] - 1
    out = np.zeros((n_rays, n_prop))
    for r in range(n_rays):
        for i in range(n_prop):
            a, b = prop_edges[r, i], prop_edges[r, i + 1]
            for j in range(nerf_weights.shape[1]):
                lo, hi = nerf_edges[r, j], nerf_edges[r, j + 1]
                inter = min(b, hi) - max(a, lo)
                if inter > 0:
                    out[r, i] += nerf_weights[r, j] * inter / (hi - lo)
    return out


class TestSpacing:
    def test_linear_roundtrip(self):
        sp = sampling.Spacing("linear", 1.0, 2.0)
        t = np.linspace(1.0, 2.0, 11)
        np.testing.assert_allclose(sp.to_t(sp.to_s(t)), t, rtol=1e-14)

    def test_inverse_roundtrip(self):
        sp = sampling.Spacing("inverse", 0.5, 8.0)
        t = np.linspace(0.5, 8.0, 11)
        np.testing.assert_allclose(sp.to_t(sp.to_s(t)), t, rtol=1e-12)

    def test_inverse_midpoint(self):
        # s=0.5 lands at the harmonic midpoint, not the arithmetic one
        sp = sampling.Spacing("inverse", 1.0, 4.0)
        assert sp.to_t(0.5) == pytest.approx(1.6, abs=1e-14)

    def test_bad_range_rejected(self):
        with pytest.raises(ValueError):
            sampling.Spacing("linear", 2.0, 1.0)
        with pytest.raises(ValueError):
            sampling.Spacing("linear", 0.0, 1.0)

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            sampling.Spacing("log", 1.0, 2.0)


class TestInitIntervals:
    def test_linear_two(self):
        sp = sampling.Spacing("linear", 1.0, 2.0)
        edges = sampling.init_intervals(sp, 2, 1)
        np.testing.assert_array_equal(edges, [[1.0, 1.5, 2.0]])

    def test_inverse_two(self):
        sp = sampling.Spacing("inverse", 1.0, 4.0)
        edges = sampling.init_intervals(sp, 2, 1)
        np.testing.assert_allclose(edges, [[1.0, 1.6, 4.0]], rtol=1e-14)

    def test_single_interval(self):
        sp = sampling.Spacing("linear", 0.25, 3.0)
        edges = sampling.init_intervals(sp, 1, 2)
        np.testing.assert_array_equal(edges, [[0.25, 3.0], [0.25, 3.0]])

    def test_zero_intervals_rejected(self):
        sp = sampling.Spacing("linear", 1.0, 2.0)
        with pytest.raises(ValueError):
            sampling.init_intervals(sp, 0, 1)

    def test_endpoints_exact(self):
        sp = sampling.Spacing("inverse", 0.3, 7.0)
        edges = sampling.init_intervals(sp, 13, 4)
        assert edges.shape == (4, 14)
        assert np.all(edges[:, 0] == 0.3)
        assert np.all(edges[:, -1] == 7.0)


class TestMidpointsWidths:
    def test_values(self):
        edges = np.array([[1.0, 1.5, 2.0]])
        np.testing.assert_array_equal(sampling.midpoints(edges), [[1.25, 1.75]])
        np.testing.assert_array_equal(sampling.widths(edges), [[0.5, 0.5]])


class TestResample:
    def test_uniform_weights_hit_flat_quantiles(self):
        sp = sampling.Spacing("linear", 1.0, 2.0)
        edges = sampling.init_intervals(sp, 8, 3)
        w = np.full((3, 8), 0.125)
        out = sampling.resample(sp, edges, w, 6)
        u = (np.arange(7) + 0.5) / 7
        np.testing.assert_allclose(out, np.broadcast_to(sp.to_t(u), (3, 7)), rtol=1e-13)

    def test_concentrated_mass_pulls_boundaries_in(self):
        sp = sampling.Spacing("linear", 0.0001, 1.0)
        edges = sampling.init_intervals(sp, 4, 1)
        w = np.array([[0.0, 0.0, 1.0, 0.0]])
        out = sampling.resample(sp, edges, w, 8)
        # padding leaves ~3% of the mass outside the hot interval; the
        # deterministic quantiles all stay clear of that fringe
        assert np.all(out > edges[0, 2]) and np.all(out < edges[0, 3])

    def test_zero_weights_fall_back_to_uniform(self):
        sp = sampling.Spacing("linear", 1.0, 2.0)
        edges = sampling.init_intervals(sp, 4, 2)
        w = np.array([[0.0] * 4, [0.1, 0.2, 0.3, 0.1]])
        out = sampling.resample(sp, edges, w, 5)
        np.testing.assert_array_equal(out[0], sampling.init_intervals(sp, 5, 1)[0])
        assert not np.array_equal(out[1], sampling.init_intervals(sp, 5, 1)[0])

    def test_seeded_jitter_is_reproducible(self):
        sp = sampling.Spacing("inverse", 0.5, 6.0)
        edges = sampling.init_intervals(sp, 6, 4)
        w = np.random.default_rng(3).random((4, 6))
        a = sampling.resample(sp, edges, w, 9, rng=np.random.default_rng(11))
        b = sampling.resample(sp, edges, w, 9, rng=np.random.default_rng(11))
        c = sampling.resample(sp, edges, w, 9, rng=np.random.default_rng(12))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    @settings(deadline=None, max_examples=40)
    @given(
        st.integers(0, 2**32 - 1),
        st.sampled_from(["linear", "inverse"]),
        st.booleans(),
    )
    def test_edges_sorted_in_range_right_count(self, seed, mode, jitter):
        rng = np.random.default_rng(seed)
        sp = sampling.Spacing(mode, 0.7, 5.0)
        edges = sampling.init_intervals(sp, 8, 5)
        w = rng.random((5, 8)) * (rng.random((5, 8)) > 0.4)
        out = sampling.resample(sp, edges, w, 12, rng=rng if jitter else None)
        assert out.shape == (5, 13)
        assert np.all(np.diff(out, axis=-1) > 0)
        assert np.all(out >= 0.7) and np.all(out <= 5.0)


class TestOverlapBounds:
    def test_coincident_intervals_return_weights(self):
        e = np.array([[0.0, 1.0, 2.0]])
        w = np.array([[0.3, 0.5]])
        np.testing.assert_allclose(sampling.overlap_bounds(e, e, w), w, atol=1e-15)

    def test_half_overlap_prorates(self):
        nerf_e = np.array([[0.0, 1.0]])
        w = np.array([[0.8]])
        prop_e = np.array([[0.0, 0.5, 1.0]])
        np.testing.assert_allclose(
            sampling.overlap_bounds(prop_e, nerf_e, w), [[0.4, 0.4]], atol=1e-15
        )

    def test_span_sums_partial_masses(self):
        nerf_e = np.array([[0.0, 1.0, 2.0]])
        w = np.array([[0.3, 0.5]])
        prop_e = np.array([[0.5, 1.5]])
        np.testing.assert_allclose(
            sampling.overlap_bounds(prop_e, nerf_e, w), [[0.4]], atol=1e-15
        )

    def test_covering_interval_gets_all_mass(self):
        nerf_e = np.array([[1.0, 1.5, 2.0]])
        w = np.array([[0.25, 0.45]])
        prop_e = np.array([[0.5, 3.0]])
        np.testing.assert_allclose(
            sampling.overlap_bounds(prop_e, nerf_e, w), [[0.7]], atol=1e-15
        )

    @settings(deadline=None, max_examples=30)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_brute_force_proration(self, seed):
        rng = np.random.default_rng(seed)
        nerf_e = np.sort(rng.random((3, 9)), axis=-1)
        nerf_e[:, 0], nerf_e[:, -1] = 0.0, 1.0
        nerf_e += np.arange(3)[:, None]  # distinct per-ray ranges
        prop_e = np.sort(rng.random((3, 6)), axis=-1) + np.arange(3)[:, None]
        w = rng.random((3, 8)) * 0.1
        got = sampling.overlap_bounds(prop_e, nerf_e, w)
        np.testing.assert_allclose(got, brute_bounds(prop_e, nerf_e, w), atol=1e-12)


class TestProposalLoss:
    def loss_value(self, prop_w, nerf_w, prop_e, nerf_e):
        tape = ad.Tape()
        wp = tape.leaf(np.asarray(prop_w, np.float64))
        out = sampling.proposal_loss(tape, prop_e, wp, nerf_e, np.asarray(nerf_w), np.float64)
        return float(out.data)

    def test_covered_histogram_costs_nothing(self):
        e = np.array([[0.0, 1.0, 2.0]])
        assert self.loss_value([[0.5, 0.5]], [[0.3, 0.5]], e, e) == 0.0

    def test_single_interval_hand_value(self):
        e = np.array([[0.0, 1.0]])
        got = self.loss_value([[0.2]], [[0.5]], e, e)
        assert got == pytest.approx(0.3**2 / (0.2 + 1e-7), rel=1e-12)

    def test_mean_over_rays(self):
        e = np.array([[0.0, 1.0]] * 2)
        one = self.loss_value([[0.2]], [[0.5]], e[:1], e[:1])
        two = self.loss_value([[0.2], [0.5]], [[0.5], [0.5]], e, e)
        assert two == pytest.approx(0.5 * one, rel=1e-12)

    def test_refinement_never_increases_loss(self):
        # slide one ray's proposal histogram toward the target mass
        e = np.broadcast_to(np.linspace(0.0, 1.0, 6), (1, 6)).copy()
        nerf_w = np.array([[0.05, 0.1, 0.6, 0.15, 0.05]])
        start = np.full((1, 5), 0.02)
        vals = []
        for lam in np.linspace(0.0, 1.0, 11):
            vals.append(self.loss_value((1 - lam) * start + lam * nerf_w, nerf_w, e, e))
        assert np.all(np.diff(vals) <= 1e-12)
        assert vals[-1] <= 1e-30  # proration round-trip leaves ~1e-16 hinge

    def test_gradient_reaches_proposal_weights_only(self):
        rng = np.random.default_rng(5)
        prop_e = np.array([[0.0, 0.4, 1.0], [0.0, 0.6, 1.0]])
        nerf_e = np.array([[0.0, 0.5, 1.0], [0.0, 0.5, 1.0]])
        nerf_w = rng.random((2, 2)) * 0.5 + 0.4

        def build(tape, wp):
            return sampling.proposal_loss(tape, prop_e, wp, nerf_e, nerf_w, np.float64)

        # keep the hinge active and away from its kink
        wp0 = rng.random((2, 2)) * 0.1 + 0.05
        assert ad.grad_check(build, [wp0]) < 1e-4

    def test_inactive_hinge_gives_zero_gradient(self):
        e = np.array([[0.0, 1.0, 2.0]])
        tape = ad.Tape()
        wp = tape.leaf(np.array([[0.9, 0.9]]))
        out = sampling.proposal_loss(tape, e, wp, e, np.array([[0.1, 0.2]]), np.float64)
        tape.backward(out)
        np.testing.assert_array_equal(wp.grad, np.zeros((1, 2)))

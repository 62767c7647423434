"""Ray interval bookkeeping: initial spacing, inverse-CDF resampling, and
the proposal consistency loss.

Intervals are stored as sorted edge arrays, (R, n+1) for n intervals per
ray. Two spacing modes: "linear" (uniform in t, bounded scenes) and
"inverse" (uniform in 1/t, unbounded scenes). Resampling happens in the
normalized spacing domain s in [0,1], so inverse-mode rays keep their
far-field resolution.
"""

import numpy as np

from . import autodiff as ad

RESAMPLE_PADDING = 0.01  # mass added per interval before CDF inversion
PROP_LOSS_EPS = 1e-7


class Spacing:
    """Bijection between t in [near, far] and s in [0, 1]."""

    def __init__(self, mode, near, far):
        if not (0.0 < near < far):
            raise ValueError(f"need 0 < near < far, got {near}, {far}")
        if mode not in ("linear", "inverse"):
            raise ValueError(f"unknown spacing mode {mode!r}")
        self.mode = mode
        self.near = float(near)
        self.far = float(far)

    def to_t(self, s):
        if self.mode == "linear":
            return self.near + s * (self.far - self.near)
        inv = (1.0 / self.near) + s * (1.0 / self.far - 1.0 / self.near)
        return 1.0 / inv

    def to_s(self, t):
        if self.mode == "linear":
            return (t - self.near) / (self.far - self.near)
        return ((1.0 / t) - (1.0 / self.near)) / ((1.0 / self.far) - (1.0 / self.near))


def init_intervals(spacing, n, n_rays):
    """Uniform partition in the spacing domain: edges (n_rays, n+1) in t."""
    if n < 1:
        raise ValueError("need at least one interval")
    s = np.linspace(0.0, 1.0, n + 1)
    t = spacing.to_t(s)
    t[0], t[-1] = spacing.near, spacing.far  # exact endpoints
    return np.broadcast_to(t, (n_rays, n + 1)).copy()


def midpoints(edges):
    return 0.5 * (edges[:, :-1] + edges[:, 1:])


def widths(edges):
    return edges[:, 1:] - edges[:, :-1]


def _stratified_u(n_rays, n_new, rng):
    base = np.arange(n_new + 1, dtype=np.float64)
    if rng is None:
        return np.broadcast_to((base + 0.5) / (n_new + 1), (n_rays, n_new + 1)).copy()
    jitter = rng.random((n_rays, n_new + 1))
    return (base + jitter) / (n_new + 1)


def resample(spacing, edges, weights, n_new, rng=None):
    """Draw refined interval edges from a weight histogram.

    Inverse-CDF sampling in the s domain after padding each interval with
    RESAMPLE_PADDING mass. rng=None uses deterministic CDF-bin midpoints
    (evaluation); otherwise one stratified jitter per bin. Rays whose
    weights are all zero fall back to the uniform init_intervals partition.
    """
    edges = np.asarray(edges, np.float64)
    w = np.asarray(weights, np.float64)
    n_rays, n_old = w.shape

    s_edges = spacing.to_s(edges)
    s_edges[:, 0] = 0.0
    s_edges[:, -1] = 1.0

    wp = w + RESAMPLE_PADDING
    cdf = np.zeros((n_rays, n_old + 1), np.float64)
    np.cumsum(wp, axis=-1, out=cdf[:, 1:])
    cdf /= cdf[:, -1:]
    cdf[:, -1] = 1.0

    u = _stratified_u(n_rays, n_new, rng)

    # per-ray searchsorted: count cdf knots <= u
    idx = (cdf[:, None, :] <= u[:, :, None]).sum(axis=-1)
    np.clip(idx, 1, n_old, out=idx)
    lo = idx - 1
    cdf_lo = np.take_along_axis(cdf, lo, axis=-1)
    cdf_hi = np.take_along_axis(cdf, lo + 1, axis=-1)
    s_lo = np.take_along_axis(s_edges, lo, axis=-1)
    s_hi = np.take_along_axis(s_edges, lo + 1, axis=-1)
    frac = (u - cdf_lo) / (cdf_hi - cdf_lo)
    s_new = s_lo + frac * (s_hi - s_lo)

    t_new = spacing.to_t(s_new)

    dead = w.sum(axis=-1) == 0.0
    if np.any(dead):
        t_new[dead] = init_intervals(spacing, n_new, int(dead.sum()))
    return t_new


def overlap_bounds(prop_edges, nerf_edges, nerf_weights):
    """Prorated NeRF mass inside each proposal interval.

    NeRF interval j spreads its weight uniformly over its own extent; the
    bound for a proposal interval is the integral of that piecewise-constant
    density over the interval. Computed through the piecewise-linear
    cumulative-mass function evaluated at proposal edges.
    """
    prop_edges = np.asarray(prop_edges, np.float64)
    nerf_edges = np.asarray(nerf_edges, np.float64)
    w = np.asarray(nerf_weights, np.float64)
    n_rays, n_nerf = w.shape

    cum = np.zeros((n_rays, n_nerf + 1), np.float64)
    np.cumsum(w, axis=-1, out=cum[:, 1:])

    idx = (nerf_edges[:, None, :] <= prop_edges[:, :, None]).sum(axis=-1)
    np.clip(idx, 1, n_nerf, out=idx)
    lo = idx - 1
    e_lo = np.take_along_axis(nerf_edges, lo, axis=-1)
    e_hi = np.take_along_axis(nerf_edges, lo + 1, axis=-1)
    frac = np.clip((prop_edges - e_lo) / (e_hi - e_lo), 0.0, 1.0)
    mass = np.take_along_axis(cum, lo, axis=-1) + np.take_along_axis(w, lo, axis=-1) * frac
    return np.maximum(mass[:, 1:] - mass[:, :-1], 0.0)


def proposal_loss(tape, prop_edges, prop_weights, nerf_edges, nerf_weights, dtype=np.float32):
    """Hinge penalty for proposal mass under-covering the NeRF histogram.

    prop_weights is taped; the NeRF histogram enters as constants, so no
    gradient reaches the main field. Per ray: sum over proposal intervals of
    max(0, bound - w_p)^2 / (w_p + eps); returns the mean over rays.
    """
    bound = overlap_bounds(prop_edges, nerf_edges, nerf_weights).astype(dtype)
    hinge = ad.relu(tape.constant(bound) - prop_weights)
    per_interval = ad.square(hinge) / (prop_weights + PROP_LOSS_EPS)
    return ad.mean_(ad.sum_(per_interval, axis=-1))

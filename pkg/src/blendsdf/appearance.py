"""Appearance heads: two radiance fields and the blend-weight field.

The camera-view field conditions on the viewing direction, the
reflected-view field on the view direction mirrored about the surface
normal. A separate weight field (no directional input) predicts the blend
between them; blending happens per pixel after volume rendering, not per
sample. Directions enter through a small frequency encoding: the raw unit
vector followed by sin/cos of its components at scales 2^0..2^(deg-1).
"""

import numpy as np

from . import autodiff as ad
from .nn import Mlp


def dir_encoding_dim(degree):
    return 3 + 6 * degree


def dir_encoding_np(v, degree, dtype=np.float32):
    """Constant-path encoding of unit directions (N, 3)."""
    v = np.asarray(v, dtype)
    parts = [v]
    for k in range(degree):
        s = v * (2.0**k)
        parts.append(np.sin(s))
        parts.append(np.cos(s))
    return np.concatenate(parts, axis=-1)


def dir_encoding(tape, v, degree):
    """Taped encoding (same layout as dir_encoding_np)."""
    parts = [v]
    for k in range(degree):
        s = v * float(2.0**k)
        parts.append(ad.sin(s))
        parts.append(ad.cos(s))
    return ad.concat(parts, axis=-1)


def reflect(tape, n, d):
    """Reflect the view direction about the normal.

    n is the taped unit normal (N, 3), d the constant ray direction
    (camera toward scene). omega_o = -d; returns 2(n.omega_o)n - omega_o.
    """
    wo = -np.asarray(d, n.dtype)
    dot = ad.sum_(n * tape.constant(wo), axis=-1, keepdims=True)
    return n * (dot * 2.0) - tape.constant(wo)


class RadianceNet:
    """Color head; sigmoid output in (0, 1)^3."""

    def __init__(self, name, bottleneck, rng, degree=4, hidden=256, depth=4, n_dir_inputs=1, dtype=np.float32):
        self.degree = degree
        in_dim = 3 + n_dir_inputs * dir_encoding_dim(degree) + 3 + bottleneck
        self.mlp = Mlp(name, [in_dim] + [hidden] * depth + [3], rng, init="glorot", dtype=dtype)

    def parameters(self):
        return self.mlp.parameters()

    def forward(self, tape, parts):
        return ad.sigmoid(self.mlp.forward(tape, ad.concat(parts, axis=-1)))


class WeightNet:
    """Blend-weight head over [position, normal, bottleneck]; sigmoid scalar."""

    def __init__(self, name, bottleneck, rng, hidden=256, dtype=np.float32):
        in_dim = 3 + 3 + bottleneck
        self.mlp = Mlp(name, [in_dim, hidden, 1], rng, init="glorot", dtype=dtype)

    def parameters(self):
        return self.mlp.parameters()

    def forward(self, tape, parts):
        return ad.sigmoid(self.mlp.forward(tape, ad.concat(parts, axis=-1)))

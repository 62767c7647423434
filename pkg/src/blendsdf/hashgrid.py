"""Multi-resolution feature grid with hashed storage for fine levels.

Levels span base_res..max_res geometrically. A level of resolution R has R^3
lattice vertices; if R^3 fits the table budget the level is stored dense
(index x + R*y + R^2*z), otherwise vertices hash into the fixed-size table.
Lookups trilinearly blend the 8 surrounding vertices. The grid covers the
cube [-2, 2]^3 (the contracted scene domain).

Coarse-to-fine: active_levels(t) limits how many levels contribute at
training fraction t; inactive levels output exact zeros and receive exactly
zero gradient (they are simply never touched by the graph).
"""

import math
import os
import warnings

import numpy as np

from . import autodiff as ad
from . import kernels

DOMAIN_HALF = 2.0  # grid covers [-DOMAIN_HALF, DOMAIN_HALF]^3

_DEBUG = bool(os.environ.get("BLENDSDF_DEBUG"))


def level_resolutions(levels, base_res, max_res):
    if levels < 1:
        raise ValueError("need at least one level")
    if levels == 1:
        return [base_res]
    growth = (max_res / base_res) ** (1.0 / (levels - 1))
    return [int(round(base_res * growth**l)) for l in range(levels)]


class Pyramid:
    def __init__(
        self,
        rng,
        levels=15,
        base_res=32,
        max_res=4096,
        channels=4,
        table_size=2**19,
        l_init=4,
        unlock_frac=0.02,
        init_scale=1e-4,
        name="grid",
        dtype=np.float32,
    ):
        self.levels = levels
        self.channels = channels
        self.table_size = table_size
        self.l_init = l_init
        self.unlock_frac = unlock_frac
        self.resolutions = level_resolutions(levels, base_res, max_res)
        self.tables = []
        self.hashed = []
        for l, res in enumerate(self.resolutions):
            dense = res**3 <= table_size
            slots = res**3 if dense else table_size
            self.hashed.append(not dense)
            values = rng.uniform(-init_scale, init_scale, size=(slots, channels)).astype(dtype)
            self.tables.append(ad.Param(f"{name}/level{l:02d}", values))

    @property
    def feature_len(self):
        return self.levels * self.channels

    def parameters(self):
        return list(self.tables)

    def active_levels(self, train_frac):
        """Number of unlocked levels at training fraction t in [0, 1]."""
        return min(self.l_init + int(math.floor(train_frac / self.unlock_frac)), self.levels)

    def grid_coords(self, y, level):
        """Map contracted positions to the level's lattice coordinates."""
        res = self.resolutions[level]
        scale = (res - 1) / (2.0 * DOMAIN_HALF)
        return ((y + DOMAIN_HALF) * scale).astype(y.dtype), scale

    def encode(self, tape, y, active, want_jac=False):
        """Features (N, levels*channels) for contracted positions y (N, 3).

        With want_jac=True also returns the feature Jacobian w.r.t. y,
        (N, levels*channels, 3). Positions are treated as constants; only the
        tables receive gradient. Inactive levels contribute exact zeros.

        All levels share one graph node: kernels write straight into slices
        of a single feature buffer, so no per-level concatenation happens.
        """
        y = np.asarray(y)
        if _DEBUG and np.any(np.abs(y) > DOMAIN_HALF):
            warnings.warn("grid positions outside the domain were clamped")
        y = np.clip(y, -DOMAIN_HALF, DOMAIN_HALF)
        n = y.shape[0]
        c = self.channels
        active = min(active, self.levels)
        tsize = self.table_size
        dtype = self.tables[0].values.dtype
        leaves = [tape.watch(self.tables[l]) for l in range(active)]
        coords = [self.grid_coords(y, l) for l in range(active)]

        if not want_jac:
            buf = np.zeros((n, self.levels * c), dtype=dtype)
            for l, (u, _) in enumerate(coords):
                kernels.grid_fwd(
                    leaves[l].data, u, self.resolutions[l], self.hashed[l], tsize,
                    buf[:, l * c:(l + 1) * c],
                )

            def bwd(g):
                grads = []
                for l, (u, _) in enumerate(coords):
                    gt = np.zeros_like(leaves[l].data)
                    kernels.grid_bwd_table(
                        u, self.resolutions[l], self.hashed[l], tsize,
                        g[:, l * c:(l + 1) * c], None, 1.0, gt,
                    )
                    grads.append(gt)
                return grads

            if not leaves:
                return tape.constant(buf)
            return ad.custom(tape, buf, leaves, bwd)

        buf = np.zeros((n, self.levels * c, 4), dtype=dtype)
        for l, (u, scale) in enumerate(coords):
            kernels.grid_fwd_jac(
                leaves[l].data, u, self.resolutions[l], self.hashed[l], tsize,
                dtype.type(scale), buf[:, l * c:(l + 1) * c, :],
            )

        def bwd(g):
            grads = []
            for l, (u, scale) in enumerate(coords):
                sl = g[:, l * c:(l + 1) * c, :]
                gt = np.zeros_like(leaves[l].data)
                kernels.grid_bwd_table(
                    u, self.resolutions[l], self.hashed[l], tsize,
                    sl[:, :, 0], sl[:, :, 1:], dtype.type(scale), gt,
                )
                grads.append(gt)
            return grads

        if leaves:
            out = ad.custom(tape, buf, leaves, bwd)
        else:
            out = tape.constant(buf)
        feat = ad.reshape(ad.cols(out, 0, 1), (n, self.levels * c))
        jac = ad.cols(out, 1, 4)
        return feat, jac

    def penalty(self, tape, active):
        """Mean squared table entry, summed over the active levels."""
        total = None
        for l in range(min(active, self.levels)):
            term = ad.mean_(ad.square(tape.watch(self.tables[l])))
            total = term if total is None else total + term
        if total is None:
            return tape.constant(np.zeros((), dtype=self.tables[0].values.dtype))
        return total

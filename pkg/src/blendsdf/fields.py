"""Signed distance field: scene contraction, the distance network, and the
density transform used by the volume renderer.

Contraction maps all of R^3 into the radius-2 ball: identity inside the unit
ball, radial squash 2 - 1/|x| outside. The distance network runs on
contracted coordinates; world-space gradients therefore chain through the
contraction Jacobian, which is pushed alongside the primal computation as
three forward tangents (one per world axis). Sample positions are constants:
gradients flow to parameters only, not to x.

Sign convention: d < 0 inside the surface. The density transform is
sigma = Psi_beta(-d) / beta with Psi the Laplace CDF, so density rises
smoothly from 0 outside to 1/beta inside, hitting 1/(2 beta) at the surface.
"""

import numpy as np

from . import autodiff as ad
from .nn import Head, Mlp, sphere_readout

_NORM_EPS = 1e-20
_GRAD_FLOOR = 1e-6


def contract(x):
    """Map world points into the radius-2 ball (identity inside unit ball)."""
    x = np.asarray(x)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    out = x.copy()
    m = r[..., 0] > 1.0
    if np.any(m):
        rm = r[m]
        out[m] = (2.0 - 1.0 / rm) * (x[m] / rm)
    return out


def uncontract(y):
    """Inverse of contract; defined for |y| < 2."""
    y = np.asarray(y)
    s = np.linalg.norm(y, axis=-1, keepdims=True)
    if np.any(s >= 2.0):
        raise ValueError("uncontract undefined at radius >= 2")
    out = y.copy()
    m = s[..., 0] > 1.0
    if np.any(m):
        sm = s[m]
        out[m] = y[m] / (sm * (2.0 - sm))
    return out


def contract_jacobian(x):
    """J[n, i, j] = d contract(x)_i / d x_j, shape (N, 3, 3)."""
    x = np.asarray(x)
    n = x.shape[0]
    jac = np.zeros((n, 3, 3), dtype=x.dtype)
    idx = np.arange(3)
    jac[:, idx, idx] = 1.0
    r = np.linalg.norm(x, axis=-1)
    m = r > 1.0
    if np.any(m):
        rm = r[m][:, None, None]
        xh = (x[m] / r[m][:, None])[:, :, None]  # (M, 3, 1)
        outer = xh @ np.swapaxes(xh, 1, 2)
        eye = np.eye(3, dtype=x.dtype)[None]
        f = 2.0 - 1.0 / rm
        jac[m] = (f / rm) * (eye - outer) + outer / (rm * rm)
    return jac


def l2_normalize(v, eps=_NORM_EPS):
    """Taped row-wise normalization of (N, 3) vectors."""
    nsq = ad.sum_(ad.square(v), axis=-1, keepdims=True) + eps
    return v / ad.sqrt(nsq)


class SdfNet:
    """Distance network over pyramid features.

    Input is [grid features, contracted position]; outputs the signed
    distance d, optionally a bottleneck feature vector b and a predicted
    normal n'. At init the zero level set is approximately the sphere
    |x| = radius.
    """

    def __init__(self, name, pyramid, rng, hidden=256, depth=2, bottleneck=256, radius=0.5, dtype=np.float32):
        self.name = name
        self.pyramid = pyramid
        self.hidden = hidden
        self.bottleneck = bottleneck
        in_dim = pyramid.feature_len + 3
        self.trunk = Mlp(
            f"{name}/trunk",
            [in_dim] + [hidden] * depth,
            rng,
            init="sphere",
            final="relu",
            zero_input_rows=pyramid.feature_len,
            dtype=dtype,
        )
        wd, bd = sphere_readout(hidden, radius, dtype)
        self.head_d = Head(f"{name}/head_d", hidden, 1, rng, dtype, weight=wd, bias=bd)
        if bottleneck:
            self.head_b = Head(f"{name}/head_b", hidden, bottleneck, rng, dtype)
            self.head_n = Head(f"{name}/head_n", hidden, 3, rng, dtype)
        else:
            self.head_b = None
            self.head_n = None

    def parameters(self):
        out = self.trunk.parameters() + self.head_d.parameters()
        if self.head_b is not None:
            out += self.head_b.parameters() + self.head_n.parameters()
        return out

    def forward(self, tape, x, active, want_normals=False, want_aux=False):
        """Evaluate at world points x (N, 3).

        Returns a dict with:
          d        (N,)  signed distance
          y        (N,3) contracted positions (numpy)
          grad     (N,3) world-space gradient of d        [want_normals]
          grad_norm (N,1) |grad| with a tiny floor         [want_normals]
          normal   (N,3) unit analytic normal              [want_normals]
          n_fallback int: rows where grad vanished and n' was substituted
          b        (N,bottleneck), n_pred (N,3)            [want_aux]
        """
        x = np.asarray(x)
        y = contract(x)
        out = {"y": y}

        if want_normals:
            feat, jac = self.pyramid.encode(tape, y, active, want_jac=True)
            jw = contract_jacobian(x)
            t_parts = []
            for a in range(3):
                v = np.ascontiguousarray(jw[:, :, a])
                t_feat = ad.bmatvec(jac, v)
                t_parts.append(ad.concat([t_feat, tape.constant(v)], axis=-1))
            xt = ad.concat(t_parts, axis=0)
            x_in = ad.concat([feat, tape.constant(y)], axis=-1)
            h, ht = self.trunk.forward_tangent(tape, x_in, xt, 3)
            d2, dt = self.head_d.forward_tangent(tape, h, ht)
            n_pts = x.shape[0]
            grad = ad.transpose(ad.reshape(dt, (3, n_pts)), (1, 0))
            out["d"] = ad.reshape(d2, (n_pts,))
            out["grad"] = grad
            gn = ad.sqrt(ad.sum_(ad.square(grad), axis=-1, keepdims=True) + _NORM_EPS)
            out["grad_norm"] = gn
        else:
            feat = self.pyramid.encode(tape, y, active, want_jac=False)
            x_in = ad.concat([feat, tape.constant(y)], axis=-1)
            h = self.trunk.forward(tape, x_in)
            out["d"] = ad.reshape(self.head_d.forward(tape, h), (x.shape[0],))

        if want_aux:
            if self.head_b is None:
                raise ValueError(f"{self.name} has no bottleneck/normal heads")
            out["b"] = self.head_b.forward(tape, h)
            n_pred = l2_normalize(self.head_n.forward(tape, h))
            out["n_pred"] = n_pred
            if want_normals:
                small = out["grad_norm"].data < _GRAD_FLOOR
                out["n_fallback"] = int(small.sum())
                normal = out["grad"] / ad.select(small, out["grad_norm"] * 0.0 + 1.0, out["grad_norm"])
                out["normal"] = ad.select(small, n_pred, normal)
        elif want_normals:
            small = out["grad_norm"].data < _GRAD_FLOOR
            out["n_fallback"] = int(small.sum())
            safe = ad.select(small, out["grad_norm"] * 0.0 + 1.0, out["grad_norm"])
            out["normal"] = out["grad"] / safe
        return out


def laplace_density(d, beta):
    """sigma = Psi_beta(-d) / beta on the tape; d (N,) or (R,S), beta scalar Value."""
    s = ad.neg(d)
    e = ad.exp(ad.neg(ad.absolute(s) / beta))
    half = e * 0.5
    psi = ad.select(s.data > 0, 1.0 - half, half)
    return psi / beta

"""Small fully-connected networks on the autodiff tape.

Two init schemes:
- "glorot": uniform Glorot for generic heads (radiance, blend weight).
- "sphere": the distance-field init. Hidden weights are normal with
  std sqrt(2/fan_out), which preserves the input norm through relu layers,
  so a constant positive read-out row of sqrt(pi/hidden) makes the network
  compute approximately |input| at init. Combined with zeroed grid-feature
  input rows and a read-out bias of -r, the initial field is a sphere of
  radius r centered at the origin.
"""

import numpy as np

from . import autodiff as ad


def glorot_uniform(rng, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def norm_preserving_normal(rng, fan_in, fan_out, dtype):
    std = np.sqrt(2.0 / fan_out)
    return (rng.standard_normal((fan_in, fan_out)) * std).astype(dtype)


class Mlp:
    """Dense layers, relu between them; `final` controls the last layer
    ("none" for a linear head, "relu" when used as a trunk)."""

    def __init__(self, name, sizes, rng, init="glorot", final="none", zero_input_rows=None, dtype=np.float32):
        if len(sizes) < 2:
            raise ValueError("Mlp needs at least input and output sizes")
        self.name = name
        self.final = final
        self.layers = []
        for i, (fin, fout) in enumerate(zip(sizes[:-1], sizes[1:])):
            if init == "glorot":
                w = glorot_uniform(rng, fin, fout, dtype)
            elif init == "sphere":
                w = norm_preserving_normal(rng, fin, fout, dtype)
            else:
                raise ValueError(f"unknown init {init!r}")
            if i == 0 and zero_input_rows:
                # encoding inputs start silent; they couple in through training
                w[:zero_input_rows, :] = 0.0
            b = np.zeros(fout, dtype=dtype)
            self.layers.append(
                (ad.Param(f"{name}/w{i}", w), ad.Param(f"{name}/b{i}", b))
            )

    def parameters(self):
        out = []
        for w, b in self.layers:
            out.append(w)
            out.append(b)
        return out

    def forward(self, tape, x):
        n_layers = len(self.layers)
        for i, (w, b) in enumerate(self.layers):
            hidden = i < n_layers - 1 or self.final == "relu"
            x = ad.affine(x, tape.watch(w), tape.watch(b),
                          act="relu" if hidden else None)
        return x

    def forward_tangent(self, tape, x, xt, k):
        """Joint primal/JVP pass.

        x is (N, in); xt holds k stacked tangent batches, (k*N, in). Tangents
        share the weights, skip the bias, and take the primal's relu mask.
        Returns (y, yt).
        """
        n_layers = len(self.layers)
        for i, (w, b) in enumerate(self.layers):
            wv = tape.watch(w)
            hidden = i < n_layers - 1 or self.final == "relu"
            x = ad.affine(x, wv, tape.watch(b), act="relu" if hidden else None)
            xt = ad.matmul(xt, wv)
            if hidden:
                # relu output > 0 exactly where the pre-activation was
                xt = ad.scale_blocks(xt, (x.data > 0).astype(x.dtype), k)
        return x, xt


class Head:
    """A single linear read-out layer (weights plus bias)."""

    def __init__(self, name, fan_in, fan_out, rng, dtype=np.float32, weight=None, bias=None):
        w = glorot_uniform(rng, fan_in, fan_out, dtype) if weight is None else np.asarray(weight, dtype)
        b = np.zeros(fan_out, dtype=dtype) if bias is None else np.asarray(bias, dtype)
        self.w = ad.Param(f"{name}/w", w)
        self.b = ad.Param(f"{name}/b", b)

    def parameters(self):
        return [self.w, self.b]

    def forward(self, tape, h):
        return ad.affine(h, tape.watch(self.w), tape.watch(self.b))

    def forward_tangent(self, tape, h, ht):
        return self.forward(tape, h), ad.matmul(ht, tape.watch(self.w))


def sphere_readout(hidden, radius, dtype=np.float32):
    """Weights/bias for the distance head of a sphere-initialized trunk."""
    w = np.full((hidden, 1), np.sqrt(np.pi / hidden), dtype=dtype)
    b = np.asarray([-radius], dtype=dtype)
    return w, b

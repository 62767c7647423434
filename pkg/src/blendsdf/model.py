"""FieldBundle: every trainable tensor in one place.

Composition by mode:
  unified   geometry + camera-view and reflected-view radiance + blend weight
  camv      camera-view radiance only; the other appearance nets exist but
            are never evaluated (their gradients stay exactly zero) and the
            rendered W is identically 0
  refv      reflected-view radiance only, same convention (rendered W is 1)
  dualdirv  geometry + a single radiance net fed both direction encodings

Geometry is always: one shared feature pyramid, the main distance net
("sdf/"), a separate proposal distance net ("prop/") reused by both proposal
rounds, and the density sharpness parameter. The checkpoint tensor named
"beta" stores the free (log-scale) value; the positive density scale is
exp(beta).
"""

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .appearance import RadianceNet, WeightNet
from .fields import SdfNet
from .hashgrid import Pyramid

MODES = ("unified", "camv", "refv", "dualdirv")


class FieldBundle:
    def __init__(self, mcfg, rng, dtype=np.float32):
        if mcfg.mode not in MODES:
            raise ValueError(f"unknown mode {mcfg.mode!r}")
        self.mode = mcfg.mode
        self.cfg = mcfg
        self.pyramid = Pyramid(
            rng,
            levels=mcfg.levels,
            base_res=mcfg.base_res,
            max_res=mcfg.max_res,
            channels=mcfg.channels,
            table_size=mcfg.table_size,
            l_init=mcfg.l_init,
            unlock_frac=mcfg.unlock_frac,
            name="grid",
            dtype=dtype,
        )
        self.sdf = SdfNet(
            "sdf",
            self.pyramid,
            rng,
            hidden=mcfg.sdf_hidden,
            depth=mcfg.sdf_depth,
            bottleneck=mcfg.bottleneck,
            radius=mcfg.init_radius,
            dtype=dtype,
        )
        self.prop = SdfNet(
            "prop",
            self.pyramid,
            rng,
            hidden=mcfg.sdf_hidden,
            depth=mcfg.sdf_depth,
            bottleneck=0,
            radius=mcfg.init_radius,
            dtype=dtype,
        )
        b = mcfg.bottleneck
        deg = mcfg.dir_degree
        rw, rd = mcfg.radiance_hidden, mcfg.radiance_depth
        self.cam = self.ref = self.wfield = self.dual = None
        if self.mode == "dualdirv":
            self.dual = RadianceNet(
                "dual", b, rng, degree=deg, hidden=rw, depth=rd, n_dir_inputs=2, dtype=dtype
            )
        else:
            self.cam = RadianceNet("cam", b, rng, degree=deg, hidden=rw, depth=rd, dtype=dtype)
            self.ref = RadianceNet("ref", b, rng, degree=deg, hidden=rw, depth=rd, dtype=dtype)
            self.wfield = WeightNet("wfield", b, rng, hidden=mcfg.weight_hidden, dtype=dtype)
        self.beta = ad.Param("beta", np.array([np.log(mcfg.beta_init)], dtype=dtype))

    def parameters(self):
        """Stable-ordered list of every in-memory tensor, including nets the
        mode never evaluates (their gradients stay exactly zero)."""
        out = list(self.pyramid.parameters())
        out += self.sdf.parameters()
        out += self.prop.parameters()
        for net in (self.cam, self.ref, self.wfield, self.dual):
            if net is not None:
                out += net.parameters()
        out.append(self.beta)
        return out

    def trainable_parameters(self):
        """The optimizer's view: geometry plus the nets this mode evaluates.
        camv drops ref/wfield, refv drops cam/wfield."""
        frozen = {
            "unified": (),
            "dualdirv": (),
            "camv": ("ref/", "wfield/"),
            "refv": ("cam/", "wfield/"),
        }[self.mode]
        return [p for p in self.parameters() if not p.name.startswith(frozen)]

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def beta_value(self, tape):
        """Positive density sharpness as a taped scalar."""
        return ad.exp(tape.watch(self.beta))

    def state_tensors(self):
        """Ordered name -> values mapping for checkpointing. Only trainable
        tensors are persisted, so a camv checkpoint carries no ref/wfield."""
        return {p.name: p.values for p in self.trainable_parameters()}

    def load_state(self, tensors):
        mine = {p.name: p for p in self.trainable_parameters()}
        missing = sorted(set(mine) - set(tensors))
        extra = sorted(set(tensors) - set(mine))
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing={missing}, unexpected={extra}")
        for name, p in mine.items():
            arr = np.asarray(tensors[name], dtype=p.values.dtype)
            if arr.shape != p.values.shape:
                raise ValueError(
                    f"tensor {name}: checkpoint shape {arr.shape} != model shape {p.values.shape}"
                )
            p.values[...] = arr

    def save(self, path, extra_tensors=None):
        tensors = self.state_tensors()
        if extra_tensors:
            tensors = {**tensors, **extra_tensors}
        checkpoint.save_tensors(path, tensors)


def load_bundle(path, mcfg, rng=None):
    """Rebuild a bundle from config + checkpoint; extra (e.g. optimizer)
    tensors are returned separately."""
    rng = rng if rng is not None else np.random.default_rng(0)
    bundle = FieldBundle(mcfg, rng)
    tensors = checkpoint.load_tensors(path)
    model_names = set(bundle.named_parameters())
    model_part = {k: v for k, v in tensors.items() if k in model_names}
    extra = {k: v for k, v in tensors.items() if k not in model_names}
    bundle.load_state(model_part)
    return bundle, extra

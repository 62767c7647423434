"""Volume rendering and the per-pixel blend of the two radiance fields.

The pipeline per ray batch: two proposal rounds refine the sample
placement, the final round evaluates the full field bundle, and the three
rendered quantities (camera-view color, reflected-view color, blend
weight) are composed per pixel, never per sample. Background color enters
each color against the residual transmittance before composition, so
C = W * C_ref + (1 - W) * C_cam holds exactly on the outputs.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import sampling
from .appearance import dir_encoding, dir_encoding_np, reflect
from .fields import laplace_density


class RenderError(RuntimeError):
    """Non-finite intermediate; message names the stage."""


def _check_finite(stage, value):
    data = value.data if isinstance(value, ad.Value) else value
    if not np.all(np.isfinite(data)):
        raise RenderError(f"non-finite values at stage '{stage}'")


@dataclass
class RenderOutputs:
    rgb: ad.Value        # (R, 3) composed color
    rgb_cam: ad.Value    # (R, 3)
    rgb_ref: ad.Value    # (R, 3)
    weight: ad.Value     # (R, 1) rendered blend weight in [0, 1]
    normal: ad.Value     # (R, 3) unit normal (zero on empty rays)
    depth: ad.Value      # (R, 1) expected termination distance
    acc: ad.Value        # (R, 1) accumulated opacity
    aux: dict            # taped ingredients for the losses


def alpha_from_density(sigma, delta):
    """Per-sample opacity 1 - exp(-sigma * delta)."""
    return 1.0 - ad.exp(ad.neg(sigma * delta))


def composite_weights(sigma, delta):
    """Rendering weights from densities over interval widths.

    Transmittance uses the exclusive cumulative optical depth, so weights
    are w_i = T_i * alpha_i with T_i = exp(-sum_{j<i} sigma_j delta_j),
    identical to the product form prod(1 - alpha_j). Every round (proposal
    and final) funnels through this one function. Returns (w, t_end) with
    t_end the residual transmittance past the last sample, shape (R, 1).
    """
    sd = sigma * delta
    alpha = 1.0 - ad.exp(ad.neg(sd))
    trans = ad.exp(ad.neg(ad.cumsum_exclusive(sd, axis=-1)))
    w = trans * alpha
    t_end = ad.exp(ad.neg(ad.sum_(sd, axis=-1, keepdims=True)))
    return w, t_end


def render_quantity(w, values):
    """Accumulate per-sample vectors: sum_i w_i v_i along the sample axis."""
    if isinstance(values, np.ndarray):
        values = w.tape.constant(values.astype(w.dtype))
    if values.data.ndim == 3:
        w = ad.reshape(w, (w.shape[0], w.shape[1], 1))
    return ad.sum_(w * values, axis=1)


def compose_pixel(weight, c_ref, c_cam):
    """C = W * C_ref + (1 - W) * C_cam, per pixel."""
    return weight * c_ref + (1.0 - weight) * c_cam


def _sample_positions(origins, dirs, mids, dt):
    pos = origins[:, None, :] + mids[:, :, None] * dirs[:, None, :]
    return np.ascontiguousarray(pos.reshape(-1, 3).astype(dt))


def _density_weights(tape, net, beta, origins, dirs, edges, active, dt):
    """One density-only round: evaluate net at interval midpoints."""
    mids = sampling.midpoints(edges)
    delta = tape.constant(sampling.widths(edges).astype(dt))
    pos = _sample_positions(origins, dirs, mids, dt)
    out = net.forward(tape, pos, active)
    sigma = ad.reshape(laplace_density(out["d"], beta), edges[:, :-1].shape)
    return composite_weights(sigma, delta)


def render_rays(
    tape,
    bundle,
    origins,
    dirs,
    background,
    spacing,
    counts,
    rng=None,
    train_frac=1.0,
    want_losses=False,
):
    """Full per-batch rendering pass.

    origins/dirs: (R, 3) with unit directions. background: (R, 3) linear
    color composited against residual transmittance. spacing: a
    sampling.Spacing. counts: per-round interval counts, the last one being
    the final round. rng=None renders with deterministic midpoint
    stratification (evaluation); an rng generator enables stratified jitter
    and marks the training path.
    """
    origins = np.asarray(origins, np.float64)
    dirs = np.asarray(dirs, np.float64)
    n_rays = origins.shape[0]
    dt = bundle.pyramid.tables[0].values.dtype  # model precision rules the tape
    active = bundle.pyramid.active_levels(train_frac)
    beta = bundle.beta_value(tape)

    edges = sampling.init_intervals(spacing, counts[0], n_rays)
    prop_rounds = []
    for n_next in counts[1:]:
        w_prop, _ = _density_weights(tape, bundle.prop, beta, origins, dirs, edges, active, dt)
        _check_finite("proposal weights", w_prop)
        prop_rounds.append((edges, w_prop))
        edges = sampling.resample(spacing, edges, w_prop.data.astype(np.float64), n_next, rng)

    n_samp = counts[-1]
    mids = sampling.midpoints(edges)
    delta = tape.constant(sampling.widths(edges).astype(dt))
    pos = _sample_positions(origins, dirs, mids, dt)
    sdf_out = bundle.sdf.forward(tape, pos, active, want_normals=True, want_aux=True)
    _check_finite("signed distance", sdf_out["d"])
    sigma = ad.reshape(laplace_density(sdf_out["d"], beta), (n_rays, n_samp))
    _check_finite("density", sigma)
    w, t_end = composite_weights(sigma, delta)
    _check_finite("rendering weights", w)

    if bundle.cfg.use_predicted_normal:
        normal = sdf_out["n_pred"]
    else:
        normal = sdf_out["normal"]
    y_const = tape.constant(sdf_out["y"])
    dirs_samp = np.repeat(dirs.astype(dt), n_samp, axis=0)
    bg = tape.constant(np.asarray(background, dt))

    def accumulate_color(c_samples):
        return render_quantity(w, ad.reshape(c_samples, (n_rays, n_samp, 3))) + t_end * bg

    if bundle.mode == "unified":
        enc_d = tape.constant(dir_encoding_np(dirs_samp, bundle.cfg.dir_degree, dt))
        omega_r = reflect(tape, normal, dirs_samp)
        enc_r = dir_encoding(tape, omega_r, bundle.cfg.dir_degree)
        c_cam = bundle.cam.forward(tape, [y_const, enc_d, normal, sdf_out["b"]])
        c_ref = bundle.ref.forward(tape, [y_const, enc_r, normal, sdf_out["b"]])
        w_samp = bundle.wfield.forward(tape, [y_const, normal, sdf_out["b"]])
        rgb_cam = accumulate_color(c_cam)
        rgb_ref = accumulate_color(c_ref)
        weight = render_quantity(w, ad.reshape(w_samp, (n_rays, n_samp)))
        weight = ad.reshape(weight, (n_rays, 1))
        rgb = compose_pixel(weight, rgb_ref, rgb_cam)
    elif bundle.mode == "camv":
        enc_d = tape.constant(dir_encoding_np(dirs_samp, bundle.cfg.dir_degree, dt))
        c_cam = bundle.cam.forward(tape, [y_const, enc_d, normal, sdf_out["b"]])
        rgb_cam = accumulate_color(c_cam)
        rgb_ref = rgb_cam
        weight = tape.constant(np.zeros((n_rays, 1), dt))
        rgb = rgb_cam
    elif bundle.mode == "refv":
        omega_r = reflect(tape, normal, dirs_samp)
        enc_r = dir_encoding(tape, omega_r, bundle.cfg.dir_degree)
        c_ref = bundle.ref.forward(tape, [y_const, enc_r, normal, sdf_out["b"]])
        rgb_ref = accumulate_color(c_ref)
        rgb_cam = rgb_ref
        weight = tape.constant(np.ones((n_rays, 1), dt))
        rgb = rgb_ref
    elif bundle.mode == "dualdirv":
        enc_d = tape.constant(dir_encoding_np(dirs_samp, bundle.cfg.dir_degree, dt))
        omega_r = reflect(tape, normal, dirs_samp)
        enc_r = dir_encoding(tape, omega_r, bundle.cfg.dir_degree)
        c_dual = bundle.dual.forward(tape, [y_const, enc_d, enc_r, normal, sdf_out["b"]])
        rgb_cam = accumulate_color(c_dual)
        rgb_ref = rgb_cam
        weight = tape.constant(np.zeros((n_rays, 1), dt))
        rgb = rgb_cam
    else:
        raise ValueError(f"unknown mode {bundle.mode!r}")
    _check_finite("composed color", rgb)

    normal_acc = render_quantity(w, ad.reshape(sdf_out["normal"], (n_rays, n_samp, 3)))
    normal_out = normal_acc / ad.sqrt(ad.sum_(ad.square(normal_acc), axis=-1, keepdims=True) + 1e-12)
    depth = render_quantity(w, mids.astype(dt))
    depth = ad.reshape(depth, (n_rays, 1))
    acc = ad.reshape(ad.sum_(w, axis=-1), (n_rays, 1))

    aux = {}
    if want_losses:
        aux = {
            "weights": w,
            "edges": edges,
            "prop_rounds": prop_rounds,
            "grad_norm": sdf_out["grad_norm"],
            "normal": normal,
            "normal_analytic": sdf_out["normal"],
            "n_pred": sdf_out["n_pred"],
            "dirs_per_sample": dirs_samp,
            "n_samples": n_samp,
            "beta": beta,
            "active": active,
        }

    return RenderOutputs(
        rgb=rgb,
        rgb_cam=rgb_cam,
        rgb_ref=rgb_ref,
        weight=weight,
        normal=normal_out,
        depth=depth,
        acc=acc,
        aux=aux,
    )


def render_chunks(render_fn, n_rays, chunk):
    """Run render_fn(lo, hi) -> dict of arrays over ray chunks and stitch."""
    parts = []
    for lo in range(0, n_rays, chunk):
        parts.append(render_fn(lo, min(lo + chunk, n_rays)))
    return {k: np.concatenate([p[k] for p in parts], axis=0) for k in parts[0]}


def render_view(bundle, dataset_views, view_id, background_fn, spacing, counts, chunk=4096):
    """Deterministically render one posed view in chunks.

    dataset_views: the dataset's view list; background_fn(dirs) -> (N, 3).
    Returns numpy arrays shaped (H, W, C): rgb, rgb_cam, rgb_ref, weight,
    normal, depth, acc.
    """
    from . import datasets  # local import: datasets pulls in cv2

    view = dataset_views[view_id]
    origins, dirs = datasets.view_rays(view)
    bg = background_fn(dirs)

    def run(lo, hi):
        tape = ad.Tape()
        outs = render_rays(
            tape, bundle, origins[lo:hi], dirs[lo:hi], bg[lo:hi],
            spacing, counts, rng=None, train_frac=1.0,
        )
        tape.release()
        return {
            "rgb": outs.rgb.data,
            "rgb_cam": outs.rgb_cam.data,
            "rgb_ref": outs.rgb_ref.data,
            "weight": outs.weight.data,
            "normal": outs.normal.data,
            "depth": outs.depth.data,
            "acc": outs.acc.data,
        }

    flat = render_chunks(run, origins.shape[0], chunk)
    h, w = view.height, view.width
    return {k: v.reshape(h, w, v.shape[-1]) for k, v in flat.items()}

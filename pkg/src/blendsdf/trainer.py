"""Training loop: Adam over all trainable tensors, warmup plus logarithmic
learning-rate decay, random ray batches, divergence handling, CSV logging,
checkpointing and resume.

Determinism: the init RNG is seeded with [seed, 1], and every step draws a
fresh generator seeded with [seed, 2, step], so a resumed run replays the
exact batch/jitter/eikonal randomness of an uninterrupted one.
"""

import csv
import logging
import os

import numpy as np

from . import autodiff as ad
from . import config as config_mod
from . import datasets, losses, metrics, renderer, sampling
from .model import FieldBundle, load_bundle

log = logging.getLogger(__name__)

LOG_COLUMNS = (
    "step",
    "lr",
    "color",
    "eikonal",
    "smoothness",
    "orientation",
    "grid",
    "proposal",
    "total",
    "val_psnr",
)


class DivergenceError(RuntimeError):
    """Loss went non-finite twice in a row; last good state was saved."""


def lr_schedule(frac, lr_hi=5e-3, lr_lo=5e-4, warmup=0.02):
    """Learning rate at training fraction `frac` in [0, 1]: linear 0 -> lr_hi
    over the warmup fraction, then log-linear decay to lr_lo."""
    if not 0.0 <= frac <= 1.0:
        raise ValueError(f"training fraction {frac} outside [0, 1]")
    if warmup > 0.0 and frac < warmup:
        return lr_hi * frac / warmup
    span = max(1.0 - warmup, 1e-12)
    u = (frac - warmup) / span
    return float(lr_hi * np.exp(u * np.log(lr_lo / lr_hi)))


class Adam:
    """Bias-corrected Adam over a fixed parameter list."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-6):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {p.name: np.zeros_like(p.values) for p in self.params}
        self.v = {p.name: np.zeros_like(p.values) for p in self.params}

    def grads_finite(self):
        return all(np.all(np.isfinite(p.grad)) for p in self.params)

    def step(self, lr):
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p in self.params:
            g = p.grad
            m = self.m[p.name]
            v = self.v[p.name]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.values -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)

    def state_tensors(self):
        out = {"optim/step": np.array([self.step_count], np.float32)}
        for p in self.params:
            out[f"adam/m/{p.name}"] = self.m[p.name]
            out[f"adam/v/{p.name}"] = self.v[p.name]
        return out

    def load_state(self, tensors):
        self.step_count = int(tensors["optim/step"][0])
        for p in self.params:
            self.m[p.name][...] = tensors[f"adam/m/{p.name}"]
            self.v[p.name][...] = tensors[f"adam/v/{p.name}"]


def training_view_ids(dataset, holdout):
    """All view indices minus the held-out one (kept when it is the only view)."""
    n = len(dataset)
    hold = (holdout + n) % n if holdout < 0 else holdout
    if hold >= n:
        raise ValueError(f"holdout view {holdout} outside dataset of {n} views")
    ids = [i for i in range(n) if i != hold]
    return (ids or [hold]), hold


def sample_ray_batch(pool, batch, rng):
    """Random rays-with-targets from a flatten_rays pool."""
    origins, dirs, rgb, bg = pool
    idx = rng.integers(0, origins.shape[0], batch)
    return origins[idx], dirs[idx], rgb[idx], bg[idx]


def validation_psnr(bundle, dataset, view_id, spacing, counts, chunk):
    """Render the held-out view deterministically and PSNR it against GT."""
    out = renderer.render_view(
        bundle, dataset.views, view_id,
        lambda dirs: datasets.ray_background(dataset, dirs),
        spacing, counts, chunk=chunk,
    )
    return metrics.psnr(out["rgb"], dataset.images[view_id])


def train(dataset, cfg, out_dir, resume=None):
    """Run the full loop; returns (bundle, rows) where rows mirror the CSV.

    Writes train_log.csv plus model.usdf (and model_{step:06d}.usdf at the
    configured cadence) into out_dir. Non-finite loss or gradients skip the
    step; two consecutive bad losses abort with DivergenceError after saving
    the last good state.
    """
    os.makedirs(out_dir, exist_ok=True)
    tcfg = cfg.trainer
    scene_mode = config_mod.resolve_scene_mode(cfg, dataset)
    spacing = sampling.Spacing(
        config_mod.resolve_spacing(cfg, scene_mode),
        cfg.dataset.near or dataset.near,
        cfg.dataset.far or dataset.far,
    )
    counts = config_mod.resolve_counts(cfg, scene_mode)

    init_rng = np.random.default_rng([tcfg.seed, 1])
    bundle = FieldBundle(cfg.model, init_rng)
    optim = Adam(
        bundle.trainable_parameters(),
        beta1=tcfg.adam_beta1,
        beta2=tcfg.adam_beta2,
        eps=tcfg.adam_eps,
    )
    start_step = 0
    if resume is not None:
        bundle, extra = load_bundle(resume, cfg.model, init_rng)
        optim = Adam(
            bundle.trainable_parameters(),
            beta1=tcfg.adam_beta1,
            beta2=tcfg.adam_beta2,
            eps=tcfg.adam_eps,
        )
        if "optim/step" in extra:
            optim.load_state(extra)
        start_step = optim.step_count

    view_ids, holdout = training_view_ids(dataset, tcfg.holdout_view)
    pool = datasets.flatten_rays(dataset, view_ids)

    steps = tcfg.steps
    validate_every = max(1, int(round(steps * tcfg.validate_frac))) if steps else 0
    rows = []
    bad_streak = 0

    def save(path_name):
        bundle.save(os.path.join(out_dir, path_name), extra_tensors=optim.state_tensors())

    for step in range(start_step, steps):
        frac = step / steps
        lr = lr_schedule(frac, tcfg.lr_hi, tcfg.lr_lo, tcfg.warmup_frac)
        rng = np.random.default_rng([tcfg.seed, 2, step])
        origins, dirs, target, bg = sample_ray_batch(pool, tcfg.batch, rng)

        for p in bundle.parameters():
            p.grad[...] = 0.0
        breakdown = dict.fromkeys(LOG_COLUMNS[2:-1], 0.0)
        try:
            # one tape per chunk bounds graph memory; gradients accumulate
            for c0 in range(0, len(origins), tcfg.grad_chunk):
                c1 = min(c0 + tcfg.grad_chunk, len(origins))
                share = (c1 - c0) / len(origins)
                tape = ad.Tape()
                outs = renderer.render_rays(
                    tape, bundle, origins[c0:c1], dirs[c0:c1], bg[c0:c1],
                    spacing, counts, rng=rng, train_frac=frac, want_losses=True,
                )
                total, parts = losses.total_loss(
                    tape, bundle, outs, target[c0:c1], cfg.loss, rng=rng)
                tape.backward(total, seed=np.full_like(total.data, share))
                tape.accumulate_param_grads()
                tape.release()
                for k, v in parts.items():
                    breakdown[k] += share * v
        except (renderer.RenderError, losses.LossError) as err:
            bad_streak += 1
            log.warning("step %d: %s (%d consecutive)", step, err, bad_streak)
            if bad_streak >= 2:
                save("model.usdf")
                _write_log(out_dir, rows)
                raise DivergenceError(f"aborting at step {step}: {err}") from err
            continue
        bad_streak = 0

        if not optim.grads_finite():
            log.warning("step %d: non-finite gradient, step skipped", step)
            continue
        optim.step(lr)

        val = ""
        done = step + 1
        if validate_every and (done % validate_every == 0 or done == steps):
            val = validation_psnr(bundle, dataset, holdout, spacing, counts, tcfg.batch)
        rows.append([step, lr] + [breakdown[k] for k in LOG_COLUMNS[2:-1]] + [val])
        if tcfg.checkpoint_every and done % tcfg.checkpoint_every == 0 and done != steps:
            save(f"model_{done:06d}.usdf")

    save("model.usdf")
    _write_log(out_dir, rows)
    return bundle, rows


def _write_log(out_dir, rows):
    with open(os.path.join(out_dir, "train_log.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"

"""Command line front end: synth, train, render, mesh, eval, bench.

Exit codes: 0 success, 2 usage or configuration error, 3 training diverged.
Every command is deterministic given its config and seed; the
config.resolved.json written next to each run's outputs is sufficient to
reproduce them byte for byte on the same build.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import config as config_mod
from . import bench, datasets, io, meshing, metrics, renderer, sampling, synth, trainer
from .model import load_bundle

log = logging.getLogger(__name__)

# Weight-map visualization: W=0 renders blue, W=1 renders red, linear in W.
WEIGHT_COLD = np.array([0.10, 0.20, 0.85])
WEIGHT_HOT = np.array([0.85, 0.15, 0.10])


def weight_colormap(w):
    """(H, W, 1) blend weight in [0,1] -> red-blue RGB panel."""
    w = np.clip(np.asarray(w, np.float64), 0.0, 1.0)
    return (1.0 - w) * WEIGHT_COLD + w * WEIGHT_HOT


def _parse_overrides(items):
    """--set section.key=value pairs -> {section: {key: parsed value}}."""
    out = {}
    for item in items or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise config_mod.ConfigError(
                f"--set expects section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings don't need quoting
        out.setdefault(section, {})[key] = value
    return out


def _parse_views(spec, n_views):
    if spec is None:
        return list(range(n_views))
    ids = []
    for part in spec.split(","):
        i = int(part)
        if not 0 <= i < n_views:
            raise config_mod.ConfigError(
                f"view {i} outside dataset of {n_views} views")
        ids.append(i)
    return ids


def _runtime(cfg, dataset):
    """Resolve (scene_mode, spacing, counts) the same way training does."""
    scene_mode = config_mod.resolve_scene_mode(cfg, dataset)
    spacing = sampling.Spacing(
        config_mod.resolve_spacing(cfg, scene_mode),
        cfg.dataset.near or dataset.near,
        cfg.dataset.far or dataset.far,
    )
    return scene_mode, spacing, config_mod.resolve_counts(cfg, scene_mode)


def _load_run(args):
    """Shared render/mesh/eval setup: config + checkpoint (+ dataset)."""
    config_path = args.config
    if config_path is None:
        candidate = os.path.join(os.path.dirname(os.path.abspath(args.ckpt)),
                                 "config.resolved.json")
        if not os.path.exists(candidate):
            raise config_mod.ConfigError(
                "no --config given and no config.resolved.json next to the checkpoint")
        config_path = candidate
    cfg = config_mod.load_config(config_path, _parse_overrides(getattr(args, "set", None)))
    dataset = datasets.load_dataset(args.data) if args.data else None
    rng = np.random.default_rng([cfg.trainer.seed, 1])
    bundle, _ = load_bundle(args.ckpt, cfg.model, rng)
    return cfg, dataset, bundle


def cmd_synth(args):
    try:
        scene = synth.preset_scene(args.scene)
    except ValueError as e:
        raise config_mod.ConfigError(str(e)) from e
    rng = np.random.default_rng([args.seed])
    dataset = synth.generate_dataset(scene, args.views, args.res, rng, args.out)
    print(f"wrote {len(dataset)} views to {args.out}")
    return 0


def cmd_train(args):
    cfg = config_mod.load_config(args.config, _parse_overrides(args.set))
    if args.data:
        cfg.dataset.path = args.data
    if not cfg.dataset.path:
        raise config_mod.ConfigError("no dataset: pass --data or set dataset.path")
    dataset = datasets.load_dataset(cfg.dataset.path)
    os.makedirs(args.out, exist_ok=True)
    config_mod.save_resolved(cfg, os.path.join(args.out, "config.resolved.json"))
    bundle, rows = trainer.train(dataset, cfg, args.out, resume=args.resume)
    last = rows[-1] if rows else None
    print(f"trained {cfg.trainer.steps} steps -> {os.path.join(args.out, 'model.usdf')}"
          + (f" (final loss {last[-2]:.4g})" if last else ""))
    return 0


def cmd_render(args):
    cfg, dataset, bundle = _load_run(args)
    if dataset is None:
        raise config_mod.ConfigError("render needs --data for camera poses")
    _, spacing, counts = _runtime(cfg, dataset)
    os.makedirs(args.out, exist_ok=True)
    view_ids = _parse_views(args.views, len(dataset))
    for i in view_ids:
        out = renderer.render_view(
            bundle, dataset.views, i,
            lambda dirs: datasets.ray_background(dataset, dirs),
            spacing, counts, chunk=args.chunk,
        )
        stem = os.path.join(args.out, f"view_{i:03d}")
        io.write_png16(stem + ".png", out["rgb"])
        io.write_pfm(stem + "_depth.pfm", out["depth"][:, :, 0])
        io.write_pfm(stem + "_normal.pfm", out["normal"])
        io.write_pfm(stem + "_weight.pfm", out["weight"][:, :, 0])
        if args.decompose:
            io.write_png16(stem + "_cam.png", out["rgb_cam"])
            io.write_png16(stem + "_ref.png", out["rgb_ref"])
            io.write_png8(stem + "_weight.png", weight_colormap(out["weight"]), srgb=False)
            io.write_png8(stem + "_normal.png", 0.5 * (out["normal"] + 1.0), srgb=False)
        log.info("rendered view %d", i)
    print(f"rendered {len(view_ids)} views to {args.out}")
    return 0


def cmd_mesh(args):
    cfg, dataset, bundle = _load_run(args)
    scene_mode = config_mod.resolve_scene_mode(cfg, dataset)
    res = args.res or cfg.eval.mesh_res
    verts, faces = meshing.extract_mesh(bundle, res, scene_mode, bound=cfg.eval.mesh_bound)
    normals = meshing.vertex_normals(bundle, verts) if len(verts) else None
    io.write_ply(args.out, verts, faces, normals)
    print(f"wrote {len(verts)} vertices / {len(faces)} faces to {args.out}")
    return 0


def cmd_eval(args):
    cfg, dataset, bundle = _load_run(args)
    if dataset is None:
        raise config_mod.ConfigError("eval needs --data")
    scene_mode, spacing, counts = _runtime(cfg, dataset)
    view_ids = _parse_views(args.views, len(dataset))
    wanted = set(cfg.eval.metrics)
    results = {}

    renders = {}
    if wanted & {"psnr", "normal_mae"}:
        for i in view_ids:
            renders[i] = renderer.render_view(
                bundle, dataset.views, i,
                lambda dirs: datasets.ray_background(dataset, dirs),
                spacing, counts, chunk=args.chunk,
            )
            log.info("rendered view %d", i)

    if "psnr" in wanted:
        per_view = {str(i): metrics.psnr(renders[i]["rgb"], dataset.images[i])
                    for i in view_ids}
        results["psnr"] = {
            "per_view": per_view,
            "mean": float(np.mean(list(per_view.values()))),
        }

    if "chamfer" in wanted:
        gt_path = os.path.join(dataset.path, "gt", "mesh.ply")
        if not os.path.exists(gt_path):
            log.warning("no gt mesh at %s, skipping chamfer", gt_path)
        else:
            verts, faces = meshing.extract_mesh(
                bundle, cfg.eval.mesh_res, scene_mode, bound=cfg.eval.mesh_bound)
            if len(faces) == 0:
                log.warning("extracted mesh is empty, skipping chamfer")
            else:
                gt_verts, gt_faces, _ = io.read_ply(gt_path)
                rng = np.random.default_rng([cfg.trainer.seed, 3])
                pa = metrics.sample_mesh_points(verts, faces, cfg.eval.chamfer_samples, rng)
                pb = metrics.sample_mesh_points(gt_verts, gt_faces, cfg.eval.chamfer_samples, rng)
                acc, comp, mean = metrics.chamfer(pa, pb)
                results["chamfer"] = {"accuracy": acc, "completeness": comp, "mean": mean}

    if "normal_mae" in wanted:
        angles = []
        for i in view_ids:
            try:
                gt_n = datasets.load_gt(dataset.path, i, "normal")
                mask = datasets.load_gt(dataset.path, i, "mask")
            except OSError as e:
                log.warning("missing gt for view %d (%s), skipping normal_mae", i, e)
                angles = None
                break
            if mask.any():
                angles.append((renders[i]["normal"][mask], gt_n[mask]))
        if angles:
            n_hat = np.concatenate([a for a, _ in angles])
            n_gt = np.concatenate([b for _, b in angles])
            results["normal_mae_deg"] = metrics.normal_mae(
                n_hat, n_gt, np.ones(len(n_hat), bool))

    out_path = args.out or "metrics.json"
    with open(out_path, "w") as f:
        json.dump(results, f, indent=1, sort_keys=True)
        f.write("\n")
    print(json.dumps(results, indent=1, sort_keys=True))
    return 0


def cmd_bench(args):
    bench.main(n_points=args.points, trace_res=args.trace_res, repeats=args.repeats)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="blendsdf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic dataset from an analytic preset")
    sp.add_argument("--scene", required=True, help=f"one of: {', '.join(synth.PRESETS)}")
    sp.add_argument("--views", type=int, default=64)
    sp.add_argument("--res", type=int, default=64)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("train", help="optimize a field bundle on a dataset")
    tp.add_argument("--data", help="dataset directory (overrides config dataset.path)")
    tp.add_argument("--config", help="JSON run config; defaults apply when omitted")
    tp.add_argument("--out", required=True)
    tp.add_argument("--resume", help="checkpoint to continue from")
    tp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                    help="override a config value")
    tp.set_defaults(func=cmd_train)

    rp = sub.add_parser("render", help="render dataset views from a checkpoint")
    rp.add_argument("--ckpt", required=True)
    rp.add_argument("--data", required=True)
    rp.add_argument("--config", help="defaults to config.resolved.json next to the checkpoint")
    rp.add_argument("--out", required=True)
    rp.add_argument("--views", help="comma-separated view indices (default all)")
    rp.add_argument("--decompose", action="store_true",
                    help="also write the blended/camera/reflected/weight/normal panels")
    rp.add_argument("--chunk", type=int, default=4096)
    rp.set_defaults(func=cmd_render)

    mp = sub.add_parser("mesh", help="extract a triangle mesh from a checkpoint")
    mp.add_argument("--ckpt", required=True)
    mp.add_argument("--data", help="dataset directory (used to resolve the scene mode)")
    mp.add_argument("--config", help="defaults to config.resolved.json next to the checkpoint")
    mp.add_argument("--out", required=True, help="output PLY path")
    mp.add_argument("--res", type=int, help="marching-cubes grid resolution")
    mp.set_defaults(func=cmd_mesh)

    ep = sub.add_parser("eval", help="compute PSNR / chamfer / normal error against ground truth")
    ep.add_argument("--ckpt", required=True)
    ep.add_argument("--data", required=True)
    ep.add_argument("--config", help="defaults to config.resolved.json next to the checkpoint")
    ep.add_argument("--out", help="metrics JSON path (default metrics.json)")
    ep.add_argument("--views", help="comma-separated view indices (default all)")
    ep.add_argument("--chunk", type=int, default=4096)
    ep.set_defaults(func=cmd_eval)

    bp = sub.add_parser("bench", help="time the numba kernels against the numpy fallback")
    bp.add_argument("--points", type=int, default=1 << 15)
    bp.add_argument("--trace-res", type=int, default=96)
    bp.add_argument("--repeats", type=int, default=5)
    bp.set_defaults(func=cmd_bench)

    return p


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except config_mod.ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except trainer.DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

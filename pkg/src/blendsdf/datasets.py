"""Posed multi-view datasets on disk and the rays they induce.

Directory layout: cameras.json describing every view (3x3 intrinsics, 4x4
camera-to-world, row-major) plus scene metadata (near/far, scene mode,
environment map parameters), images/%04d.png with linear 16-bit pixels,
and an optional gt/ directory with depth/normal PFMs, masks and a mesh.

Camera convention: pinhole, x right / y down / z forward in camera space,
world z up. Rays go through pixel centers.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import io
from .kernels import env_color


@dataclass
class View:
    intrinsics: np.ndarray       # (3, 3)
    camera_to_world: np.ndarray  # (4, 4) rigid
    width: int
    height: int


@dataclass
class Dataset:
    path: str
    views: list
    images: list                 # (H, W, 3) float32 linear, parallel to views
    near: float
    far: float
    scene_mode: str              # "object" | "unbounded"
    preset: str = ""
    environment: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.views)


def look_at(position, target, up=(0.0, 0.0, 1.0)):
    """Camera-to-world rotation+translation for a camera at `position`
    looking toward `target` (y axis points down in world terms)."""
    position = np.asarray(position, np.float64)
    forward = np.asarray(target, np.float64) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, np.float64))
    if np.linalg.norm(right) < 1e-8:
        right = np.cross(forward, (0.0, 1.0, 0.0))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    c2w = np.eye(4)
    c2w[:3, 0] = right
    c2w[:3, 1] = down
    c2w[:3, 2] = forward
    c2w[:3, 3] = position
    return c2w


def intrinsics_for(width, height, fov_deg=50.0):
    """Symmetric pinhole intrinsics from a horizontal field of view."""
    fx = 0.5 * width / np.tan(np.radians(fov_deg) * 0.5)
    return np.array([[fx, 0.0, width * 0.5], [0.0, fx, height * 0.5], [0.0, 0.0, 1.0]])


def view_rays(view):
    """All pixel-center rays of a view: origins and unit directions,
    each (H*W, 3), row-major pixel order."""
    k = view.intrinsics
    u = (np.arange(view.width) + 0.5 - k[0, 2]) / k[0, 0]
    v = (np.arange(view.height) + 0.5 - k[1, 2]) / k[1, 1]
    uu, vv = np.meshgrid(u, v)
    d_cam = np.stack([uu, vv, np.ones_like(uu)], axis=-1).reshape(-1, 3)
    d_world = d_cam @ view.camera_to_world[:3, :3].T
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(view.camera_to_world[:3, 3], d_world.shape)
    return np.ascontiguousarray(origins), d_world


def environment_values(env, dirs):
    """Evaluate stored environment-map parameters for unit directions."""
    return env_color(
        np.asarray(dirs, np.float64),
        np.asarray(env["bottom"], np.float64),
        np.asarray(env["top"], np.float64),
        np.asarray(env["blob_dirs"], np.float64),
        np.asarray(env["blob_cols"], np.float64),
        float(env["power"]),
    )


def ray_background(dataset, dirs):
    """Per-ray background color: the environment map when the dataset
    carries one, else mid-grey."""
    if dataset.environment:
        return environment_values(dataset.environment, dirs).astype(np.float32)
    return np.full((len(dirs), 3), 0.5, np.float32)


def save_metadata(path, views, near, far, scene_mode, preset="", environment=None):
    doc = {
        "near": float(near),
        "far": float(far),
        "scene_mode": scene_mode,
        "preset": preset,
        "environment": environment or {},
        "views": [
            {
                "width": int(v.width),
                "height": int(v.height),
                "intrinsics": np.asarray(v.intrinsics, np.float64).tolist(),
                "camera_to_world": np.asarray(v.camera_to_world, np.float64).tolist(),
            }
            for v in views
        ],
    }
    with open(os.path.join(path, "cameras.json"), "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)


def load_dataset(path, with_images=True):
    with open(os.path.join(path, "cameras.json")) as f:
        doc = json.load(f)
    views = [
        View(
            intrinsics=np.asarray(v["intrinsics"], np.float64),
            camera_to_world=np.asarray(v["camera_to_world"], np.float64),
            width=int(v["width"]),
            height=int(v["height"]),
        )
        for v in doc["views"]
    ]
    images = []
    if with_images:
        for i in range(len(views)):
            img = io.read_png(os.path.join(path, "images", f"{i:04d}.png"))
            if img.shape[:2] != (views[i].height, views[i].width):
                raise ValueError(f"image {i} shape {img.shape} mismatches its view")
            images.append(img)
    return Dataset(
        path=path,
        views=views,
        images=images,
        near=float(doc["near"]),
        far=float(doc["far"]),
        scene_mode=doc["scene_mode"],
        preset=doc.get("preset", ""),
        environment=doc.get("environment", {}),
    )


def load_gt(path, index, what):
    """Ground-truth accessor: what in {'depth','normal','mask'}."""
    gt_dir = os.path.join(path, "gt")
    if what == "depth":
        return io.read_pfm(os.path.join(gt_dir, f"depth_{index:04d}.pfm"))
    if what == "normal":
        return io.read_pfm(os.path.join(gt_dir, f"normal_{index:04d}.pfm"))
    if what == "mask":
        return io.read_mask(os.path.join(gt_dir, f"mask_{index:04d}.png"))
    raise ValueError(f"unknown ground-truth kind {what!r}")


def flatten_rays(dataset, view_ids):
    """Stack rays, target colors and backgrounds over the given views.

    Returns float32/float64 arrays: origins, dirs (f64, unit), rgb,
    background (f32), ready for random batch indexing.
    """
    origins, dirs, rgb = [], [], []
    for i in view_ids:
        o, d = view_rays(dataset.views[i])
        origins.append(o)
        dirs.append(d)
        rgb.append(dataset.images[i].reshape(-1, 3))
    origins = np.concatenate(origins, axis=0)
    dirs = np.concatenate(dirs, axis=0)
    rgb = np.concatenate(rgb, axis=0).astype(np.float32)
    bg = ray_background(dataset, dirs)
    return origins, dirs, rgb, bg

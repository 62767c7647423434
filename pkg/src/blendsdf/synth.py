"""Synthetic ground-truth scenes: exact-SDF primitives ray-traced under a
procedural environment map.

Shading is one-bounce: c = (1-s) * albedo * env(n) + s * env(reflected),
so a pure mirror pixel is exactly the environment looked up along the
mirrored view ray and a pure Lambertian pixel carries no view dependence.
That exact split is what the blend-weight experiments measure against.
"""

import os
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from . import datasets, io, kernels

TRACE_TOL = 1e-5
TRACE_MAX_STEPS = 256


@dataclass
class Primitive:
    kind: str            # sphere | box | plane
    params: tuple        # sphere: center+radius; box: center+half extents;
                         # plane: unit normal + offset (x.n = offset)
    albedo: tuple
    specular: float = 0.0


@dataclass
class AnalyticScene:
    name: str
    primitives: list
    mode: str = "object"           # object | unbounded
    near: float = 0.5
    far: float = 4.0
    camera_radius: float = 2.0
    environment: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.environment:
            self.environment = default_environment()
        for p in self.primitives:
            if not 0.0 <= p.specular <= 1.0:
                raise ValueError(f"specularity out of range: {p.specular}")

    def arrays(self):
        """Pack primitives for the trace/scene_sdf kernels."""
        kinds = {"sphere": kernels.PRIM_SPHERE, "box": kernels.PRIM_BOX, "plane": kernels.PRIM_PLANE}
        ptypes = np.array([kinds[p.kind] for p in self.primitives], np.int64)
        pdatas = np.zeros((len(self.primitives), 6), np.float64)
        mats = np.zeros((len(self.primitives), 4), np.float64)
        for i, p in enumerate(self.primitives):
            pdatas[i, : len(p.params)] = p.params
            mats[i, :3] = p.albedo
            mats[i, 3] = p.specular
        return ptypes, pdatas, mats

    def env_arrays(self):
        e = self.environment
        return (
            np.asarray(e["bottom"], np.float64),
            np.asarray(e["top"], np.float64),
            np.asarray(e["blob_dirs"], np.float64),
            np.asarray(e["blob_cols"], np.float64),
            float(e["power"]),
        )

    def sdf(self, x):
        ptypes, pdatas, _ = self.arrays()
        return kernels.scene_sdf(ptypes, pdatas, np.asarray(x, np.float64))[0]

    def trace(self, origins, dirs, t_max=None):
        """(rgb, depth, normal, hit, primitive index, specularity) per ray."""
        ptypes, pdatas, mats = self.arrays()
        bottom, top, bdirs, bcols, power = self.env_arrays()
        return kernels.trace(
            np.asarray(origins, np.float64),
            np.asarray(dirs, np.float64),
            ptypes,
            pdatas,
            mats,
            bottom,
            top,
            bdirs,
            bcols,
            power,
            TRACE_TOL,
            TRACE_MAX_STEPS,
            float(t_max if t_max is not None else self.far),
        )


def default_environment():
    """Vertical gradient plus three fixed directional blobs; values stay
    below 1 so 16-bit image targets never clip."""
    def unit(v):
        v = np.asarray(v, np.float64)
        return (v / np.linalg.norm(v)).tolist()

    return {
        "bottom": [0.30, 0.27, 0.25],
        "top": [0.38, 0.48, 0.62],
        "blob_dirs": [unit([0.4, 0.3, 0.85]), unit([-0.7, 0.2, 0.4]), unit([0.2, -0.8, 0.3])],
        "blob_cols": [[0.30, 0.27, 0.20], [0.16, 0.06, 0.03], [0.03, 0.08, 0.14]],
        "power": 32.0,
    }


def preset_scene(name):
    if name == "diffuse_sphere":
        return AnalyticScene(
            name,
            [Primitive("sphere", (0.0, 0.0, 0.0, 0.5), (0.75, 0.35, 0.25))],
        )
    if name == "mirror_ball":
        return AnalyticScene(
            name,
            [
                Primitive("sphere", (0.0, 0.0, 0.1, 0.5), (0.9, 0.9, 0.9), specular=1.0),
                Primitive("plane", (0.0, 0.0, 1.0, -0.4), (0.45, 0.42, 0.38)),
            ],
        )
    if name == "mixed":
        return AnalyticScene(
            name,
            [
                Primitive("sphere", (-0.45, 0.0, 0.0, 0.35), (0.9, 0.9, 0.9), specular=1.0),
                Primitive("sphere", (0.45, 0.0, 0.0, 0.35), (0.7, 0.3, 0.2)),
            ],
        )
    if name == "unbounded_car_proxy":
        return AnalyticScene(
            name,
            [
                Primitive("box", (0.0, 0.0, 0.0, 0.5, 0.25, 0.2), (0.35, 0.4, 0.5), specular=0.7),
                Primitive("plane", (0.0, 0.0, 1.0, -0.2), (0.5, 0.45, 0.4)),
            ],
            mode="unbounded",
            near=0.3,
            far=60.0,
            camera_radius=2.4,
        )
    raise ValueError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")


PRESETS = ("diffuse_sphere", "mirror_ball", "mixed", "unbounded_car_proxy")


def camera_positions(scene, n_views, rng):
    """Deterministic golden-angle spiral with a small seeded azimuth jitter."""
    k = np.arange(n_views)
    azimuth = k * 2.399963229728653 + rng.uniform(0.0, 0.3, n_views)
    if scene.mode == "object":
        lo, hi = np.radians(18.0), np.radians(52.0)
    else:
        lo, hi = np.radians(9.0), np.radians(30.0)
    elevation = lo + (hi - lo) * ((k % 7) + 0.5) / 7.0
    r = scene.camera_radius
    return np.stack(
        [
            r * np.cos(azimuth) * np.cos(elevation),
            r * np.sin(azimuth) * np.cos(elevation),
            r * np.sin(elevation),
        ],
        axis=-1,
    )


def gt_mesh(scene, resolution=192):
    """Marching cubes of the analytic SDF over the scene's core box."""
    bound = 1.0 if scene.mode == "object" else 1.2
    axis = np.linspace(-bound, bound, resolution)
    xx, yy, zz = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)
    grid = scene.sdf(pts).reshape(resolution, resolution, resolution)
    spacing = (axis[1] - axis[0],) * 3
    verts, faces, _, _ = measure.marching_cubes(
        grid, level=0.0, spacing=spacing, gradient_direction="ascent"
    )
    verts = verts + np.array([-bound, -bound, -bound])
    return verts.astype(np.float32), faces.astype(np.int32)


def generate_dataset(scene, n_views, resolution, rng, out_dir):
    """Trace every view and write the full dataset directory."""
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "gt"), exist_ok=True)

    positions = camera_positions(scene, n_views, rng)
    views = []
    for i in range(n_views):
        c2w = datasets.look_at(positions[i], (0.0, 0.0, 0.0))
        views.append(
            datasets.View(
                intrinsics=intrinsics(resolution),
                camera_to_world=c2w,
                width=resolution,
                height=resolution,
            )
        )

    for i, view in enumerate(views):
        origins, dirs = datasets.view_rays(view)
        rgb, depth, normal, hit, _, _ = scene.trace(origins, dirs)
        if rgb.max() > 1.0 + 1e-9:
            raise ValueError("environment overflow: shaded color above 1")
        h, w = view.height, view.width
        io.write_png16(os.path.join(out_dir, "images", f"{i:04d}.png"), rgb.reshape(h, w, 3))
        io.write_pfm(os.path.join(out_dir, "gt", f"depth_{i:04d}.pfm"), depth.reshape(h, w))
        io.write_pfm(os.path.join(out_dir, "gt", f"normal_{i:04d}.pfm"), normal.reshape(h, w, 3))
        io.write_mask(os.path.join(out_dir, "gt", f"mask_{i:04d}.png"), hit.reshape(h, w) > 0)

    verts, faces = gt_mesh(scene)
    io.write_ply(os.path.join(out_dir, "gt", "mesh.ply"), verts, faces)
    datasets.save_metadata(
        out_dir,
        views,
        near=scene.near,
        far=scene.far,
        scene_mode=scene.mode,
        preset=scene.name,
        environment=scene.environment,
    )
    return datasets.load_dataset(out_dir)


def intrinsics(resolution):
    return datasets.intrinsics_for(resolution, resolution)

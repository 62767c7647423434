"""Iso-surface extraction from a trained distance field.

The grid lives in contracted coordinates so unbounded scenes stay finite;
vertices map back to world through the inverse contraction. Object scenes
take a direct [-1,1]^3 world-space shortcut (contraction is the identity
on the unit ball). Winding follows the outward distance gradient.
"""

import warnings

import numpy as np
from skimage import measure

from . import autodiff as ad
from .fields import uncontract

CONTRACTED_LIMIT = 1.9  # stay clear of the ||y|| -> 2 singularity


def grid_field(sdf_fn, resolution, bound, chunk=131072):
    """Evaluate sdf_fn over a regular grid; returns (values, axis)."""
    axis = np.linspace(-bound, bound, resolution)
    xx, yy, zz = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)
    vals = np.empty(pts.shape[0], np.float32)
    for lo in range(0, pts.shape[0], chunk):
        vals[lo : lo + chunk] = sdf_fn(pts[lo : lo + chunk])
    return vals.reshape(resolution, resolution, resolution), axis


def marching_cubes(sdf_fn, resolution, bound, map_vertices=None):
    """Zero level set of sdf_fn over [-bound, bound]^3.

    sdf_fn: points (N, 3) -> distances (N,) in the grid's own coordinates.
    map_vertices: optional coordinate map applied to the vertices afterwards
    (used for the contracted-to-world transform). Returns (verts, faces);
    no sign change yields an empty mesh with a warning.
    """
    if resolution < 8:
        raise ValueError("resolution must be at least 8")
    grid, axis = grid_field(sdf_fn, resolution, bound)
    if grid.min() > 0.0 or grid.max() < 0.0:
        warnings.warn("no zero crossing in the sampled field; empty mesh")
        return np.zeros((0, 3), np.float32), np.zeros((0, 3), np.int32)
    spacing = (axis[1] - axis[0],) * 3
    verts, faces, _, _ = measure.marching_cubes(
        grid, level=0.0, spacing=spacing, gradient_direction="ascent"
    )
    verts = verts.astype(np.float64) - bound
    if map_vertices is not None:
        verts = map_vertices(verts)
    return verts.astype(np.float32), faces.astype(np.int32)


def bundle_sdf_fn(bundle, in_contracted):
    """Distance evaluator over grid coordinates for a trained bundle."""

    def fn(pts):
        x = uncontract(np.asarray(pts, np.float64)) if in_contracted else pts
        tape = ad.Tape()
        out = bundle.sdf.forward(tape, np.asarray(x, np.float32), bundle.pyramid.levels)
        tape.release()
        return out["d"].data

    return fn


def extract_mesh(bundle, resolution, scene_mode, bound=0.0):
    """Mesh a trained field: world box for object scenes, contracted ball
    slab (clamped to 1.9) for unbounded ones."""
    if scene_mode == "object":
        b = bound if bound > 0 else 1.0
        verts, faces = marching_cubes(bundle_sdf_fn(bundle, False), resolution, b)
    else:
        b = min(bound, CONTRACTED_LIMIT) if bound > 0 else CONTRACTED_LIMIT
        verts, faces = marching_cubes(
            bundle_sdf_fn(bundle, True), resolution, b, map_vertices=uncontract
        )
    return verts, faces


def vertex_normals(bundle, verts, chunk=65536):
    """Outward unit normals at world vertices from the field gradient."""
    if len(verts) == 0:
        return np.zeros((0, 3), np.float32)
    out = np.empty((len(verts), 3), np.float32)
    for lo in range(0, len(verts), chunk):
        tape = ad.Tape()
        res = bundle.sdf.forward(
            tape, np.asarray(verts[lo : lo + chunk], np.float32),
            bundle.pyramid.levels, want_normals=True,
        )
        tape.release()
        out[lo : lo + chunk] = res["normal"].data
    return out


def face_normals(verts, faces):
    """Unnormalized per-face normals from the winding order."""
    a, b, c = (verts[faces[:, i]].astype(np.float64) for i in range(3))
    return np.cross(b - a, c - a)

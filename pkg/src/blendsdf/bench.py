"""Timing comparison between the numba and pure-numpy kernel backends.

Runs each hot kernel on representative workloads and reports the best wall
time per backend plus the speedup. The numba functions are called once
before timing so JIT compilation never pollutes the numbers.
"""

import time

import numpy as np

from . import kernels_numba, kernels_numpy, synth


def _best_time(fn, args, repeats):
    fn(*args)  # warmup; compiles the numba variant
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def benchmark_cases(n_points=1 << 15, trace_res=96, seed=0):
    """Build (kernel name, args tuple) pairs shared verbatim by both backends."""
    rng = np.random.default_rng(seed)
    res = 64
    tsize = 1 << 16
    channels = 4
    table = rng.standard_normal((tsize, channels)).astype(np.float32)
    u = rng.uniform(0.0, res - 1.0, (n_points, 3)).astype(np.float32)
    g_feat = rng.standard_normal((n_points, channels)).astype(np.float32)
    g_jac = rng.standard_normal((n_points, channels, 3)).astype(np.float32)
    g_table = np.zeros_like(table)  # accumulator; contents don't affect timing
    out_feat = np.zeros((n_points, channels), dtype=np.float32)
    out_pack = np.zeros((n_points, channels, 4), dtype=np.float32)
    jscale = np.float32(1.0)

    scene = synth.preset_scene("mirror_ball")
    ptypes, pdatas, mats = scene.arrays()
    bottom, top, bdirs, bcols, power = scene.env_arrays()
    n_rays = trace_res * trace_res
    origins = np.tile([0.0, -2.0, 0.5], (n_rays, 1))
    dirs = rng.standard_normal((n_rays, 3))
    dirs[:, 1] = np.abs(dirs[:, 1]) + 1.0
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    return [
        ("grid_fwd", (table, u, res, True, tsize, out_feat)),
        ("grid_fwd_jac", (table, u, res, True, tsize, jscale, out_pack)),
        ("grid_bwd_table", (u, res, True, tsize, g_feat, g_jac, jscale, g_table)),
        ("grid_bwd_u", (table, u, res, True, tsize, g_feat)),
        ("trace", (origins, dirs, ptypes, pdatas, mats, bottom, top,
                   bdirs, bcols, power, synth.TRACE_TOL,
                   synth.TRACE_MAX_STEPS, float(scene.far))),
    ]


def run(n_points=1 << 15, trace_res=96, repeats=5, seed=0):
    """Time every kernel on both backends; returns rows of
    (name, numba seconds, numpy seconds, numpy/numba ratio)."""
    rows = []
    for name, args in benchmark_cases(n_points, trace_res, seed):
        nb = _best_time(getattr(kernels_numba, name), args, repeats)
        np_ = _best_time(getattr(kernels_numpy, name), args, repeats)
        rows.append((name, nb, np_, np_ / nb if nb > 0 else float("inf")))
    return rows


def format_table(rows):
    lines = [f"{'kernel':<16} {'numba':>10} {'numpy':>10} {'speedup':>8}"]
    for name, nb, np_, ratio in rows:
        lines.append(f"{name:<16} {nb * 1e3:>8.2f}ms {np_ * 1e3:>8.2f}ms {ratio:>7.1f}x")
    return "\n".join(lines)


def main(n_points=1 << 15, trace_res=96, repeats=5):
    rows = run(n_points, trace_res, repeats)
    print(format_table(rows))
    return rows

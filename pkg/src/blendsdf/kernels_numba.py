"""Numba implementations of the hot kernels.

Semantics mirror kernels_numpy exactly (same corner order, same index math);
the numpy module is the reference and the agreement tests hold both to it.
Kernels are cached to disk so repeat runs skip JIT compilation.
"""

import numpy as np
from numba import njit, prange

_OPTS = dict(cache=True)
# row-parallel kernels write disjoint output rows, so prange is race free and
# results stay bit identical for any thread count
_POPTS = dict(cache=True, parallel=True)


@njit(inline="always")
def _split(v, res):
    c = int(np.floor(v))
    if c < 0:
        c = 0
    if c > res - 2:
        c = res - 2
    return c, v - c


@njit(inline="always")
def _slot(ix, iy, iz, res, hashed, tsize):
    if hashed:
        h = (
            (np.uint64(ix) * np.uint64(1))
            ^ (np.uint64(iy) * np.uint64(2654435761))
            ^ (np.uint64(iz) * np.uint64(805459861))
        )
        return np.int64(h % np.uint64(tsize))
    return np.int64(ix + res * (iy + res * iz))


@njit(**_POPTS)
def grid_fwd(table, u, res, hashed, tsize, out):
    n = u.shape[0]
    c = table.shape[1]
    for i in prange(n):
        cx, fx = _split(u[i, 0], res)
        cy, fy = _split(u[i, 1], res)
        cz, fz = _split(u[i, 2], res)
        for dz in range(2):
            wz = fz if dz == 1 else 1.0 - fz
            for dy in range(2):
                wy = fy if dy == 1 else 1.0 - fy
                for dx in range(2):
                    wx = fx if dx == 1 else 1.0 - fx
                    w = wx * wy * wz
                    idx = _slot(cx + dx, cy + dy, cz + dz, res, hashed, tsize)
                    for ch in range(c):
                        out[i, ch] += w * table[idx, ch]


@njit(**_POPTS)
def grid_fwd_jac(table, u, res, hashed, tsize, jscale, out):
    n = u.shape[0]
    c = table.shape[1]
    for i in prange(n):
        cx, fx = _split(u[i, 0], res)
        cy, fy = _split(u[i, 1], res)
        cz, fz = _split(u[i, 2], res)
        for dz in range(2):
            wz = fz if dz == 1 else 1.0 - fz
            sz = jscale if dz == 1 else -jscale
            for dy in range(2):
                wy = fy if dy == 1 else 1.0 - fy
                sy = jscale if dy == 1 else -jscale
                for dx in range(2):
                    wx = fx if dx == 1 else 1.0 - fx
                    sx = jscale if dx == 1 else -jscale
                    w = wx * wy * wz
                    dwx = sx * wy * wz
                    dwy = wx * sy * wz
                    dwz = wx * wy * sz
                    idx = _slot(cx + dx, cy + dy, cz + dz, res, hashed, tsize)
                    for ch in range(c):
                        t = table[idx, ch]
                        out[i, ch, 0] += w * t
                        out[i, ch, 1] += dwx * t
                        out[i, ch, 2] += dwy * t
                        out[i, ch, 3] += dwz * t


# the table kernels scatter into shared slots, so they stay serial
@njit(**_OPTS)
def _grid_bwd_table_feat(u, res, hashed, tsize, g_feat, g_table):
    n = u.shape[0]
    c = g_feat.shape[1]
    for i in range(n):
        cx, fx = _split(u[i, 0], res)
        cy, fy = _split(u[i, 1], res)
        cz, fz = _split(u[i, 2], res)
        for dz in range(2):
            wz = fz if dz == 1 else 1.0 - fz
            for dy in range(2):
                wy = fy if dy == 1 else 1.0 - fy
                for dx in range(2):
                    wx = fx if dx == 1 else 1.0 - fx
                    w = wx * wy * wz
                    idx = _slot(cx + dx, cy + dy, cz + dz, res, hashed, tsize)
                    for ch in range(c):
                        g_table[idx, ch] += w * g_feat[i, ch]


@njit(**_OPTS)
def _grid_bwd_table_feat_jac(u, res, hashed, tsize, g_feat, g_jac, jscale, g_table):
    n = u.shape[0]
    c = g_feat.shape[1]
    for i in range(n):
        cx, fx = _split(u[i, 0], res)
        cy, fy = _split(u[i, 1], res)
        cz, fz = _split(u[i, 2], res)
        for dz in range(2):
            wz = fz if dz == 1 else 1.0 - fz
            sz = jscale if dz == 1 else -jscale
            for dy in range(2):
                wy = fy if dy == 1 else 1.0 - fy
                sy = jscale if dy == 1 else -jscale
                for dx in range(2):
                    wx = fx if dx == 1 else 1.0 - fx
                    sx = jscale if dx == 1 else -jscale
                    w = wx * wy * wz
                    dwx = sx * wy * wz
                    dwy = wx * sy * wz
                    dwz = wx * wy * sz
                    idx = _slot(cx + dx, cy + dy, cz + dz, res, hashed, tsize)
                    for ch in range(c):
                        g_table[idx, ch] += (
                            w * g_feat[i, ch]
                            + dwx * g_jac[i, ch, 0]
                            + dwy * g_jac[i, ch, 1]
                            + dwz * g_jac[i, ch, 2]
                        )


def grid_bwd_table(u, res, hashed, tsize, g_feat, g_jac, jscale, g_table):
    # numba dislikes optional array arguments; pick the specialization here
    if g_jac is None:
        _grid_bwd_table_feat(u, res, hashed, tsize, g_feat, g_table)
    else:
        _grid_bwd_table_feat_jac(u, res, hashed, tsize, g_feat, g_jac, jscale, g_table)


@njit(**_POPTS)
def grid_bwd_u(table, u, res, hashed, tsize, g_feat):
    n = u.shape[0]
    c = table.shape[1]
    gu = np.zeros((n, 3), dtype=table.dtype)
    for i in prange(n):
        cx, fx = _split(u[i, 0], res)
        cy, fy = _split(u[i, 1], res)
        cz, fz = _split(u[i, 2], res)
        for dz in range(2):
            wz = fz if dz == 1 else 1.0 - fz
            sz = 1.0 if dz == 1 else -1.0
            for dy in range(2):
                wy = fy if dy == 1 else 1.0 - fy
                sy = 1.0 if dy == 1 else -1.0
                for dx in range(2):
                    wx = fx if dx == 1 else 1.0 - fx
                    sx = 1.0 if dx == 1 else -1.0
                    idx = _slot(cx + dx, cy + dy, cz + dz, res, hashed, tsize)
                    s = 0.0
                    for ch in range(c):
                        s += table[idx, ch] * g_feat[i, ch]
                    gu[i, 0] += s * (sx * wy * wz)
                    gu[i, 1] += s * (wx * sy * wz)
                    gu[i, 2] += s * (wx * wy * sz)
    return gu


# ----------------------------------------------------------------------------
# analytic scene tracing
# ----------------------------------------------------------------------------


@njit(inline="always")
def _prim_sdf_point(pt, pd, x, y, z):
    if pt == 0:  # sphere: center, radius
        dx = x - pd[0]
        dy = y - pd[1]
        dz = z - pd[2]
        return np.sqrt(dx * dx + dy * dy + dz * dz) - pd[3]
    elif pt == 1:  # box: center, half extents
        qx = abs(x - pd[0]) - pd[3]
        qy = abs(y - pd[1]) - pd[4]
        qz = abs(z - pd[2]) - pd[5]
        ox = qx if qx > 0.0 else 0.0
        oy = qy if qy > 0.0 else 0.0
        oz = qz if qz > 0.0 else 0.0
        outer = np.sqrt(ox * ox + oy * oy + oz * oz)
        m = qx
        if qy > m:
            m = qy
        if qz > m:
            m = qz
        inner = m if m < 0.0 else 0.0
        return outer + inner
    else:  # plane: unit normal, offset
        return x * pd[0] + y * pd[1] + z * pd[2] - pd[3]


@njit(inline="always")
def _scene_sdf_point(ptypes, pdatas, x, y, z):
    best = 1e30
    who = -1
    for k in range(ptypes.shape[0]):
        d = _prim_sdf_point(ptypes[k], pdatas[k], x, y, z)
        if d < best:
            best = d
            who = k
    return best, who


@njit(inline="always")
def _prim_normal_point(pt, pd, x, y, z):
    if pt == 0:
        dx = x - pd[0]
        dy = y - pd[1]
        dz = z - pd[2]
        n = np.sqrt(dx * dx + dy * dy + dz * dz)
        return dx / n, dy / n, dz / n
    elif pt == 1:
        px = x - pd[0]
        py = y - pd[1]
        pz = z - pd[2]
        qx = abs(px) - pd[3]
        qy = abs(py) - pd[4]
        qz = abs(pz) - pd[5]
        gx = (qx if qx > 0.0 else 0.0) * (1.0 if px >= 0.0 else -1.0)
        gy = (qy if qy > 0.0 else 0.0) * (1.0 if py >= 0.0 else -1.0)
        gz = (qz if qz > 0.0 else 0.0) * (1.0 if pz >= 0.0 else -1.0)
        n = np.sqrt(gx * gx + gy * gy + gz * gz)
        if n == 0.0:  # interior: least-deep face
            if qx >= qy and qx >= qz:
                return (1.0 if px >= 0.0 else -1.0), 0.0, 0.0
            elif qy >= qz:
                return 0.0, (1.0 if py >= 0.0 else -1.0), 0.0
            else:
                return 0.0, 0.0, (1.0 if pz >= 0.0 else -1.0)
        return gx / n, gy / n, gz / n
    else:
        return pd[0], pd[1], pd[2]


@njit(inline="always")
def _env_point(vx, vy, vz, bottom, top, bdirs, bcols, bpow):
    s = (vz + 1.0) * 0.5
    r = bottom[0] * (1.0 - s) + top[0] * s
    g = bottom[1] * (1.0 - s) + top[1] * s
    b = bottom[2] * (1.0 - s) + top[2] * s
    for k in range(bdirs.shape[0]):
        m = vx * bdirs[k, 0] + vy * bdirs[k, 1] + vz * bdirs[k, 2]
        if m > 0.0:
            mp = m**bpow
            r += mp * bcols[k, 0]
            g += mp * bcols[k, 1]
            b += mp * bcols[k, 2]
    return r, g, b


@njit(**_POPTS)
def trace(
    origins,
    dirs,
    ptypes,
    pdatas,
    mats,
    env_bottom,
    env_top,
    blob_dirs,
    blob_cols,
    blob_pow,
    tol,
    max_steps,
    t_max,
):
    n = origins.shape[0]
    rgb = np.zeros((n, 3), dtype=np.float64)
    depth = np.full(n, np.inf, dtype=np.float64)
    normal = np.zeros((n, 3), dtype=np.float64)
    hit = np.zeros(n, dtype=np.uint8)
    pidx = np.full(n, -1, dtype=np.int64)
    spec = np.zeros(n, dtype=np.float64)
    for i in prange(n):
        ox = origins[i, 0]
        oy = origins[i, 1]
        oz = origins[i, 2]
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        t = 0.0
        who = -1
        found = False
        for _ in range(max_steps):
            x = ox + t * dx
            y = oy + t * dy
            z = oz + t * dz
            d, k = _scene_sdf_point(ptypes, pdatas, x, y, z)
            if d < tol:
                who = k
                found = True
                break
            t += d
            if t > t_max:
                break
        if not found:
            r, g, b = _env_point(dx, dy, dz, env_bottom, env_top, blob_dirs, blob_cols, blob_pow)
            rgb[i, 0] = r
            rgb[i, 1] = g
            rgb[i, 2] = b
            continue
        x = ox + t * dx
        y = oy + t * dy
        z = oz + t * dz
        nx, ny, nz = _prim_normal_point(ptypes[who], pdatas[who], x, y, z)
        dn = dx * nx + dy * ny + dz * nz
        wx = dx - 2.0 * dn * nx
        wy = dy - 2.0 * dn * ny
        wz = dz - 2.0 * dn * nz
        er, eg, eb = _env_point(nx, ny, nz, env_bottom, env_top, blob_dirs, blob_cols, blob_pow)
        rr, rg_, rb = _env_point(wx, wy, wz, env_bottom, env_top, blob_dirs, blob_cols, blob_pow)
        s = mats[who, 3]
        rgb[i, 0] = (1.0 - s) * mats[who, 0] * er + s * rr
        rgb[i, 1] = (1.0 - s) * mats[who, 1] * eg + s * rg_
        rgb[i, 2] = (1.0 - s) * mats[who, 2] * eb + s * rb
        depth[i] = t
        normal[i, 0] = nx
        normal[i, 1] = ny
        normal[i, 2] = nz
        hit[i] = 1
        pidx[i] = who
        spec[i] = s
    return rgb, depth, normal, hit, pidx, spec

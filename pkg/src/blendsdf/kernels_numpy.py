"""Pure-numpy reference implementations of the hot kernels.

These define the semantics; the numba versions in kernels_numba.py must match
them numerically (same traversal order, same index math). Everything here is
vectorized but allocation-heavy, which is fine for the fallback role.

Grid-coordinate convention: `u` holds positions already mapped into the
per-level lattice, u in [0, res-1]^3. Cell corner (x,y,z) with res^3 <= tsize
stores dense at index x + res*y + res^2*z (x fastest); larger levels hash by
XORing each coordinate times a fixed odd prime, modulo the table size.
Products are taken in 64-bit (coords < 2^12, no overflow before the modulo).
"""

import numpy as np

HASH_PRIMES = (1, 2654435761, 805459861)

_P0 = np.uint64(HASH_PRIMES[0])
_P1 = np.uint64(HASH_PRIMES[1])
_P2 = np.uint64(HASH_PRIMES[2])


def _corner_base(u, res):
    """Lower corner index (clamped so the +1 corner stays in range) and fractions."""
    c0 = np.floor(u).astype(np.int64)
    np.clip(c0, 0, res - 2, out=c0)
    f = u - c0
    return c0, f


def slots(ix, iy, iz, res, hashed, tsize):
    """Table slot for integer corner coordinates. Arrays or scalars."""
    if hashed:
        h = (
            (np.asarray(ix).astype(np.uint64) * _P0)
            ^ (np.asarray(iy).astype(np.uint64) * _P1)
            ^ (np.asarray(iz).astype(np.uint64) * _P2)
        )
        return (h % np.uint64(tsize)).astype(np.int64)
    return np.asarray(ix + res * (iy + res * iz)).astype(np.int64)


def _corner_iter(c0, f):
    """Yield (ix, iy, iz, w, dw) for the 8 cell corners.

    w is the trilinear weight, dw its gradient w.r.t. u (both shaped (N,)
    and (N,3)). Iteration order is z-outer .. x-inner to match the numba
    kernel exactly.
    """
    one = np.ones_like(f[:, 0])
    for dz in (0, 1):
        wz = f[:, 2] if dz else 1.0 - f[:, 2]
        sz = one if dz else -one
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1.0 - f[:, 1]
            sy = one if dy else -one
            for dx in (0, 1):
                wx = f[:, 0] if dx else 1.0 - f[:, 0]
                sx = one if dx else -one
                w = wx * wy * wz
                dw = np.stack(
                    [sx * wy * wz, wx * sy * wz, wx * wy * sz], axis=-1
                )
                yield dx, dy, dz, w, dw


def grid_fwd(table, u, res, hashed, tsize, out):
    """Trilinear gather: (N,3) grid coords accumulated into out (N,C).

    out may be any writable view; callers hand in slices of a larger feature
    buffer so multi-level encodings need no concatenation pass.
    """
    c0, f = _corner_base(u, res)
    for dx, dy, dz, w, _ in _corner_iter(c0, f):
        idx = slots(c0[:, 0] + dx, c0[:, 1] + dy, c0[:, 2] + dz, res, hashed, tsize)
        out += w[:, None] * table[idx]


def grid_fwd_jac(table, u, res, hashed, tsize, jscale, out):
    """Gather plus the scaled feature Jacobian, packed into out (N,C,4).

    out[..., 0] accumulates the features, out[..., 1:4] the Jacobian w.r.t. u
    times jscale (callers fold the lattice-to-world scale in here).
    """
    c0, f = _corner_base(u, res)
    for dx, dy, dz, w, dw in _corner_iter(c0, f):
        idx = slots(c0[:, 0] + dx, c0[:, 1] + dy, c0[:, 2] + dz, res, hashed, tsize)
        t = table[idx]
        out[:, :, 0] += w[:, None] * t
        out[:, :, 1:] += t[:, :, None] * (dw * jscale)[:, None, :]


def grid_bwd_table(u, res, hashed, tsize, g_feat, g_jac, jscale, g_table):
    """Accumulate d(loss)/d(table) into g_table.

    g_feat is the cotangent of the features, g_jac (optional, may be None)
    the cotangent of the jscale-scaled Jacobian output of grid_fwd_jac.
    """
    c0, f = _corner_base(u, res)
    for dx, dy, dz, w, dw in _corner_iter(c0, f):
        idx = slots(c0[:, 0] + dx, c0[:, 1] + dy, c0[:, 2] + dz, res, hashed, tsize)
        contrib = w[:, None] * g_feat
        if g_jac is not None:
            contrib = contrib + np.einsum("nca,na->nc", g_jac, dw * jscale)
        np.add.at(g_table, idx, contrib)


def grid_bwd_u(table, u, res, hashed, tsize, g_feat):
    """d(loss)/du from the feature path only (Jacobian output not supported)."""
    n = u.shape[0]
    c0, f = _corner_base(u, res)
    gu = np.zeros((n, 3), dtype=table.dtype)
    for dx, dy, dz, w, dw in _corner_iter(c0, f):
        idx = slots(c0[:, 0] + dx, c0[:, 1] + dy, c0[:, 2] + dz, res, hashed, tsize)
        s = np.sum(table[idx] * g_feat, axis=-1)
        gu += s[:, None] * dw
    return gu


# ----------------------------------------------------------------------------
# analytic scene: signed distances, normals, environment shading, ray tracing
# ----------------------------------------------------------------------------

PRIM_SPHERE = 0
PRIM_BOX = 1
PRIM_PLANE = 2


def prim_sdf(ptype, pdata, x):
    """Signed distance of points (N,3) to one primitive."""
    if ptype == PRIM_SPHERE:
        return np.linalg.norm(x - pdata[:3], axis=-1) - pdata[3]
    if ptype == PRIM_BOX:
        q = np.abs(x - pdata[:3]) - pdata[3:6]
        outer = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inner = np.minimum(np.max(q, axis=-1), 0.0)
        return outer + inner
    if ptype == PRIM_PLANE:
        return x @ pdata[:3] - pdata[3]
    raise ValueError(f"unknown primitive type {ptype}")


def prim_normal(ptype, pdata, x):
    """Exact unit surface normal(s) of one primitive at points (N,3)."""
    if ptype == PRIM_SPHERE:
        d = x - pdata[:3]
        return d / np.linalg.norm(d, axis=-1, keepdims=True)
    if ptype == PRIM_BOX:
        p = x - pdata[:3]
        q = np.abs(p) - pdata[3:6]
        out = np.where(q > 0.0, np.maximum(q, 0.0) * np.sign(p), 0.0)
        nrm = np.linalg.norm(out, axis=-1, keepdims=True)
        inside = nrm[:, 0] == 0.0
        if np.any(inside):
            # interior: gradient points along the axis of the least-deep face
            ax = np.argmax(q[inside], axis=-1)
            sub = np.zeros((int(inside.sum()), 3), dtype=x.dtype)
            sub[np.arange(sub.shape[0]), ax] = np.sign(p[inside, ax])
            out[inside] = sub
            nrm[inside, 0] = 1.0
        return out / nrm
    if ptype == PRIM_PLANE:
        return np.broadcast_to(pdata[:3], x.shape).copy()
    raise ValueError(f"unknown primitive type {ptype}")


def scene_sdf(ptypes, pdatas, x):
    """Min over primitives: values (N,) and argmin primitive index (N,)."""
    best = np.full(x.shape[0], np.inf, dtype=x.dtype)
    who = np.full(x.shape[0], -1, dtype=np.int64)
    for k in range(len(ptypes)):
        d = prim_sdf(int(ptypes[k]), pdatas[k], x)
        take = d < best
        best = np.where(take, d, best)
        who = np.where(take, k, who)
    return best, who


def env_color(v, env_bottom, env_top, blob_dirs, blob_cols, blob_pow):
    """Environment radiance for unit directions (N,3) -> (N,3).

    Vertical gradient between two colors plus a few phong-like bright blobs.
    """
    s = (v[:, 2:3] + 1.0) * 0.5
    out = env_bottom * (1.0 - s) + env_top * s
    for k in range(blob_dirs.shape[0]):
        m = np.maximum(v @ blob_dirs[k], 0.0) ** blob_pow
        out = out + m[:, None] * blob_cols[k]
    return out


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
    """Sphere-trace rays through the analytic scene and shade hits.

    Returns rgb (N,3), depth (N,) with +inf on miss, normal (N,3), hit (N,)
    uint8, primitive index (N,) with -1 on miss, and per-pixel specularity.
    One bounce: diffuse term albedo*env(n), specular term env(reflected dir).
    """
    n = origins.shape[0]
    t = np.zeros(n, dtype=np.float64)
    alive = np.ones(n, dtype=bool)
    hit = np.zeros(n, dtype=bool)
    for _ in range(max_steps):
        if not alive.any():
            break
        x = origins[alive] + t[alive, None] * dirs[alive]
        d, _ = scene_sdf(ptypes, pdatas, x)
        newly_hit = d < tol
        idx = np.flatnonzero(alive)
        hit[idx[newly_hit]] = True
        t_new = t[alive] + np.where(newly_hit, 0.0, d)
        t[alive] = t_new
        escaped = ~newly_hit & (t_new > t_max)
        alive[idx[newly_hit | escaped]] = False

    rgb = np.zeros((n, 3), dtype=np.float64)
    depth = np.full(n, np.inf, dtype=np.float64)
    normal = np.zeros((n, 3), dtype=np.float64)
    pidx = np.full(n, -1, dtype=np.int64)
    spec = np.zeros(n, dtype=np.float64)

    miss = ~hit
    if miss.any():
        rgb[miss] = env_color(dirs[miss], env_bottom, env_top, blob_dirs, blob_cols, blob_pow)
    if hit.any():
        xh = origins[hit] + t[hit, None] * dirs[hit]
        _, who = scene_sdf(ptypes, pdatas, xh)
        depth[hit] = t[hit]
        pidx[hit] = who
        nrm = np.zeros((int(hit.sum()), 3), dtype=np.float64)
        col = np.zeros((int(hit.sum()), 3), dtype=np.float64)
        sp = np.zeros(int(hit.sum()), dtype=np.float64)
        for k in range(len(ptypes)):
            sel = who == k
            if not sel.any():
                continue
            nk = prim_normal(int(ptypes[k]), pdatas[k], xh[sel])
            nrm[sel] = nk
            dk = dirs[hit][sel]
            wr = dk - 2.0 * np.sum(dk * nk, axis=-1, keepdims=True) * nk
            alb, s = mats[k, :3], mats[k, 3]
            diff = alb * env_color(nk, env_bottom, env_top, blob_dirs, blob_cols, blob_pow)
            refl = env_color(wr, env_bottom, env_top, blob_dirs, blob_cols, blob_pow)
            col[sel] = (1.0 - s) * diff + s * refl
            sp[sel] = s
        normal[hit] = nrm
        rgb[hit] = col
        spec[hit] = sp
    return rgb, depth, normal, hit.astype(np.uint8), pidx, spec

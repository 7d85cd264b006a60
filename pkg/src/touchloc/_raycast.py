"""Compiled ray/triangle kernels.

Two casters share one Moller-Trumbore test: a brute-force loop over every
triangle (kept as the reference) and a uniform-grid traversal
(Amanatides-Woo) that only tests triangles binned into visited cells.
"""
import numpy as np
from numba import njit

DET_EPS = 1e-12
T_MIN = 1e-9


@njit(cache=True, inline="always")
def _hit(ox, oy, oz, dx, dy, dz, verts, tri):
    a = verts[tri[0]]
    b = verts[tri[1]]
    c = verts[tri[2]]
    e1x = b[0] - a[0]
    e1y = b[1] - a[1]
    e1z = b[2] - a[2]
    e2x = c[0] - a[0]
    e2y = c[1] - a[1]
    e2z = c[2] - a[2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det > -DET_EPS and det < DET_EPS:
        return np.inf
    inv = 1.0 / det
    tx = ox - a[0]
    ty = oy - a[1]
    tz = oz - a[2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.inf
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t < T_MIN:
        return np.inf
    return t


@njit(cache=True)
def cast_brute(origins, dirs, verts, tris):
    n = origins.shape[0]
    out = np.full(n, np.inf)
    for r in range(n):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        best = np.inf
        for k in range(tris.shape[0]):
            t = _hit(ox, oy, oz, dx, dy, dz, verts, tris[k])
            if t < best:
                best = t
        out[r] = best
    return out


@njit(cache=True)
def cast_grid(origins, dirs, verts, tris, lo, cell, dims, cell_start, cell_tris):
    n = origins.shape[0]
    out = np.full(n, np.inf)
    nx, ny, nz = dims[0], dims[1], dims[2]
    hi0 = lo[0] + cell[0] * nx
    hi1 = lo[1] + cell[1] * ny
    hi2 = lo[2] + cell[2] * nz
    for r in range(n):
        o = origins[r]
        d = dirs[r]
        # slab test against the grid bounds
        t0 = 0.0
        t1 = np.inf
        hit_box = True
        for ax in range(3):
            lo_a = lo[ax]
            hi_a = hi0 if ax == 0 else (hi1 if ax == 1 else hi2)
            if d[ax] == 0.0:
                if o[ax] < lo_a or o[ax] > hi_a:
                    hit_box = False
                    break
            else:
                ta = (lo_a - o[ax]) / d[ax]
                tb = (hi_a - o[ax]) / d[ax]
                if ta > tb:
                    ta, tb = tb, ta
                if ta > t0:
                    t0 = ta
                if tb < t1:
                    t1 = tb
                if t0 > t1:
                    hit_box = False
                    break
        if not hit_box:
            continue

        idx = np.empty(3, np.int64)
        step = np.empty(3, np.int64)
        tmax = np.empty(3)
        tdelta = np.empty(3)
        for ax in range(3):
            p = o[ax] + t0 * d[ax]
            i = int(np.floor((p - lo[ax]) / cell[ax]))
            if i < 0:
                i = 0
            if i >= dims[ax]:
                i = dims[ax] - 1
            idx[ax] = i
            if d[ax] > 0.0:
                step[ax] = 1
                tmax[ax] = (lo[ax] + (i + 1) * cell[ax] - o[ax]) / d[ax]
                tdelta[ax] = cell[ax] / d[ax]
            elif d[ax] < 0.0:
                step[ax] = -1
                tmax[ax] = (lo[ax] + i * cell[ax] - o[ax]) / d[ax]
                tdelta[ax] = -cell[ax] / d[ax]
            else:
                step[ax] = 0
                tmax[ax] = np.inf
                tdelta[ax] = np.inf

        best = np.inf
        while True:
            c = (idx[0] * ny + idx[1]) * nz + idx[2]
            for j in range(cell_start[c], cell_start[c + 1]):
                t = _hit(o[0], o[1], o[2], d[0], d[1], d[2], verts, tris[cell_tris[j]])
                if t < best:
                    best = t
            # exit distance of the current cell
            ax = 0
            if tmax[1] < tmax[ax]:
                ax = 1
            if tmax[2] < tmax[ax]:
                ax = 2
            if best <= tmax[ax] or tmax[ax] > t1:
                break
            idx[ax] += step[ax]
            if idx[ax] < 0 or idx[ax] >= dims[ax]:
                break
            tmax[ax] += tdelta[ax]
        out[r] = best
    return out

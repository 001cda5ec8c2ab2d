"""Compiled SDF and sphere-tracing kernels.

Objects are packed into flat arrays so numba can loop over parts:

    kinds  (P,)      int64 primitive code (see ``KIND_*``)
    params (P, 3)    size parameters, unused slots are zero
    rots   (P, 3, 3) world-from-local rotation
    trans  (P, 3)    world position of the local origin
"""

import math

import numpy as np
from numba import njit

KIND_SPHERE = 0
KIND_BOX = 1
KIND_CYLINDER = 2
KIND_CONE = 3
KIND_PRISM = 4

SQRT3 = math.sqrt(3.0)


@njit(cache=True)
def _segment_dist2(px, py, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    wx = px - ax
    wy = py - ay
    h = (wx * ex + wy * ey) / (ex * ex + ey * ey)
    if h < 0.0:
        h = 0.0
    elif h > 1.0:
        h = 1.0
    dx = wx - ex * h
    dy = wy - ey * h
    return dx * dx + dy * dy


@njit(cache=True)
def _triangle_sdf(px, py, ax, ay, bx, by, cx, cy):
    # vertices must be counter-clockwise
    d2 = min(
        _segment_dist2(px, py, ax, ay, bx, by),
        min(_segment_dist2(px, py, bx, by, cx, cy), _segment_dist2(px, py, cx, cy, ax, ay)),
    )
    c0 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    c1 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    c2 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    d = math.sqrt(d2)
    if c0 >= 0.0 and c1 >= 0.0 and c2 >= 0.0:
        return -d
    return d


@njit(cache=True)
def _extrude(d2, dz):
    # exact SDF of a 2D profile extruded along z
    ox = max(d2, 0.0)
    oz = max(dz, 0.0)
    return min(max(d2, dz), 0.0) + math.sqrt(ox * ox + oz * oz)


@njit(cache=True)
def part_sdf(kind, prm, x, y, z):
    """Signed distance of a local-frame point to one primitive."""
    if kind == KIND_SPHERE:
        return math.sqrt(x * x + y * y + z * z) - prm[0]
    if kind == KIND_BOX:
        qx = abs(x) - prm[0]
        qy = abs(y) - prm[1]
        qz = abs(z) - prm[2]
        ox = max(qx, 0.0)
        oy = max(qy, 0.0)
        oz = max(qz, 0.0)
        return math.sqrt(ox * ox + oy * oy + oz * oz) + min(max(qx, max(qy, qz)), 0.0)
    if kind == KIND_CYLINDER:
        rho = math.sqrt(x * x + y * y)
        return _extrude(rho - prm[0], abs(z) - prm[1])
    if kind == KIND_CONE:
        # base disk at z=0, apex at z=h; revolve the full symmetric section
        rho = math.sqrt(x * x + y * y)
        r = prm[0]
        h = prm[1]
        return _triangle_sdf(rho, z, -r, 0.0, r, 0.0, 0.0, h)
    # KIND_PRISM: equilateral section in xy centred on its centroid
    a = prm[0]
    hgt = 0.5 * SQRT3 * a
    d2 = _triangle_sdf(x, y, -0.5 * a, -hgt / 3.0, 0.5 * a, -hgt / 3.0, 0.0, 2.0 * hgt / 3.0)
    return _extrude(d2, abs(z) - prm[1])


@njit(cache=True)
def _local(rot, tr, px, py, pz):
    dx = px - tr[0]
    dy = py - tr[1]
    dz = pz - tr[2]
    lx = rot[0, 0] * dx + rot[1, 0] * dy + rot[2, 0] * dz
    ly = rot[0, 1] * dx + rot[1, 1] * dy + rot[2, 1] * dz
    lz = rot[0, 2] * dx + rot[1, 2] * dy + rot[2, 2] * dz
    return lx, ly, lz


@njit(cache=True)
def union_sdf(kinds, params, rots, trans, px, py, pz):
    best = np.inf
    for k in range(kinds.shape[0]):
        lx, ly, lz = _local(rots[k], trans[k], px, py, pz)
        d = part_sdf(kinds[k], params[k], lx, ly, lz)
        if d < best:
            best = d
    return best


@njit(cache=True)
def sdf_points(points, kinds, params, rots, trans):
    n = points.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = union_sdf(kinds, params, rots, trans, points[i, 0], points[i, 1], points[i, 2])
    return out


@njit(cache=True)
def part_sdf_points(points, kinds, params, rots, trans):
    n = points.shape[0]
    m = kinds.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for k in range(m):
            lx, ly, lz = _local(rots[k], trans[k], points[i, 0], points[i, 1], points[i, 2])
            out[i, k] = part_sdf(kinds[k], params[k], lx, ly, lz)
    return out


REFINE_STEPS = 12


@njit(cache=True)
def _refine(t, ox, oy, oz, dx, dy, dz, kinds, params, rots, trans):
    # the march stops up to eps short of the surface, and further than that
    # on oblique rays; a few signed steps pull the hit onto the surface.
    # Inside a union the sdf is only a bound, so keep the best iterate.
    best_t = t
    best_d = np.inf
    for _ in range(REFINE_STEPS):
        d = union_sdf(kinds, params, rots, trans, ox + t * dx, oy + t * dy, oz + t * dz)
        if abs(d) < best_d:
            best_t = t
            best_d = abs(d)
        if best_d < 1e-13 or t + d < 0.0:
            break
        t += d
    return best_t


@njit(cache=True)
def trace_rays(origins, dirs, t_max, eps, max_steps, kinds, params, rots, trans):
    """Sphere-trace each ray; returns hit distance or NaN on a miss."""
    n = origins.shape[0]
    out = np.empty(n)
    for i in range(n):
        ox = origins[i, 0]
        oy = origins[i, 1]
        oz = origins[i, 2]
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        t = 0.0
        hit = np.nan
        for _ in range(max_steps):
            d = union_sdf(kinds, params, rots, trans, ox + t * dx, oy + t * dy, oz + t * dz)
            ad = abs(d)
            if ad < eps:
                hit = _refine(t, ox, oy, oz, dx, dy, dz, kinds, params, rots, trans)
                break
            t += ad
            if t > t_max:
                break
        out[i] = hit
    return out


@njit(cache=True)
def trace_nearest(origins, dirs, t_max, eps, max_steps, kinds, params, rots, trans):
    """Smallest hit distance over all rays (NaN if none hit).

    A ray is abandoned once it marches past the best hit found so far, which
    cannot change the minimum.
    """
    best = t_max
    found = False
    for i in range(origins.shape[0]):
        ox = origins[i, 0]
        oy = origins[i, 1]
        oz = origins[i, 2]
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        t = 0.0
        for _ in range(max_steps):
            d = union_sdf(kinds, params, rots, trans, ox + t * dx, oy + t * dy, oz + t * dz)
            ad = abs(d)
            if ad < eps:
                t = _refine(t, ox, oy, oz, dx, dy, dz, kinds, params, rots, trans)
                if not found or t < best:
                    best = t
                    found = True
                break
            t += ad
            if t > best:
                break
    if not found:
        return np.nan
    return best

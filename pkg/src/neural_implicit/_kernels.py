"""Compiled inner loops for distance and winding-number queries.

Every per-point routine evaluates triangles with the same scalar kernels so
that tree-accelerated and brute-force paths agree bitwise whenever they
evaluate the same triangles in the same order.
"""

import math

import numpy as np
from numba import njit

FOUR_PI = 4.0 * math.pi


@njit(cache=True)
def closest_point_sq(px, py, pz, tri):
    """Squared distance from p to triangle ``tri`` (3x3), Voronoi-region method."""
    ax, ay, az = tri[0, 0], tri[0, 1], tri[0, 2]
    bx, by, bz = tri[1, 0], tri[1, 1], tri[1, 2]
    cx, cy, cz = tri[2, 0], tri[2, 1], tri[2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        qx, qy, qz = ax, ay, az
    else:
        bpx, bpy, bpz = px - bx, py - by, pz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            qx, qy, qz = bx, by, bz
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                v = d1 / (d1 - d3)
                qx, qy, qz = ax + v * abx, ay + v * aby, az + v * abz
            else:
                cpx, cpy, cpz = px - cx, py - cy, pz - cz
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    qx, qy, qz = cx, cy, cz
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        w = d2 / (d2 - d6)
                        qx, qy, qz = ax + w * acx, ay + w * acy, az + w * acz
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            qx = bx + w * (cx - bx)
                            qy = by + w * (cy - by)
                            qz = bz + w * (cz - bz)
                        else:
                            denom = 1.0 / (va + vb + vc)
                            v = vb * denom
                            w = vc * denom
                            qx = ax + abx * v + acx * w
                            qy = ay + aby * v + acy * w
                            qz = az + abz * v + acz * w
    dx, dy, dz = px - qx, py - qy, pz - qz
    return dx * dx + dy * dy + dz * dz


@njit(cache=True)
def solid_angle(px, py, pz, tri):
    """Signed solid angle of a triangle seen from p (two-argument arctangent form)."""
    ax, ay, az = tri[0, 0] - px, tri[0, 1] - py, tri[0, 2] - pz
    bx, by, bz = tri[1, 0] - px, tri[1, 1] - py, tri[1, 2] - pz
    cx, cy, cz = tri[2, 0] - px, tri[2, 1] - py, tri[2, 2] - pz
    la = math.sqrt(ax * ax + ay * ay + az * az)
    lb = math.sqrt(bx * bx + by * by + bz * bz)
    lc = math.sqrt(cx * cx + cy * cy + cz * cz)
    det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)
    dot_ab = ax * bx + ay * by + az * bz
    dot_bc = bx * cx + by * cy + bz * cz
    dot_ca = cx * ax + cy * ay + cz * az
    denom = la * lb * lc + dot_ab * lc + dot_bc * la + dot_ca * lb
    return 2.0 * math.atan2(det, denom)


@njit(cache=True)
def _axis_gap(p, lo, hi):
    if p < lo:
        return lo - p
    if p > hi:
        return p - hi
    return 0.0


@njit(cache=True)
def _aabb_dist_sq(px, py, pz, box):
    gx = _axis_gap(px, box[0], box[3])
    gy = _axis_gap(py, box[1], box[4])
    gz = _axis_gap(pz, box[2], box[5])
    return gx * gx + gy * gy + gz * gz


@njit(cache=True)
def bruteforce_distance(corners, points):
    n = points.shape[0]
    dist = np.empty(n)
    nearest = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = np.inf
        arg = -1
        for t in range(corners.shape[0]):
            d = closest_point_sq(points[i, 0], points[i, 1], points[i, 2], corners[t])
            if d < best:
                best = d
                arg = t
        dist[i] = math.sqrt(best)
        nearest[i] = arg
    return dist, nearest


@njit(cache=True)
def bvh_distance(corners, bounds, left, right, start, count, perm, points):
    n = points.shape[0]
    dist = np.empty(n)
    nearest = np.empty(n, dtype=np.int64)
    stack = np.empty(128, dtype=np.int64)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        best = np.inf
        arg = -1
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            # strict ">" keeps ties reachable so the lowest index wins as in the scan
            if _aabb_dist_sq(px, py, pz, bounds[node]) > best:
                continue
            if left[node] < 0:
                for k in range(start[node], start[node] + count[node]):
                    t = perm[k]
                    d = closest_point_sq(px, py, pz, corners[t])
                    if d < best or (d == best and t < arg):
                        best = d
                        arg = t
            else:
                dl = _aabb_dist_sq(px, py, pz, bounds[left[node]])
                dr = _aabb_dist_sq(px, py, pz, bounds[right[node]])
                # push the farther child first so the nearer one is popped next
                if dl <= dr:
                    stack[top] = right[node]
                    stack[top + 1] = left[node]
                else:
                    stack[top] = left[node]
                    stack[top + 1] = right[node]
                top += 2
        dist[i] = math.sqrt(best)
        nearest[i] = arg
    return dist, nearest


@njit(cache=True)
def _sum_solid_angles(corners, ids, px, py, pz):
    total = 0.0
    for k in range(ids.shape[0]):
        total += solid_angle(px, py, pz, corners[ids[k]])
    return total


@njit(cache=True)
def winding_exact(corners, points, on_surface_eps):
    """Exact generalized winding numbers; NaN where a point touches the mesh."""
    n = points.shape[0]
    out = np.empty(n)
    ids = np.arange(corners.shape[0])
    eps_sq = on_surface_eps * on_surface_eps
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        touching = False
        for t in range(corners.shape[0]):
            if closest_point_sq(px, py, pz, corners[t]) < eps_sq:
                touching = True
                break
        if touching:
            out[i] = np.nan
        else:
            out[i] = _sum_solid_angles(corners, ids, px, py, pz) / FOUR_PI
    return out


@njit(cache=True)
def far_field(node, rx, ry, rz, dipole, moment1, moment2, moment3, order):
    """Taylor expansion of a node's solid angle about its centroid.

    ``r`` points from the query to the centroid. ``moment1[i, j]`` is
    the surface integral of n_i (x - c)_j; ``moment2`` and ``moment3`` are
    the matching second and third moments.
    """
    r2 = rx * rx + ry * ry + rz * rz
    r1 = math.sqrt(r2)
    inv3 = 1.0 / (r2 * r1)
    r = (rx, ry, rz)
    total = (dipole[node, 0] * rx + dipole[node, 1] * ry + dipole[node, 2] * rz) * inv3
    if order >= 1:
        inv5 = inv3 / r2
        trace = moment1[node, 0, 0] + moment1[node, 1, 1] + moment1[node, 2, 2]
        quad = 0.0
        for i in range(3):
            for j in range(3):
                quad += r[i] * moment1[node, i, j] * r[j]
        total += trace * inv3 - 3.0 * quad * inv5
    if order >= 2:
        inv5 = inv3 / r2
        inv7 = inv5 / r2
        lin = 0.0
        cubic = 0.0
        for i in range(3):
            for j in range(3):
                lin += (moment2[node, j, j, i] + moment2[node, j, i, j] + moment2[node, i, j, j]) * r[i]
                for k in range(3):
                    cubic += moment2[node, i, j, k] * r[i] * r[j] * r[k]
        total += 0.5 * (-3.0 * lin * inv5 + 15.0 * cubic * inv7)
    if order >= 3:
        inv5 = inv3 / r2
        inv7 = inv5 / r2
        inv9 = inv7 / r2
        pairs = 0.0
        mixed = 0.0
        quartic = 0.0
        for i in range(3):
            for j in range(3):
                # delta-delta contractions: (ij)(kl), (ik)(jl), (il)(jk)
                pairs += moment3[node, i, i, j, j] + moment3[node, i, j, i, j] + moment3[node, i, j, j, i]
                for k in range(3):
                    # one delta, two r's: six index pairings
                    a = (
                        moment3[node, i, i, j, k] + moment3[node, i, j, i, k] + moment3[node, i, j, k, i]
                        + moment3[node, j, i, i, k] + moment3[node, j, i, k, i] + moment3[node, j, k, i, i]
                    )
                    mixed += a * r[j] * r[k]
                    for l in range(3):
                        quartic += moment3[node, i, j, k, l] * r[i] * r[j] * r[k] * r[l]
        total += (-3.0 * pairs * inv5 + 15.0 * mixed * inv7 - 105.0 * quartic * inv9) / 6.0
    return total


@njit(cache=True)
def winding_fast(corners, left, right, start, count, perm, dipole, moment1, moment2, moment3, centroid, radius,
                 points, beta, order, on_surface_eps):
    """Barnes-Hut winding numbers: far nodes contribute their expansion,
    near leaves are summed exactly in ascending triangle order."""
    n = points.shape[0]
    out = np.empty(n)
    stack = np.empty(128, dtype=np.int64)
    near = np.empty(corners.shape[0], dtype=np.int64)
    eps_sq = on_surface_eps * on_surface_eps
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        far = 0.0
        n_near = 0
        stack[0] = 0
        top = 1
        touching = False
        while top > 0:
            top -= 1
            node = stack[top]
            rx = centroid[node, 0] - px
            ry = centroid[node, 1] - py
            rz = centroid[node, 2] - pz
            r = math.sqrt(rx * rx + ry * ry + rz * rz)
            if r > beta * radius[node]:
                far += far_field(node, rx, ry, rz, dipole, moment1, moment2, moment3, order)
            elif left[node] < 0:
                for k in range(start[node], start[node] + count[node]):
                    t = perm[k]
                    if closest_point_sq(px, py, pz, corners[t]) < eps_sq:
                        touching = True
                    near[n_near] = t
                    n_near += 1
            else:
                stack[top] = right[node]
                stack[top + 1] = left[node]
                top += 2
        if touching:
            out[i] = np.nan
            continue
        ids = np.sort(near[:n_near])
        out[i] = (_sum_solid_angles(corners, ids, px, py, pz) + far) / FOUR_PI
    return out


@njit(cache=True)
def _cell(p, lo, spacing, res):
    u = (p - lo) / spacing
    if u < 0.0:
        u = 0.0
    elif u > res - 1:
        u = res - 1.0
    r = math.floor(u + 0.5)
    # snap lattice coordinates so lattice queries return stored values exactly
    if abs(u - r) < 1e-9:
        u = r
    j = int(math.floor(u))
    if j > res - 2:
        j = res - 2
    return j, u - j


@njit(cache=True)
def trilinear(values, lo, spacing, points):
    res = values.shape[0]
    n = points.shape[0]
    out = np.empty(n)
    for i in range(n):
        x0, tx = _cell(points[i, 0], lo[0], spacing[0], res)
        y0, ty = _cell(points[i, 1], lo[1], spacing[1], res)
        z0, tz = _cell(points[i, 2], lo[2], spacing[2], res)
        c00 = values[x0, y0, z0] * (1.0 - tx) + values[x0 + 1, y0, z0] * tx
        c10 = values[x0, y0 + 1, z0] * (1.0 - tx) + values[x0 + 1, y0 + 1, z0] * tx
        c01 = values[x0, y0, z0 + 1] * (1.0 - tx) + values[x0 + 1, y0, z0 + 1] * tx
        c11 = values[x0, y0 + 1, z0 + 1] * (1.0 - tx) + values[x0 + 1, y0 + 1, z0 + 1] * tx
        c0 = c00 * (1.0 - ty) + c10 * ty
        c1 = c01 * (1.0 - ty) + c11 * ty
        out[i] = c0 * (1.0 - tz) + c1 * tz
    return out

"""Axis-aligned BVH over a triangle soup: median split, at most 4 triangles per leaf."""

import numpy as np
from numba import njit

LEAF_SIZE = 4
STACK_SIZE = 64


def build_bvh(v0, v1, v2, leaf_size=LEAF_SIZE):
    """Return (bmin, bmax, child_or_start, count, order).

    Interior nodes have ``count == 0`` and children ``child_or_start`` and
    ``child_or_start + 1``; leaves cover ``order[start:start + count]``.
    """
    n = len(v0)
    lo = np.minimum(np.minimum(v0, v1), v2)
    hi = np.maximum(np.maximum(v0, v1), v2)
    centroid = (lo + hi) * 0.5
    order = np.arange(n, dtype=np.int64)
    bmin, bmax, child, count = [], [], [], []

    def new_node():
        bmin.append(None)
        bmax.append(None)
        child.append(0)
        count.append(0)
        return len(bmin) - 1

    if n == 0:
        return (np.zeros((1, 3)), np.zeros((1, 3)) - 1.0, np.zeros(1, np.int64), np.zeros(1, np.int64), order)

    root = new_node()
    stack = [(root, 0, n)]
    while stack:
        node, start, end = stack.pop()
        idx = order[start:end]
        bmin[node] = lo[idx].min(axis=0)
        bmax[node] = hi[idx].max(axis=0)
        size = end - start
        if size <= leaf_size:
            child[node] = start
            count[node] = size
            continue
        c = centroid[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = size // 2
        part = np.argpartition(c[:, axis], mid, kind="introselect")
        order[start:end] = idx[part]
        left = new_node()
        right = new_node()
        assert right == left + 1
        child[node] = left
        count[node] = 0
        stack.append((right, start + mid, end))
        stack.append((left, start, start + mid))
    return (np.array(bmin), np.array(bmax), np.array(child, np.int64), np.array(count, np.int64), order)


@njit(cache=True, inline="always")
def _hit_box(bmin, bmax, node, ox, oy, oz, ix, iy, iz, tmax):
    t0 = 0.0
    t1 = tmax
    lo = (bmin[node, 0] - ox) * ix
    hi = (bmax[node, 0] - ox) * ix
    if lo > hi:
        lo, hi = hi, lo
    t0 = max(t0, lo)
    t1 = min(t1, hi)
    lo = (bmin[node, 1] - oy) * iy
    hi = (bmax[node, 1] - oy) * iy
    if lo > hi:
        lo, hi = hi, lo
    t0 = max(t0, lo)
    t1 = min(t1, hi)
    lo = (bmin[node, 2] - oz) * iz
    hi = (bmax[node, 2] - oz) * iz
    if lo > hi:
        lo, hi = hi, lo
    t0 = max(t0, lo)
    t1 = min(t1, hi * 1.0000000000000004)
    return t0 <= t1


@njit(cache=True, inline="always")
def _hit_triangle(v0, e1, e2, tri, o, d, tmax):
    """Moller-Trumbore; returns (t, u, v) with t = -1 on miss."""
    px = d[1] * e2[tri, 2] - d[2] * e2[tri, 1]
    py = d[2] * e2[tri, 0] - d[0] * e2[tri, 2]
    pz = d[0] * e2[tri, 1] - d[1] * e2[tri, 0]
    det = e1[tri, 0] * px + e1[tri, 1] * py + e1[tri, 2] * pz
    if abs(det) < 1e-14:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    tx = o[0] - v0[tri, 0]
    ty = o[1] - v0[tri, 1]
    tz = o[2] - v0[tri, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0, 0.0, 0.0
    qx = ty * e1[tri, 2] - tz * e1[tri, 1]
    qy = tz * e1[tri, 0] - tx * e1[tri, 2]
    qz = tx * e1[tri, 1] - ty * e1[tri, 0]
    v = (d[0] * qx + d[1] * qy + d[2] * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0, 0.0, 0.0
    t = (e2[tri, 0] * qx + e2[tri, 1] * qy + e2[tri, 2] * qz) * inv
    if t <= 0.0 or t >= tmax:
        return -1.0, 0.0, 0.0
    return t, u, v


@njit(cache=True)
def intersect(bmin, bmax, child, count, order, v0, e1, e2, o, d, tmax, stack, any_hit):
    """Closest (or any, if ``any_hit``) intersection. Returns (tri, t, u, v); tri = -1 on miss."""
    ix = 1.0 / d[0] if d[0] != 0.0 else 1e300
    iy = 1.0 / d[1] if d[1] != 0.0 else 1e300
    iz = 1.0 / d[2] if d[2] != 0.0 else 1e300
    best = -1
    best_t = tmax
    best_u = 0.0
    best_v = 0.0
    if v0.shape[0] == 0:
        return best, best_t, best_u, best_v
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _hit_box(bmin, bmax, node, o[0], o[1], o[2], ix, iy, iz, best_t):
            continue
        cnt = count[node]
        if cnt > 0:
            start = child[node]
            for k in range(start, start + cnt):
                tri = order[k]
                t, u, v = _hit_triangle(v0, e1, e2, tri, o, d, best_t)
                if t > 0.0:
                    best, best_t, best_u, best_v = tri, t, u, v
                    if any_hit:
                        return best, best_t, best_u, best_v
        else:
            c = child[node]
            stack[sp] = c + 1
            stack[sp + 1] = c
            sp += 2
    return best, best_t, best_u, best_v

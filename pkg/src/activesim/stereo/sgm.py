"""Four-path semi-global cost aggregation.

Horizontal paths run one row per task, vertical paths one column strip per
task. Every output cell is summed in the same fixed order (left-right,
right-left, top-bottom, bottom-top), so results do not depend on the thread
count.
"""

import numpy as np
from numba import njit, prange

from activesim.stereo.census import CostVolume

_STRIP = 16


@njit(cache=True, inline="always")
def _step(cost, prev, cur, p1, p2):
    """One recurrence step: cur = C + min(prev terms) - min(prev). Returns min(cur)."""
    nd = cost.shape[0]
    mprev = prev[0]
    for d in range(1, nd):
        if prev[d] < mprev:
            mprev = prev[d]
    jump = mprev + p2
    mcur = np.int64(1) << 62
    for d in range(nd):
        best = prev[d]
        if d > 0 and prev[d - 1] + p1 < best:
            best = prev[d - 1] + p1
        if d + 1 < nd and prev[d + 1] + p1 < best:
            best = prev[d + 1] + p1
        if jump < best:
            best = jump
        v = cost[d] + best - mprev
        cur[d] = v
        if v < mcur:
            mcur = v
    return mcur


@njit(parallel=True, cache=True)
def _horizontal(costs, p1, p2, out):
    h, w, nd = costs.shape
    for y in prange(h):
        prev = np.empty(nd, np.int64)
        cur = np.empty(nd, np.int64)
        # left to right
        for d in range(nd):
            prev[d] = costs[y, 0, d]
            out[y, 0, d] = prev[d]
        for x in range(1, w):
            _step(costs[y, x], prev, cur, p1, p2)
            for d in range(nd):
                out[y, x, d] = cur[d]
                prev[d] = cur[d]
        # right to left
        for d in range(nd):
            prev[d] = costs[y, w - 1, d]
            out[y, w - 1, d] += prev[d]
        for x in range(w - 2, -1, -1):
            _step(costs[y, x], prev, cur, p1, p2)
            for d in range(nd):
                out[y, x, d] += cur[d]
                prev[d] = cur[d]


@njit(parallel=True, cache=True)
def _vertical(costs, p1, p2, strip, out):
    h, w, nd = costs.shape
    nstrips = (w + strip - 1) // strip
    for s in prange(nstrips):
        x0 = s * strip
        x1 = min(w, x0 + strip)
        prev = np.empty((x1 - x0, nd), np.int64)
        cur = np.empty(nd, np.int64)
        # top to bottom
        for x in range(x0, x1):
            for d in range(nd):
                prev[x - x0, d] = costs[0, x, d]
                out[0, x, d] += prev[x - x0, d]
        for y in range(1, h):
            for x in range(x0, x1):
                _step(costs[y, x], prev[x - x0], cur, p1, p2)
                for d in range(nd):
                    out[y, x, d] += cur[d]
                    prev[x - x0, d] = cur[d]
        # bottom to top
        for x in range(x0, x1):
            for d in range(nd):
                prev[x - x0, d] = costs[h - 1, x, d]
                out[h - 1, x, d] += prev[x - x0, d]
        for y in range(h - 2, -1, -1):
            for x in range(x0, x1):
                _step(costs[y, x], prev[x - x0], cur, p1, p2)
                for d in range(nd):
                    out[y, x, d] += cur[d]
                    prev[x - x0, d] = cur[d]


def sgm_aggregate(cv, cfg):
    """Sum of the four directional path costs, as a uint32 volume."""
    costs = np.ascontiguousarray(cv.costs)
    out = np.zeros(costs.shape, np.uint32)
    _horizontal(costs, int(cfg.p1), int(cfg.p2), out)
    _vertical(costs, int(cfg.p1), int(cfg.p2), _STRIP, out)
    return CostVolume(out, cv.min_disp, cv.max_cost)


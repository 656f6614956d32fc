"""Disparity selection and post-processing.

Integer disparity maps use ``INVALID_INT`` (-1) as the sentinel; float
disparity and depth maps use NaN.
"""

import math

import numpy as np
from numba import njit, prange

from activesim.stereo.census import CostVolume

INVALID_INT = -1


@njit(parallel=True, cache=True)
def _wta_kernel(costs, min_disp, ratio, out):
    h, w, nd = costs.shape
    for y in prange(h):
        for x in range(w):
            c = costs[y, x]
            best = 0
            for d in range(1, nd):
                if c[d] < c[best]:
                    best = d
            has_second = False
            second = 0
            for d in range(nd):
                if abs(d - best) <= 1:
                    continue
                if not has_second or c[d] < second:
                    second = c[d]
                    has_second = True
            if has_second and float(c[best]) * (100.0 + ratio) >= float(second) * 100.0:
                out[y, x] = INVALID_INT
            else:
                out[y, x] = min_disp + best


def wta(cv, cfg):
    """Winner-take-all with the uniqueness test; ties go to the smaller disparity.

    The runner-up search skips d* and its two neighbours. When nothing is
    left to compare against, the pixel is kept.
    """
    out = np.empty(cv.costs.shape[:2], np.int32)
    _wta_kernel(np.ascontiguousarray(cv.costs), cv.min_disp, float(cfg.uniqueness_ratio), out)
    return out


@njit(cache=True)
def subpixel_offset(cm, c0, cp):
    denom = cm - 2.0 * c0 + cp
    if denom <= 0.0:
        return 0.0
    off = (cm - cp) / (2.0 * denom)
    if off > 0.5:
        return 0.5
    if off < -0.5:
        return -0.5
    return off


@njit(parallel=True, cache=True)
def _subpixel_kernel(costs, disp, min_disp, out):
    h, w, nd = costs.shape
    for y in prange(h):
        for x in range(w):
            d = disp[y, x]
            if d == INVALID_INT:
                out[y, x] = np.nan
                continue
            k = d - min_disp
            off = 0.0
            if 0 < k < nd - 1:
                off = subpixel_offset(float(costs[y, x, k - 1]), float(costs[y, x, k]), float(costs[y, x, k + 1]))
            out[y, x] = d + off


def subpixel(cv, disp):
    """Parabola-vertex refinement around each integer disparity (float32, NaN invalid)."""
    out = np.empty(disp.shape, np.float32)
    _subpixel_kernel(np.ascontiguousarray(cv.costs), disp.astype(np.int32), cv.min_disp, out)
    return out


def as_float_disparity(disp):
    out = disp.astype(np.float32)
    out[disp == INVALID_INT] = np.nan
    return out


@njit(parallel=True, cache=True)
def _right_kernel(costs, min_disp, fill, out):
    h, w, nd = costs.shape
    for y in prange(h):
        for x in range(w):
            for k in range(nd):
                xl = x + min_disp + k
                out[y, x, k] = costs[y, xl, k] if xl < w else fill


def right_volume(cv):
    """Raw cost volume seen from the right image: C_R(x, d) = C_L(x + d, d)."""
    out = np.empty_like(cv.costs)
    _right_kernel(np.ascontiguousarray(cv.costs), cv.min_disp, cv.max_cost, out)
    return CostVolume(out, cv.min_disp, cv.max_cost)


@njit(parallel=True, cache=True)
def _lr_kernel(dl, dr, max_diff, out):
    h, w = dl.shape
    for y in prange(h):
        for x in range(w):
            d = dl[y, x]
            out[y, x] = np.nan
            if math.isnan(d):
                continue
            xr = x - int(math.floor(d + 0.5))
            if xr < 0 or xr >= w:
                continue
            e = dr[y, xr]
            if math.isnan(e):
                continue
            if abs(d - e) <= max_diff:
                out[y, x] = d


def lr_check(dl, dr, cfg):
    """Keep left disparities that agree with the right map within ``lr_max_diff``."""
    if dl.shape != dr.shape:
        raise ValueError("disparity maps differ in size")
    out = np.empty(dl.shape, np.float32)
    _lr_kernel(np.asarray(dl, np.float32), np.asarray(dr, np.float32), float(cfg.lr_max_diff), out)
    return out


@njit(parallel=True, cache=True)
def _median_kernel(src, r, out):
    h, w = src.shape
    for y in prange(h):
        buf = np.empty((2 * r + 1) ** 2, np.float64)
        for x in range(w):
            if math.isnan(src[y, x]):
                out[y, x] = np.nan
                continue
            n = 0
            for yy in range(max(0, y - r), min(h, y + r + 1)):
                for xx in range(max(0, x - r), min(w, x + r + 1)):
                    v = src[yy, xx]
                    if not math.isnan(v):
                        buf[n] = v
                        n += 1
            vals = np.sort(buf[:n])
            if n % 2 == 1:
                out[y, x] = vals[n // 2]
            else:
                out[y, x] = 0.5 * (vals[n // 2 - 1] + vals[n // 2])


def median(disp, ksize):
    """Median over the valid pixels of a ksize x ksize window; invalid pixels stay invalid."""
    if ksize not in (0, 3, 5):
        raise ValueError("ksize must be 0, 3 or 5")
    disp = np.asarray(disp, np.float32)
    if ksize == 0:
        return disp.copy()
    out = np.empty(disp.shape, np.float32)
    _median_kernel(disp, ksize // 2, out)
    return out


def disp_to_depth(disp, fx, baseline, eps=1e-6):
    """Depth z = fx * baseline / d in meters; NaN where d is invalid or <= eps."""
    if fx <= 0 or baseline <= 0:
        raise ValueError("fx and baseline must be positive")
    disp = np.asarray(disp, np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        ok = disp > eps
        z = np.where(ok, fx * baseline / np.where(ok, disp, 1.0), np.nan)
    return z.astype(np.float32)

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from activesim import _threads
from activesim.scene.types import SensorRig
from activesim.stereo.census import CostVolume, census, matching_cost
from activesim.stereo.config import StereoConfig
from activesim.stereo.geometry import rectify, register_depth
from activesim.stereo.refine import (
    as_float_disparity,
    disp_to_depth,
    lr_check,
    median,
    right_volume,
    subpixel,
    wta,
)
from activesim.stereo.sgm import sgm_aggregate


@dataclass
class DepthResult:
    disparity: np.ndarray  # float32, NaN invalid
    depth: np.ndarray  # float32 meters, NaN invalid; None without geometry
    registered_depth: np.ndarray  # in the RGB frame; None when registration is off


def _to_gray8(img):
    img = np.asarray(img)
    if img.ndim == 3:
        img = img[:, :, 0]
    if img.dtype != np.uint8:
        raise ValueError(f"expected 8-bit IR images, got {img.dtype}")
    return img


def _disparity(aggregated, cfg):
    disp = wta(aggregated, cfg)
    if not cfg.subpixel:
        return as_float_disparity(disp)
    return subpixel(aggregated, disp)


def _edge_radius(cfg):
    return cfg.census_width // 2 + cfg.block_width // 2


@njit(parallel=True, cache=True)
def _replicate_edge(costs, min_disp, r, left_side, out):
    h, w, nd = costs.shape
    for y in prange(h):
        for x in range(w):
            kmax = (x - r if left_side else w - 1 - r - x) - min_disp
            for k in range(nd):
                src = k if (kmax < 0 or k <= kmax) else kmax
                out[y, x, k] = costs[y, x, src]


def replicate_out_of_range(cv, cfg, side="left"):
    """Replace out-of-range disparities by the last in-range cost of the pixel.

    Near the image edge only part of the disparity range can be tested. The
    constant max-cost filler would give those pixels an artificial
    preference that the path recurrence carries into the interior; repeating
    the edge value keeps flat cost curves flat.
    """
    out = np.empty_like(cv.costs)
    _replicate_edge(np.ascontiguousarray(cv.costs), cv.min_disp, _edge_radius(cfg), side == "left", out)
    return CostVolume(out, cv.min_disp, cv.max_cost)


def _in_range(disp, cfg, side):
    h, w = disp.shape
    x = np.arange(w)[None, :]
    limit = x - _edge_radius(cfg) if side == "left" else w - 1 - _edge_radius(cfg) - x
    with np.errstate(invalid="ignore"):
        return disp <= limit + 0.5


def _side_disparity(raw, cfg, side):
    disp = _disparity(sgm_aggregate(replicate_out_of_range(raw, cfg, side), cfg), cfg)
    disp[~_in_range(disp, cfg, side)] = np.nan
    return disp


def _single_pass(left, right, cfg):
    raw = matching_cost(census(left, cfg), census(right, cfg), cfg)
    disp = _side_disparity(raw, cfg, "left")
    if cfg.lr_check:
        disp = lr_check(disp, _side_disparity(right_volume(raw), cfg, "right"), cfg)
    return median(disp, cfg.median_ksize)


def half_pixel_shift(img):
    """Resample an 8-bit image at x + 0.5 (mean of horizontal neighbours, rounded half up)."""
    img = img.astype(np.uint16)
    nxt = np.concatenate([img[:, 1:], img[:, -1:]], axis=1)
    return ((img + nxt + 1) // 2).astype(np.uint8)


def compute_disparity(left, right, cfg):
    """Left disparity of a rectified pair (no rectification, no depth)."""
    disp = _single_pass(left, right, cfg)
    if not (cfg.subpixel and cfg.locking_compensation):
        return disp
    # matching against right(x + 0.5) measures d + 0.5
    shifted = _single_pass(left, half_pixel_shift(right), cfg) - np.float32(0.5)
    out = np.float32(0.5) * (disp + shifted)
    with np.errstate(invalid="ignore"):
        out[np.abs(disp - shifted) > max(cfg.lr_max_diff, 1.0)] = np.nan
    return np.clip(out, cfg.min_disp - 0.5, cfg.max_disp - 1.0).astype(np.float32)


def compute_depth(left, right, cfg=None, rig=None, homographies=None, fx=None, baseline=None, threads=None):
    """Depth from an 8-bit IR pair.

    Geometry comes from ``rig`` (a SensorRig) unless ``fx``/``baseline`` are
    given. Without either, only the disparity is returned. ``homographies``
    forces a warp even when a rig is supplied.
    """
    cfg = cfg or StereoConfig()
    left = _to_gray8(left)
    right = _to_gray8(right)
    if left.shape != right.shape:
        raise ValueError(f"image sizes differ: {left.shape} vs {right.shape}")
    if rig is not None and not isinstance(rig, SensorRig):
        raise TypeError("rig must be a SensorRig")
    with _threads.thread_scope(threads):
        if cfg.rectify:
            left, right = rectify(left, right, homographies if homographies is not None else rig)
        disp = compute_disparity(left, right, cfg)
    if fx is None and rig is not None:
        fx = rig.ir_left.fx
    if baseline is None and rig is not None:
        baseline = rig.baseline
    depth = None
    if fx is not None and baseline is not None:
        depth = disp_to_depth(disp, fx, baseline)
    registered = None
    if cfg.register and depth is not None and rig is not None:
        registered = register_depth(depth, rig.ir_left, rig.rgb)
    return DepthResult(disp, depth, registered)

"""Image rectification and depth registration."""

import numpy as np
from numba import njit, prange

from activesim.scene.types import SensorRig, validate_rig


@njit(parallel=True, cache=True)
def _warp_kernel(src, hinv, out):
    h, w = src.shape
    oh, ow = out.shape
    for y in prange(oh):
        for x in range(ow):
            sx = hinv[0, 0] * x + hinv[0, 1] * y + hinv[0, 2]
            sy = hinv[1, 0] * x + hinv[1, 1] * y + hinv[1, 2]
            sw = hinv[2, 0] * x + hinv[2, 1] * y + hinv[2, 2]
            if sw == 0.0:
                out[y, x] = 0.0
                continue
            sx /= sw
            sy /= sw
            x0 = int(np.floor(sx))
            y0 = int(np.floor(sy))
            fx = sx - x0
            fy = sy - y0
            acc = 0.0
            for dy in range(2):
                wy = fy if dy else 1.0 - fy
                if wy == 0.0:
                    continue
                for dx in range(2):
                    wx = fx if dx else 1.0 - fx
                    if wx == 0.0:
                        continue
                    xx = x0 + dx
                    yy = y0 + dy
                    if 0 <= xx < w and 0 <= yy < h:
                        acc += wx * wy * src[yy, xx]
            out[y, x] = acc


def warp_homography(img, hmat):
    """Warp so that out(p) = img(H^-1 p), bilinear, zero outside; keeps the dtype."""
    hmat = np.asarray(hmat, np.float64)
    if hmat.shape != (3, 3):
        raise ValueError("homography must be 3x3")
    if abs(np.linalg.det(hmat)) < 1e-12:
        raise ValueError("homography is singular")
    img = np.asarray(img)
    out = np.empty(img.shape, np.float64)
    _warp_kernel(np.ascontiguousarray(img, dtype=np.float64), np.linalg.inv(hmat), out)
    if img.dtype == np.uint8:
        return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return out.astype(img.dtype)


def rectify(left, right, calib=None):
    """Rectify an IR pair.

    ``calib`` is a SensorRig (simulated rigs are born rectified, so the
    images pass through after the rig is validated), a pair of 3x3
    homographies, or None for pass-through.
    """
    left = np.asarray(left)
    right = np.asarray(right)
    if left.shape != right.shape:
        raise ValueError(f"image sizes differ: {left.shape} vs {right.shape}")
    if calib is None:
        return left, right
    if isinstance(calib, SensorRig):
        validate_rig(calib)
        return left, right
    hl, hr = (np.asarray(m, np.float64) for m in calib)
    for m in (hl, hr):
        if m.shape != (3, 3):
            raise ValueError("homography must be 3x3")
        if abs(np.linalg.det(m)) < 1e-12:
            raise ValueError("homography is singular")
    eye = np.eye(3)
    out_l = left.copy() if np.array_equal(hl, eye) else warp_homography(left, hl)
    out_r = right.copy() if np.array_equal(hr, eye) else warp_homography(right, hr)
    return out_l, out_r


def register_depth(depth, ir_cam, rgb_cam):
    """Reproject an IR-frame depth map into the RGB camera; nearest sample wins."""
    depth = np.asarray(depth, np.float64)
    if depth.shape != (ir_cam.height, ir_cam.width):
        raise ValueError("depth map does not match the IR camera resolution")
    vs, us = np.nonzero(np.isfinite(depth) & (depth > 0))
    z = depth[vs, us]
    pts = np.stack([(us - ir_cam.cx) / ir_cam.fx * z, (vs - ir_cam.cy) / ir_cam.fy * z, z], axis=1)
    m_ir = ir_cam.pose.matrix
    m_rgb = rgb_cam.pose.matrix
    world = pts @ m_ir[:3, :3].T + m_ir[:3, 3]
    local = (world - m_rgb[:3, 3]) @ m_rgb[:3, :3]
    out = np.full((rgb_cam.height, rgb_cam.width), np.inf)
    front = local[:, 2] > 0
    local = local[front]
    zr = local[:, 2]
    u = np.floor(rgb_cam.fx * local[:, 0] / zr + rgb_cam.cx + 0.5).astype(np.int64)
    v = np.floor(rgb_cam.fy * local[:, 1] / zr + rgb_cam.cy + 0.5).astype(np.int64)
    inside = (u >= 0) & (u < rgb_cam.width) & (v >= 0) & (v < rgb_cam.height)
    np.minimum.at(out, (v[inside], u[inside]), zr[inside])
    out[np.isinf(out)] = np.nan
    return out.astype(np.float32)

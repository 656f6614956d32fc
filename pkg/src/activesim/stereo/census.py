"""Center-symmetric census transform and Hamming matching cost."""

from dataclasses import dataclass

import numpy as np
from numba import njit, prange


@dataclass
class CensusImage:
    """Per-pixel bitstrings packed little-endian into uint64 words.

    Bit k belongs to the k-th point-symmetric pair. ``valid`` is False where
    the window leaves the image.
    """

    bits: np.ndarray  # (H, W, words) uint64
    valid: np.ndarray  # (H, W) bool
    bits_per_pixel: int

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def height(self):
        return self.bits.shape[0]

    def bit(self, y, x, k):
        return int((int(self.bits[y, x, k // 64]) >> (k % 64)) & 1)


@dataclass
class CostVolume:
    """Costs laid out (H, W, D); disparity of plane k is ``min_disp + k``."""

    costs: np.ndarray
    min_disp: int
    max_cost: int

    @property
    def height(self):
        return self.costs.shape[0]

    @property
    def width(self):
        return self.costs.shape[1]

    @property
    def disp_count(self):
        return self.costs.shape[2]


def census_pairs(width, height):
    """Offsets (dy_a, dx_a, dy_b, dx_b) of the symmetric pairs, row-major over the first half."""
    ry, rx = height // 2, width // 2
    pairs = []
    for k in range((width * height) // 2):
        dy, dx = k // width - ry, k % width - rx
        pairs.append((dy, dx, -dy, -dx))
    return np.array(pairs, dtype=np.int64).reshape(-1, 4)


@njit(parallel=True, cache=True)
def _census_kernel(img, pairs, ry, rx, bits, valid):
    h, w = img.shape
    npairs = pairs.shape[0]
    for y in prange(h):
        for x in range(w):
            if y < ry or y >= h - ry or x < rx or x >= w - rx:
                valid[y, x] = False
                continue
            valid[y, x] = True
            for k in range(npairs):
                a = img[y + pairs[k, 0], x + pairs[k, 1]]
                b = img[y + pairs[k, 2], x + pairs[k, 3]]
                if a > b:
                    word = k >> 6
                    bits[y, x, word] |= np.uint64(1) << np.uint64(k & 63)


def census(img, cfg):
    """Census bitstrings for an image; ties (a == b) give bit 0."""
    img = np.ascontiguousarray(img)
    if img.ndim != 2:
        raise ValueError("census expects a single-channel image")
    if img.dtype.kind not in "iu":
        img = img.astype(np.float64)
    h, w = img.shape
    if h < cfg.census_height or w < cfg.census_width:
        raise ValueError("census window does not fit the image")
    nbits = cfg.census_bits
    words = (nbits + 63) // 64
    bits = np.zeros((h, w, words), np.uint64)
    valid = np.zeros((h, w), np.bool_)
    _census_kernel(img, census_pairs(cfg.census_width, cfg.census_height), cfg.census_height // 2,
                   cfg.census_width // 2, bits, valid)
    return CensusImage(bits, valid, nbits)


_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


@njit(cache=True, inline="always")
def popcount64(x):
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return int((x * _H01) >> np.uint64(56))


@njit(parallel=True, cache=True)
def _pixel_cost_kernel(bl, vl, br, vr, min_disp, max_cost, out):
    h, w, words = bl.shape
    nd = out.shape[2]
    for y in prange(h):
        for x in range(w):
            for k in range(nd):
                xr = x - (min_disp + k)
                if xr < 0 or not vl[y, x] or not vr[y, xr]:
                    out[y, x, k] = max_cost
                    continue
                c = 0
                for j in range(words):
                    c += popcount64(bl[y, x, j] ^ br[y, xr, j])
                out[y, x, k] = c


@njit(parallel=True, cache=True)
def _box_rows(src, bw, fill, out):
    h, w, nd = src.shape
    r = bw // 2
    for y in prange(h):
        for x in range(w):
            for k in range(nd):
                s = 0
                for dx in range(-r, r + 1):
                    xx = x + dx
                    s += src[y, xx, k] if 0 <= xx < w else fill
                out[y, x, k] = s


@njit(parallel=True, cache=True)
def _box_cols(src, bh, fill, out):
    h, w, nd = src.shape
    r = bh // 2
    for y in prange(h):
        for x in range(w):
            for k in range(nd):
                s = 0
                for dy in range(-r, r + 1):
                    yy = y + dy
                    s += src[yy, x, k] if 0 <= yy < h else fill
                out[y, x, k] = s


def matching_cost(cl, cr, cfg):
    """Hamming cost volume; SGBM sums it over the block around both pixels.

    Entries whose right pixel falls outside the image or on an invalid
    census border hold the largest cost a pixel can have (``cfg.max_cost``
    for blocks, summed per contributing pixel).
    """
    if cl.bits.shape != cr.bits.shape:
        raise ValueError("census images differ in size")
    h, w, _ = cl.bits.shape
    bits_cost = cl.bits_per_pixel
    pixel = np.empty((h, w, cfg.disp_count), np.uint16)
    _pixel_cost_kernel(cl.bits, cl.valid, cr.bits, cr.valid, cfg.min_disp, bits_cost, pixel)
    if cfg.block_area == 1:
        return CostVolume(pixel, cfg.min_disp, bits_cost)
    tmp = np.empty((h, w, cfg.disp_count), np.uint16)
    _box_rows(pixel, cfg.block_width, bits_cost, tmp)
    out = np.empty_like(tmp)
    _box_cols(tmp, cfg.block_height, bits_cost * cfg.block_width, out)
    return CostVolume(out, cfg.min_disp, bits_cost * cfg.block_area)

"""Light sampling for next-event estimation.

Every light is packed into one float64 row (see ``L_*`` offsets) so kernels
can loop over lights without Python objects. Spot-type lights emit along
their +z axis; textured spots attenuate by the pattern texel the shadow ray
passes through. The pattern plane sits at unit distance along +z with the
pattern's shorter side spanning the full cone, so the pattern always covers
the cone and an all-ones pattern behaves exactly like a plain spot.
"""

import math

import numpy as np
from numba import njit

from activesim.render._math import rand, stream_seed

KIND_CODES = {"point": 0, "directional": 1, "spot": 2, "area": 3, "textured_spot": 4}

L_KIND = 0
L_POS = 1
L_X = 4
L_Y = 7
L_Z = 10
L_INT = 13
L_COSFOV = 16
L_TEX = 17
L_FOCAL = 18
L_SX = 19
L_SY = 20
L_FILTER = 21
L_PROJ = 22
L_SIZE = 23

FILTER_NEAREST = 0
FILTER_BILINEAR = 1


class TexturePack:
    """All textures flattened into one float32 RGB buffer."""

    def __init__(self):
        self.chunks = []
        self.offsets = []
        self.shapes = []
        self._size = 0

    def add(self, data):
        data = np.asarray(data, np.float32)
        if data.ndim == 2:
            data = np.repeat(data[:, :, None], 3, axis=2)
        self.offsets.append(self._size)
        self.shapes.append(data.shape[:2])
        self.chunks.append(np.ascontiguousarray(data).ravel())
        self._size += data.size
        return len(self.offsets) - 1

    def arrays(self):
        data = np.concatenate(self.chunks) if self.chunks else np.zeros(3, np.float32)
        offsets = np.array(self.offsets or [0], np.int64)
        heights = np.array([s[0] for s in self.shapes] or [1], np.int64)
        widths = np.array([s[1] for s in self.shapes] or [1], np.int64)
        return data, offsets, widths, heights


def pack_light(light, pack, intensity_scale=1.0, is_projector=False, pattern_filter=FILTER_NEAREST):
    row = np.zeros(L_SIZE)
    row[L_KIND] = KIND_CODES[light.kind]
    m = light.pose.matrix
    row[L_POS:L_POS + 3] = m[:3, 3]
    row[L_X:L_X + 3] = m[:3, 0]
    row[L_Y:L_Y + 3] = m[:3, 1]
    row[L_Z:L_Z + 3] = m[:3, 2]
    row[L_INT:L_INT + 3] = np.asarray(light.intensity) * intensity_scale
    row[L_COSFOV] = math.cos(light.fov)
    row[L_TEX] = -1
    if light.kind == "textured_spot":
        row[L_TEX] = pack.add(light.pattern.data)
        h, w = light.pattern.data.shape
        row[L_FOCAL] = (min(w, h) / 2.0) / math.tan(light.fov)
    row[L_SX], row[L_SY] = light.size
    row[L_FILTER] = pattern_filter
    row[L_PROJ] = 1.0 if is_projector else 0.0
    return row


@njit(cache=True)
def texel(tex, off, w, h, col, row, ch):
    return tex[off + (row * w + col) * 3 + ch]


@njit(cache=True)
def pattern_lookup(tex, offsets, widths, heights, index, xc, yc, filt):
    """Grayscale value at continuous pattern coordinates (pixel (c, r) spans [c, c+1))."""
    w = widths[index]
    h = heights[index]
    off = offsets[index]
    if xc < 0.0 or yc < 0.0 or xc >= w or yc >= h:
        return 0.0
    if filt == FILTER_NEAREST:
        return texel(tex, off, w, h, int(xc), int(yc), 0)
    x = min(max(xc - 0.5, 0.0), w - 1.0)
    y = min(max(yc - 0.5, 0.0), h - 1.0)
    c0 = int(x)
    r0 = int(y)
    c1 = min(c0 + 1, w - 1)
    r1 = min(r0 + 1, h - 1)
    fx = x - c0
    fy = y - r0
    top = (1.0 - fx) * texel(tex, off, w, h, c0, r0, 0) + fx * texel(tex, off, w, h, c1, r0, 0)
    bot = (1.0 - fx) * texel(tex, off, w, h, c0, r1, 0) + fx * texel(tex, off, w, h, c1, r1, 0)
    return (1.0 - fy) * top + fy * bot


@njit(cache=True)
def sample_light(lights, k, tex, offsets, widths, heights, px, py, pz, u1, u2):
    """Direct contribution of light ``k`` at point p.

    Returns (wx, wy, wz, dist, r, g, b, pdf): unit direction towards the
    light, distance for the shadow ray (inf for directional), incident
    radiance-times-solid-angle (irradiance on a surface facing the light),
    and the sampling density (1 for delta lights, 1/area for area lights).
    """
    kind = int(lights[k, L_KIND])
    ir = lights[k, L_INT]
    ig = lights[k, L_INT + 1]
    ib = lights[k, L_INT + 2]
    if kind == 1:
        return -lights[k, L_Z], -lights[k, L_Z + 1], -lights[k, L_Z + 2], np.inf, ir, ig, ib, 1.0
    if kind == 3:
        sx = lights[k, L_SX]
        sy = lights[k, L_SY]
        a = (u1 - 0.5) * sx
        b = (u2 - 0.5) * sy
        qx = lights[k, L_POS] + a * lights[k, L_X] + b * lights[k, L_Y]
        qy = lights[k, L_POS + 1] + a * lights[k, L_X + 1] + b * lights[k, L_Y + 1]
        qz = lights[k, L_POS + 2] + a * lights[k, L_X + 2] + b * lights[k, L_Y + 2]
        pdf = 1.0 / (sx * sy)
    else:
        qx = lights[k, L_POS]
        qy = lights[k, L_POS + 1]
        qz = lights[k, L_POS + 2]
        pdf = 1.0
    dx = qx - px
    dy = qy - py
    dz = qz - pz
    r2 = dx * dx + dy * dy + dz * dz
    if r2 <= 0.0:
        return 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, pdf
    r = math.sqrt(r2)
    wx = dx / r
    wy = dy / r
    wz = dz / r
    att = 1.0 / r2
    if kind == 3:
        cos_l = -(wx * lights[k, L_Z] + wy * lights[k, L_Z + 1] + wz * lights[k, L_Z + 2])
        if cos_l <= 0.0:
            return wx, wy, wz, r, 0.0, 0.0, 0.0, pdf
        att *= cos_l / pdf
    elif kind == 2 or kind == 4:
        lz = -(wx * lights[k, L_Z] + wy * lights[k, L_Z + 1] + wz * lights[k, L_Z + 2])
        if lz <= lights[k, L_COSFOV]:
            return wx, wy, wz, r, 0.0, 0.0, 0.0, pdf
        if kind == 4:
            lx = -(wx * lights[k, L_X] + wy * lights[k, L_X + 1] + wz * lights[k, L_X + 2])
            ly = -(wx * lights[k, L_Y] + wy * lights[k, L_Y + 1] + wz * lights[k, L_Y + 2])
            index = int(lights[k, L_TEX])
            f = lights[k, L_FOCAL]
            xc = f * lx / lz + widths[index] * 0.5
            yc = f * ly / lz + heights[index] * 0.5
            att *= pattern_lookup(tex, offsets, widths, heights, index, xc, yc, int(lights[k, L_FILTER]))
    return wx, wy, wz, r, ir * att, ig * att, ib * att, pdf


def light_contribution(light, shade_point, rng=0, pattern_filter=FILTER_NEAREST):
    """Unoccluded contribution of ``light`` at ``shade_point``.

    Returns ``(direction, radiance, pdf)``: unit direction towards the light,
    the incident RGB value (intensity x pattern x falloff x cone mask), and
    the sampling density (1 for delta lights).
    """
    pack = TexturePack()
    row = pack_light(light, pack, pattern_filter=pattern_filter)[None, :]
    tex, offsets, widths, heights = pack.arrays()
    state = np.array([stream_seed(int(rng), 0)], np.uint64)
    u1, u2 = rand(state), rand(state)
    p = np.asarray(shade_point, float)
    wx, wy, wz, _, r, g, b, pdf = sample_light(row, 0, tex, offsets, widths, heights, p[0], p[1], p[2], u1, u2)
    return np.array([wx, wy, wz]), np.array([r, g, b]), pdf

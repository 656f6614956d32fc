"""Unidirectional path tracer with next-event estimation.

The image is split into fixed-size tiles; each tile owns an RNG stream seeded
from (seed, tile index), so the output does not depend on how tiles are
scheduled across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange
from scipy.ndimage import median_filter

from activesim import _threads
from activesim.render import _math as vm
from activesim.render.bsdf import bsdf_eval, bsdf_sample
from activesim.render.bvh import STACK_SIZE, intersect
from activesim.render.compile import (
    M_COLOR,
    M_EMISSION,
    M_IOR,
    M_METALLIC,
    M_ROUGHNESS,
    M_SPECULAR,
    M_TEXTURE,
    M_TRANSMISSION,
    compile_geometry,
    compile_lights,
    compile_materials,
)
from activesim.render.lights import FILTER_NEAREST, L_INT, TexturePack, sample_light, texel

EPS = 1e-5
RR_START = 3
RR_FLOOR = 0.05
DEFAULT_TILE = 16
R2_A1 = 0.7548776662466927
R2_A2 = 0.5698402909980532


@dataclass
class RadianceImage:
    """Linear radiance, (H, W) for one channel or (H, W, 3)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def channels(self):
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def camera_array(cam):
    m = cam.pose.matrix
    return np.concatenate([[cam.fx, cam.fy, cam.cx, cam.cy], m[:3, :3].ravel(), m[:3, 3]])


@njit(cache=True)
def _shade_color(mats, m, tex, toff, tw, th, uvs, has_uvs, tri, u, v, mono):
    r = mats[m, M_COLOR]
    g = mats[m, M_COLOR + 1]
    b = mats[m, M_COLOR + 2]
    t = int(mats[m, M_TEXTURE])
    if t >= 0 and has_uvs[tri]:
        w = 1.0 - u - v
        tu = w * uvs[tri, 0] + u * uvs[tri, 2] + v * uvs[tri, 4]
        tv = w * uvs[tri, 1] + u * uvs[tri, 3] + v * uvs[tri, 5]
        tu -= math.floor(tu)
        tv -= math.floor(tv)
        col = min(int(tu * tw[t]), tw[t] - 1)
        row = min(int((1.0 - tv) * th[t]), th[t] - 1)
        r *= texel(tex, toff[t], tw[t], th[t], col, row, 0)
        g *= texel(tex, toff[t], tw[t], th[t], col, row, 1)
        b *= texel(tex, toff[t], tw[t], th[t], col, row, 2)
    if mono:
        return (r, r, r)
    return (r, g, b)


@njit(cache=True)
def _trace_path(
    bmin, bmax, child, count, order, v0, e1, e2, ng_arr, nrm, has_n, uvs, has_uvs, tri_obj,
    mats, tex, toff, tw, th, lights, env, emission_scale, mono, max_bounces, o, d, state, stack,
):
    thr = (1.0, 1.0, 1.0)
    acc = (0.0, 0.0, 0.0)
    nlights = lights.shape[0]
    for bounce in range(max_bounces + 1):
        tri, t, u, v = intersect(bmin, bmax, child, count, order, v0, e1, e2, o, d, np.inf, stack, False)
        if tri < 0:
            acc = vm.add(acc, vm.mul(thr, env))
            break
        p = (o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2])
        m = tri_obj[tri]
        ng = (ng_arr[tri, 0], ng_arr[tri, 1], ng_arr[tri, 2])
        if has_n[tri]:
            w = 1.0 - u - v
            n = vm.normalize((
                w * nrm[tri, 0] + u * nrm[tri, 3] + v * nrm[tri, 6],
                w * nrm[tri, 1] + u * nrm[tri, 4] + v * nrm[tri, 7],
                w * nrm[tri, 2] + u * nrm[tri, 5] + v * nrm[tri, 8],
            ))
            if vm.dot(ng, n) < 0.0:
                ng = vm.neg(ng)
        else:
            n = ng
        er = mats[m, M_EMISSION]
        eg = mats[m, M_EMISSION + 1]
        eb = mats[m, M_EMISSION + 2]
        if er + eg + eb > 0.0:
            if mono:
                eg = er
                eb = er
            acc = vm.add(acc, vm.scale(vm.mul(thr, (er, eg, eb)), emission_scale))
        if bounce == max_bounces:
            break
        color = _shade_color(mats, m, tex, toff, tw, th, uvs, has_uvs, tri, u, v, mono)
        metallic = mats[m, M_METALLIC]
        specular = mats[m, M_SPECULAR]
        rough = mats[m, M_ROUGHNESS]
        ior = mats[m, M_IOR]
        trans = mats[m, M_TRANSMISSION]
        wo = vm.neg(d)
        side_o = vm.dot(ng, wo)
        for k in range(nlights):
            wx, wy, wz, dist, lr, lg, lb, _ = sample_light(
                lights, k, tex, toff, tw, th, p[0], p[1], p[2], vm.rand(state), vm.rand(state)
            )
            if lr + lg + lb <= 0.0:
                continue
            wi = (wx, wy, wz)
            side_i = vm.dot(ng, wi)
            if trans <= 0.0 and side_i * side_o <= 0.0:
                continue
            f = bsdf_eval(color, metallic, specular, rough, ior, trans, n, wi, wo)
            if f[0] + f[1] + f[2] <= 0.0:
                continue
            off = EPS if side_i > 0.0 else -EPS
            so = (p[0] + off * ng[0], p[1] + off * ng[1], p[2] + off * ng[2])
            tmax = dist - 2.0 * EPS if dist < np.inf else np.inf
            hit, _, _, _ = intersect(bmin, bmax, child, count, order, v0, e1, e2, so, wi, tmax, stack, True)
            if hit >= 0:
                continue
            c = abs(vm.dot(n, wi))
            acc = (acc[0] + thr[0] * f[0] * lr * c, acc[1] + thr[1] * f[1] * lg * c, acc[2] + thr[2] * f[2] * lb * c)
        ok, wi, weight, _, lobe = bsdf_sample(
            color, metallic, specular, rough, ior, trans, n, wo,
            vm.rand(state), vm.rand(state), vm.rand(state), vm.rand(state),
        )
        if not ok:
            break
        side_i = vm.dot(ng, wi)
        if (lobe == 3) != (side_i * side_o < 0.0):
            break
        thr = vm.mul(thr, weight)
        if bounce >= RR_START:
            q = min(max(vm.max3(thr), RR_FLOOR), 1.0)
            if vm.rand(state) >= q:
                break
            thr = vm.scale(thr, 1.0 / q)
        if vm.max3(thr) <= 0.0:
            break
        off = EPS if side_i > 0.0 else -EPS
        o = (p[0] + off * ng[0], p[1] + off * ng[1], p[2] + off * ng[2])
        d = wi
    return acc


@njit(parallel=True, cache=True)
def _render_kernel(
    bmin, bmax, child, count, order, v0, e1, e2, ng_arr, nrm, has_n, uvs, has_uvs, tri_obj,
    mats, tex, toff, tw, th, lights, cam, width, height, spp, max_bounces, seed, tile,
    env, emission_scale, clamp, mono, out,
):
    tiles_x = (width + tile - 1) // tile
    tiles_y = (height + tile - 1) // tile
    fx, fy, cx, cy = cam[0], cam[1], cam[2], cam[3]
    origin = (cam[13], cam[14], cam[15])
    for ti in prange(tiles_x * tiles_y):
        state = np.empty(1, np.uint64)
        state[0] = vm.stream_seed(seed, ti)
        stack = np.empty(STACK_SIZE, np.int64)
        x0 = (ti % tiles_x) * tile
        y0 = (ti // tiles_x) * tile
        for y in range(y0, min(y0 + tile, height)):
            for x in range(x0, min(x0 + tile, width)):
                sr = 0.0
                sg = 0.0
                sb = 0.0
                # R2 low-discrepancy pixel offsets with a random shift per pixel
                ox = vm.rand(state)
                oy = vm.rand(state)
                for s in range(spp):
                    jx = (ox + s * R2_A1) % 1.0
                    jy = (oy + s * R2_A2) % 1.0
                    dxc = (x + jx - 0.5 - cx) / fx
                    dyc = (y + jy - 0.5 - cy) / fy
                    d = vm.normalize((
                        cam[4] * dxc + cam[5] * dyc + cam[6],
                        cam[7] * dxc + cam[8] * dyc + cam[9],
                        cam[10] * dxc + cam[11] * dyc + cam[12],
                    ))
                    r, g, b = _trace_path(
                        bmin, bmax, child, count, order, v0, e1, e2, ng_arr, nrm, has_n, uvs, has_uvs, tri_obj,
                        mats, tex, toff, tw, th, lights, env, emission_scale, mono, max_bounces,
                        origin, d, state, stack,
                    )
                    if clamp > 0.0:
                        r = min(r, clamp)
                        g = min(g, clamp)
                        b = min(b, clamp)
                    sr += r
                    sg += g
                    sb += b
                out[y, x, 0] = sr / spp
                out[y, x, 1] = sg / spp
                out[y, x, 2] = sb / spp


@njit(parallel=True, cache=True)
def _depth_kernel(bmin, bmax, child, count, order, v0, e1, e2, cam, width, height, out):
    origin = (cam[13], cam[14], cam[15])
    for y in prange(height):
        stack = np.empty(STACK_SIZE, np.int64)
        for x in range(width):
            dxc = (x - cam[2]) / cam[0]
            dyc = (y - cam[3]) / cam[1]
            norm = math.sqrt(dxc * dxc + dyc * dyc + 1.0)
            d = (
                (cam[4] * dxc + cam[5] * dyc + cam[6]) / norm,
                (cam[7] * dxc + cam[8] * dyc + cam[9]) / norm,
                (cam[10] * dxc + cam[11] * dyc + cam[12]) / norm,
            )
            tri, t, _, _ = intersect(bmin, bmax, child, count, order, v0, e1, e2, origin, d, np.inf, stack, False)
            out[y, x] = t / norm if tri >= 0 else np.nan


def _brightest(lights, mats, env, emission_scale):
    ref = float(np.max(env)) if len(env) else 0.0
    if len(lights):
        ref = max(ref, float(lights[:, L_INT:L_INT + 3].max()))
    if len(mats):
        ref = max(ref, float(mats[:, M_EMISSION:M_EMISSION + 3].max()) * emission_scale)
    return ref


def trace(
    scene,
    cam,
    spp=8,
    spectrum="visible",
    max_bounces=8,
    seed=0,
    tile=DEFAULT_TILE,
    clamp="auto",
    median_prefilter=False,
    include_projector=None,
    pattern_filter=FILTER_NEAREST,
    threads=None,
):
    """Render ``scene`` through ``cam``.

    ``spectrum="visible"`` returns an (H, W, 3) image lit by all scene lights
    (the projector only if ``include_projector``). ``spectrum="ir"`` scales
    scene lights and emitters by the rig's ``visible_attenuation``, adds the
    projector at full strength, uses ``ir_ambient`` as background radiance
    and returns the red channel as an (H, W) image.

    ``clamp`` caps each sample's radiance; ``"auto"`` is 50x the brightest
    light intensity / emitter / background, ``None`` or 0 disables it.
    """
    if spp < 1:
        raise ValueError("spp must be >= 1")
    if spectrum not in ("visible", "ir"):
        raise ValueError(f"unknown spectrum {spectrum!r}")
    ir = spectrum == "ir"
    if include_projector is None:
        include_projector = ir
    geom = compile_geometry(scene)
    pack = TexturePack()
    mats = compile_materials(scene, pack)
    lights = compile_lights(scene, spectrum, include_projector, pattern_filter, pack)
    tex, toff, tw, th = pack.arrays()
    if ir:
        env = np.full(3, scene.rig.ir_ambient, float)
        emission_scale = scene.rig.visible_attenuation
        lights[:, L_INT + 1] = lights[:, L_INT]
        lights[:, L_INT + 2] = lights[:, L_INT]
    else:
        env = np.asarray(scene.environment, float)
        emission_scale = 1.0
    if clamp == "auto":
        clamp = 50.0 * _brightest(lights, mats, env, emission_scale)
    clamp = float(clamp or 0.0)
    out = np.zeros((cam.height, cam.width, 3))
    bmin, bmax, child, count, order = geom.bvh
    with _threads.thread_scope(threads):
        _render_kernel(
            bmin, bmax, child, count, order, geom.v0, geom.e1, geom.e2, geom.ng, geom.normals, geom.has_normals,
            geom.uvs, geom.has_uvs, geom.tri_object, mats, tex, toff, tw, th, lights, camera_array(cam),
            cam.width, cam.height, int(spp), int(max_bounces), np.uint64(seed % 2**64), int(tile),
            env, float(emission_scale), clamp, ir, out,
        )
    if ir:
        out = out[:, :, 0]
    if median_prefilter:
        size = 3 if out.ndim == 2 else (3, 3, 1)
        out = median_filter(out, size=size, mode="nearest")
    return RadianceImage(out)


def depth_buffer(scene, cam):
    """Renderer z-buffer: z-depth (m) of the primary ray through each pixel center; NaN on miss."""
    geom = compile_geometry(scene)
    bmin, bmax, child, count, order = geom.bvh
    out = np.empty((cam.height, cam.width))
    _depth_kernel(bmin, bmax, child, count, order, geom.v0, geom.e1, geom.e2, camera_array(cam), cam.width, cam.height, out)
    return out


def derive_seed(seed, index):
    return int(vm.stream_seed(np.uint64(seed % 2**64), np.uint64(index)))


def render_ir_pair(scene, spp=8, seed=0, **kwargs):
    """IR renders from both rig cameras with independent seeds derived from ``seed``."""
    from activesim.scene.types import validate_rig

    validate_rig(scene.rig)
    left = trace(scene, scene.rig.ir_left, spp, "ir", seed=derive_seed(seed, 1), **kwargs)
    right = trace(scene, scene.rig.ir_right, spp, "ir", seed=derive_seed(seed, 2), **kwargs)
    return left, right


def quantize_ir(img, exposure=1.0):
    """8-bit frame: clamp(round_half_up(img * exposure * 255), 0, 255)."""
    if not exposure > 0:
        raise ValueError("exposure must be > 0")
    data = np.asarray(img, dtype=np.float64)
    return np.clip(np.floor(data * exposure * 255.0 + 0.5), 0, 255).astype(np.uint8)


def auto_exposure(img, percentile=99.0, target=0.9):
    """Exposure mapping the given radiance percentile to ``target`` of full scale."""
    ref = float(np.percentile(np.asarray(img, dtype=np.float64), percentile))
    return target / ref if ref > 0 else 1.0

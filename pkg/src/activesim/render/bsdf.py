"""Material scattering: diffuse/specular mix with GGX microfacet lobes.

    f = w_d * f_diffuse + (1 - w_d) * f_specular,   w_d = (1 - metallic)(1 - transmission)

``f_diffuse`` is Lambertian. ``f_specular`` splits into a reflection lobe
(weight 1 - transmission) with Schlick Fresnel, and a rough dielectric lobe
(weight transmission) that reflects or refracts according to the exact
dielectric Fresnel term. Roughness maps to GGX alpha = roughness**2.

Directions follow the convention ``i`` = towards the light, ``o`` = towards
the viewer, ``n`` = the surface's outward normal; all unit length.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from activesim.render._math import dot, normalize, onb, rand, scale, stream_seed, to_world

ALPHA_MIN = 1e-3
INV_PI = 1.0 / math.pi


@dataclass(frozen=True)
class ShadingFrame:
    n: tuple
    i: tuple
    o: tuple

    def __post_init__(self):
        for name in ("n", "i", "o"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-6:
                raise ValueError(f"ShadingFrame.{name} must be a unit 3-vector")
            object.__setattr__(self, name, tuple(v.tolist()))


@njit(cache=True)
def ggx_alpha(roughness):
    return max(roughness * roughness, ALPHA_MIN)


@njit(cache=True)
def ggx_d(cos_h, alpha):
    """GGX normal distribution D(h) for cos(theta_h); zero below the surface."""
    if cos_h <= 0.0:
        return 0.0
    a2 = alpha * alpha
    c2 = cos_h * cos_h
    t = c2 * (a2 - 1.0) + 1.0
    return a2 / (math.pi * t * t)


@njit(cache=True)
def smith_g1(cos_v, alpha):
    c = abs(cos_v)
    a2 = alpha * alpha
    return 2.0 * c / (c + math.sqrt(a2 + (1.0 - a2) * c * c))


@njit(cache=True)
def fresnel_schlick(cos_theta, f0):
    m = min(max(1.0 - cos_theta, 0.0), 1.0)
    m5 = m * m * m * m * m
    return f0 + (1.0 - f0) * m5


@njit(cache=True)
def fresnel_dielectric(cos_i, eta):
    """Unpolarized Fresnel reflectance; ``eta`` = n_transmitted / n_incident."""
    cos_i = min(abs(cos_i), 1.0)
    sin2_t = (1.0 - cos_i * cos_i) / (eta * eta)
    if sin2_t >= 1.0:
        return 1.0
    cos_t = math.sqrt(1.0 - sin2_t)
    rs = (cos_i - eta * cos_t) / (cos_i + eta * cos_t)
    rp = (eta * cos_i - cos_t) / (eta * cos_i + cos_t)
    return 0.5 * (rs * rs + rp * rp)


@njit(cache=True)
def dielectric_f0(ior, specular):
    """Normal-incidence reflectance from ``ior``, scaled by ``specular / 0.5``."""
    r = (ior - 1.0) / (ior + 1.0)
    return min(r * r * 2.0 * specular, 1.0)


@njit(cache=True)
def sample_ggx_half(alpha, u1, u2):
    """Half-vector in the local frame (z = normal) with density D(h) cos(theta_h)."""
    tan2 = alpha * alpha * u1 / max(1.0 - u1, 1e-300)
    cos_t = 1.0 / math.sqrt(1.0 + tan2)
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    phi = 2.0 * math.pi * u2
    return (sin_t * math.cos(phi), sin_t * math.sin(phi), cos_t)


@njit(cache=True)
def _reflect(o, h):
    c = 2.0 * dot(o, h)
    return (c * h[0] - o[0], c * h[1] - o[1], c * h[2] - o[2])


@njit(cache=True)
def _refract(o, h, eta_ratio):
    """Refract the reversed view direction through microfacet ``h`` (o.h > 0).

    ``eta_ratio`` = eta_o / eta_i. Returns (ok, direction).
    """
    c = dot(o, h)
    k = 1.0 - eta_ratio * eta_ratio * (1.0 - c * c)
    if k < 0.0:
        return False, (0.0, 0.0, 0.0)
    f = eta_ratio * c - math.sqrt(k)
    return True, normalize((f * h[0] - eta_ratio * o[0], f * h[1] - eta_ratio * o[1], f * h[2] - eta_ratio * o[2]))


@njit(cache=True)
def bsdf_eval(color, metallic, specular, roughness, ior, transmission, n, i, o):
    """f(i, o, n) per RGB channel (no cosine factor)."""
    cos_o = dot(n, o)
    cos_i = dot(n, i)
    if transmission <= 0.0 and cos_o < 0.0:
        n = (-n[0], -n[1], -n[2])
        cos_o = -cos_o
        cos_i = -cos_i
    if cos_o == 0.0 or cos_i == 0.0:
        return (0.0, 0.0, 0.0)
    w_d = (1.0 - metallic) * (1.0 - transmission)
    w_r = (1.0 - w_d) * (1.0 - transmission)
    w_t = (1.0 - w_d) * transmission
    alpha = ggx_alpha(roughness)
    r0 = 0.0
    r1 = 0.0
    r2 = 0.0
    if cos_i * cos_o > 0.0:
        if w_d > 0.0:
            k = w_d * INV_PI
            r0 += k * color[0]
            r1 += k * color[1]
            r2 += k * color[2]
        h = normalize((i[0] + o[0], i[1] + o[1], i[2] + o[2]))
        if dot(h, n) < 0.0:
            h = (-h[0], -h[1], -h[2])
        cos_h = dot(n, h)
        oh = abs(dot(o, h))
        common = ggx_d(cos_h, alpha) * smith_g1(cos_i, alpha) * smith_g1(cos_o, alpha) / (4.0 * abs(cos_i) * abs(cos_o))
        if w_r > 0.0:
            f0d = dielectric_f0(ior, specular) * (1.0 - metallic)
            r0 += w_r * fresnel_schlick(oh, f0d + metallic * color[0]) * common
            r1 += w_r * fresnel_schlick(oh, f0d + metallic * color[1]) * common
            r2 += w_r * fresnel_schlick(oh, f0d + metallic * color[2]) * common
        if w_t > 0.0:
            eta = ior if cos_o > 0.0 else 1.0 / ior
            k = w_t * fresnel_dielectric(oh, eta) * common
            r0 += k
            r1 += k
            r2 += k
    elif w_t > 0.0:
        if cos_o > 0.0:
            eta_o, eta_i = 1.0, ior
        else:
            eta_o, eta_i = ior, 1.0
        h = (-(eta_o * o[0] + eta_i * i[0]), -(eta_o * o[1] + eta_i * i[1]), -(eta_o * o[2] + eta_i * i[2]))
        h = normalize(h)
        if dot(h, o) < 0.0:
            h = (-h[0], -h[1], -h[2])
        oh = dot(o, h)
        ih = dot(i, h)
        if oh <= 0.0 or ih >= 0.0:
            return (0.0, 0.0, 0.0)
        n_side = n if cos_o > 0.0 else (-n[0], -n[1], -n[2])
        cos_h = dot(n_side, h)
        denom = eta_o * oh + eta_i * ih
        if denom == 0.0:
            return (0.0, 0.0, 0.0)
        fr = fresnel_dielectric(oh, eta_i / eta_o)
        val = (
            w_t
            * (1.0 - fr)
            * ggx_d(cos_h, alpha)
            * smith_g1(cos_i, alpha)
            * smith_g1(cos_o, alpha)
            * abs(ih)
            * oh
            * eta_i
            * eta_i
            / (abs(cos_i) * abs(cos_o) * denom * denom)
        )
        r0 = val * color[0]
        r1 = val * color[1]
        r2 = val * color[2]
    return (r0, r1, r2)


@njit(cache=True)
def bsdf_sample(color, metallic, specular, roughness, ior, transmission, n, o, u0, u1, u2, u3):
    """Pick a lobe with probability equal to its mix weight and sample a direction.

    Returns (ok, i, throughput, pdf, lobe) where throughput = f * |n.i| / pdf for
    the chosen lobe (the lobe weight cancels with its selection probability)
    and lobe is 0 diffuse, 1 specular reflect, 2 dielectric reflect,
    3 dielectric transmit.
    """
    zero = (0.0, 0.0, 0.0)
    cos_o = dot(n, o)
    if transmission <= 0.0 and cos_o < 0.0:
        n = (-n[0], -n[1], -n[2])
        cos_o = -cos_o
    if cos_o == 0.0:
        return False, zero, zero, 0.0, -1
    n_side = n if cos_o > 0.0 else (-n[0], -n[1], -n[2])
    abs_co = abs(cos_o)
    w_d = (1.0 - metallic) * (1.0 - transmission)
    w_r = (1.0 - w_d) * (1.0 - transmission)
    w_t = (1.0 - w_d) * transmission
    alpha = ggx_alpha(roughness)
    if u0 < w_d:
        r = math.sqrt(u1)
        phi = 2.0 * math.pi * u2
        z = math.sqrt(max(0.0, 1.0 - u1))
        i = to_world((r * math.cos(phi), r * math.sin(phi), z), n_side)
        pdf = w_d * z * INV_PI
        if pdf <= 0.0:
            return False, zero, zero, 0.0, 0
        return True, i, (color[0], color[1], color[2]), pdf, 0
    h = to_world(sample_ggx_half(alpha, u1, u2), n_side)
    oh = dot(o, h)
    cos_h = dot(n_side, h)
    if oh <= 0.0 or cos_h <= 0.0:
        return False, zero, zero, 0.0, -1
    d = ggx_d(cos_h, alpha)
    if u0 < w_d + w_r:
        i = _reflect(o, h)
        ci = dot(n_side, i)
        if ci <= 0.0:
            return False, zero, zero, 0.0, 1
        g = smith_g1(ci, alpha) * smith_g1(abs_co, alpha) * oh / (abs_co * cos_h)
        f0d = dielectric_f0(ior, specular) * (1.0 - metallic)
        thr = (
            g * fresnel_schlick(oh, f0d + metallic * color[0]),
            g * fresnel_schlick(oh, f0d + metallic * color[1]),
            g * fresnel_schlick(oh, f0d + metallic * color[2]),
        )
        return True, i, thr, w_r * d * cos_h / (4.0 * oh), 1
    if cos_o > 0.0:
        eta_o, eta_i = 1.0, ior
    else:
        eta_o, eta_i = ior, 1.0
    fr = fresnel_dielectric(oh, eta_i / eta_o)
    if u3 < fr:
        i = _reflect(o, h)
        ci = dot(n_side, i)
        if ci <= 0.0:
            return False, zero, zero, 0.0, 2
        g = smith_g1(ci, alpha) * smith_g1(abs_co, alpha) * oh / (abs_co * cos_h)
        return True, i, (g, g, g), w_t * fr * d * cos_h / (4.0 * oh), 2
    ok, i = _refract(o, h, eta_o / eta_i)
    ci = dot(n_side, i)
    if not ok or ci >= 0.0:
        return False, zero, zero, 0.0, 3
    g = smith_g1(ci, alpha) * smith_g1(abs_co, alpha) * oh / (abs_co * cos_h)
    ih = dot(i, h)
    denom = eta_o * oh + eta_i * ih
    if abs(denom) <= 1e-12 * oh:
        # index-matched: every microfacet passes the ray straight through (delta lobe)
        return True, i, (g * color[0], g * color[1], g * color[2]), math.inf, 3
    pdf = w_t * (1.0 - fr) * d * cos_h * abs(ih) * eta_i * eta_i / (denom * denom)
    return True, i, (g * color[0], g * color[1], g * color[2]), pdf, 3


# ---------------------------------------------------------------------------
# Python-facing API


def _params(mat):
    return (
        tuple(float(c) for c in mat.base_color),
        float(mat.metallic),
        float(mat.specular),
        float(mat.roughness),
        float(mat.ior),
        float(mat.transmission),
    )


def eval_bsdf(mat, frame):
    """Evaluate the material's BSDF for a :class:`ShadingFrame`; returns an RGB array."""
    if not isinstance(frame, ShadingFrame):
        frame = ShadingFrame(*frame)
    return np.array(bsdf_eval(*_params(mat), frame.n, frame.i, frame.o))


class BsdfSampler:
    """Deterministic stream of BSDF samples for one material (test/debug helper)."""

    def __init__(self, seed=0):
        self.state = np.array([stream_seed(seed, 0)], dtype=np.uint64)

    def uniforms(self, k=4):
        return [rand(self.state) for _ in range(k)]


def sample_bsdf(mat, o, n, rng):
    """Sample an incoming direction for view direction ``o`` at normal ``n``.

    ``rng`` is a :class:`BsdfSampler` or an int seed. Returns
    ``(i, pdf, throughput)`` or ``None`` when the sampled path is absorbed
    (e.g. a microfacet reflection dipping below the surface).
    """
    if not isinstance(rng, BsdfSampler):
        rng = BsdfSampler(rng)
    o = tuple(float(x) for x in np.asarray(o, float) / np.linalg.norm(o))
    n = tuple(float(x) for x in np.asarray(n, float) / np.linalg.norm(n))
    ok, i, thr, pdf, _ = bsdf_sample(*_params(mat), n, o, *rng.uniforms(4))
    if not ok:
        return None
    return np.array(i), pdf, np.array(thr)


def diffuse_weight(metallic, transmission):
    return (1.0 - metallic) * (1.0 - transmission)


__all__ = [
    "ShadingFrame", "eval_bsdf", "sample_bsdf", "BsdfSampler", "diffuse_weight",
    "ggx_d", "smith_g1", "fresnel_schlick", "fresnel_dielectric", "dielectric_f0", "sample_ggx_half",
    "bsdf_eval", "bsdf_sample", "scale", "onb",
]

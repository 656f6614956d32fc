"""Flatten a Scene into the arrays consumed by the render kernels."""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from activesim.render.bvh import build_bvh
from activesim.render.lights import FILTER_NEAREST, TexturePack, pack_light

# material row layout
M_COLOR = 0
M_METALLIC = 3
M_SPECULAR = 4
M_ROUGHNESS = 5
M_IOR = 6
M_TRANSMISSION = 7
M_EMISSION = 8
M_TEXTURE = 11
M_SIZE = 12


@dataclass
class Geometry:
    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    ng: np.ndarray       # unit geometric normal per triangle
    normals: np.ndarray  # (T, 9) corner shading normals
    has_normals: np.ndarray
    uvs: np.ndarray      # (T, 6)
    has_uvs: np.ndarray
    tri_object: np.ndarray
    bvh: tuple
    object_names: tuple

    @property
    def triangle_count(self):
        return len(self.v0)


_GEOMETRY_CACHE = OrderedDict()
_CACHE_SIZE = 8


def compile_geometry(scene):
    """World-space triangles + BVH; cached on the (mesh identity, object placement) key."""
    key = tuple((obj.name, obj.mesh, obj.pose, obj.scale, id(scene.meshes[obj.mesh])) for obj in scene.objects)
    hit = _GEOMETRY_CACHE.get(key)
    if hit is not None:
        _GEOMETRY_CACHE.move_to_end(key)
        return hit[1]
    v0s, v1s, v2s, norms, has_n, uvs, has_uv, owner = [], [], [], [], [], [], [], []
    for k, obj in enumerate(scene.objects):
        mesh = scene.meshes[obj.mesh]
        m = obj.pose.matrix
        rot, trans = m[:3, :3], m[:3, 3]
        verts = (mesh.vertices * obj.scale) @ rot.T + trans
        tri = verts[mesh.faces]
        v0s.append(tri[:, 0])
        v1s.append(tri[:, 1])
        v2s.append(tri[:, 2])
        count = len(mesh.faces)
        if mesh.normals is not None:
            n = mesh.normals @ rot.T
            n /= np.linalg.norm(n, axis=1, keepdims=True)
            norms.append(n[mesh.faces].reshape(count, 9))
            has_n.append(np.ones(count, np.bool_))
        else:
            norms.append(np.zeros((count, 9)))
            has_n.append(np.zeros(count, np.bool_))
        if mesh.uvs is not None:
            uvs.append(mesh.uvs[mesh.faces].reshape(count, 6))
            has_uv.append(np.ones(count, np.bool_))
        else:
            uvs.append(np.zeros((count, 6)))
            has_uv.append(np.zeros(count, np.bool_))
        owner.append(np.full(count, k, np.int64))
    if v0s:
        v0, v1, v2 = np.concatenate(v0s), np.concatenate(v1s), np.concatenate(v2s)
        normals, has_normals = np.concatenate(norms), np.concatenate(has_n)
        uv, has_uvs, tri_object = np.concatenate(uvs), np.concatenate(has_uv), np.concatenate(owner)
    else:
        v0 = v1 = v2 = np.zeros((0, 3))
        normals, has_normals = np.zeros((0, 9)), np.zeros(0, np.bool_)
        uv, has_uvs, tri_object = np.zeros((0, 6)), np.zeros(0, np.bool_), np.zeros(0, np.int64)
    e1, e2 = v1 - v0, v2 - v0
    ng = np.cross(e1, e2)
    if len(ng):
        ng /= np.linalg.norm(ng, axis=1, keepdims=True)
    geom = Geometry(
        np.ascontiguousarray(v0), np.ascontiguousarray(e1), np.ascontiguousarray(e2), np.ascontiguousarray(ng),
        np.ascontiguousarray(normals), has_normals, np.ascontiguousarray(uv), has_uvs, tri_object,
        build_bvh(v0, v1, v2), tuple(obj.name for obj in scene.objects),
    )
    # keep the meshes alive so their ids stay unique while cached
    _GEOMETRY_CACHE[key] = (scene.meshes, geom)
    if len(_GEOMETRY_CACHE) > _CACHE_SIZE:
        _GEOMETRY_CACHE.popitem(last=False)
    return geom


def compile_materials(scene, pack):
    """Per-object material rows (object index = row index)."""
    rows = np.zeros((max(len(scene.objects), 1), M_SIZE))
    tex_ids = {}
    for k, obj in enumerate(scene.objects):
        mat = scene.materials[obj.material]
        row = rows[k]
        row[M_COLOR:M_COLOR + 3] = mat.base_color
        row[M_METALLIC] = mat.metallic
        row[M_SPECULAR] = mat.specular
        row[M_ROUGHNESS] = mat.roughness
        row[M_IOR] = mat.ior
        row[M_TRANSMISSION] = mat.transmission
        row[M_EMISSION:M_EMISSION + 3] = mat.emission
        row[M_TEXTURE] = -1
        if mat.base_color_texture is not None:
            tex = mat.base_color_texture
            if id(tex) not in tex_ids:
                tex_ids[id(tex)] = pack.add(tex.data)
            row[M_TEXTURE] = tex_ids[id(tex)]
    return rows


def compile_lights(scene, spectrum, include_projector, pattern_filter=FILTER_NEAREST, pack=None):
    """Light rows for ``spectrum``: IR mode attenuates scene lights by the rig's factor."""
    atten = scene.rig.visible_attenuation if spectrum == "ir" else 1.0
    rows = [pack_light(light, pack, atten) for light in scene.lights]
    if include_projector:
        rows.append(pack_light(scene.rig.projector, pack, 1.0, is_projector=True, pattern_filter=pattern_filter))
    if not rows:
        return np.zeros((0, 23))
    return np.array(rows)

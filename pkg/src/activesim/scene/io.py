"""Scene files (TOML) and OBJ meshes.

Scene file layout, all lengths in meters, angles in radians, colors linear::

    environment = [0.0, 0.0, 0.0]          # optional background radiance

    [meshes.wall]
    path = "wall.obj"                      # relative to the scene file
    [meshes.ball]
    primitive = "icosphere"                # or a built-in primitive
    radius = 0.1

    [materials.white]
    base_color = [0.8, 0.8, 0.8]
    roughness = 0.5                        # metallic, specular, ior, transmission, emission
    base_color_texture = "albedo.ppm"      # optional

    [[objects]]
    name = "wall"
    mesh = "wall"
    material = "white"
    position = [0.0, 0.0, 1.0]
    rotation = [0.0, 0.0, 0.0]
    scale = 1.0
    unknown = false                        # true: material to be fitted

    [[lights]]
    kind = "point"                         # directional, spot, area, textured_spot
    position = [0.0, -1.0, 0.5]
    intensity = [1.0, 1.0, 1.0]

    [rig]                                  # left IR camera pose + shared IR intrinsics
    width = 424
    height = 240
    fx = 430.0
    baseline = 0.055
    [rig.projector]
    fov = 0.6
    pattern = "dots.pgm"                   # or pattern_density / pattern_seed
    [rig.rgb]
    offset = [-0.015, 0.0, 0.0]

Other top-level tables (``noise``, ``stereo``, ``run``, ``batch``) belong to
the run configuration and are ignored here.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
import tomli_w

from activesim.imageio import read_pnm, to_unit_float, write_pgm, write_ppm
from activesim.scene.pattern import generate_dot_pattern
from activesim.scene.primitives import make_primitive
from activesim.scene.types import (
    CameraModel,
    InvariantError,
    LightSource,
    Mesh,
    MissingAssetError,
    PbrMaterial,
    Pose,
    Scene,
    SceneError,
    SceneObject,
    SceneParseError,
    SensorRig,
)

SCENE_SECTIONS = {"meshes", "objects", "materials", "lights", "rig", "environment"}
CONFIG_SECTIONS = {"noise", "stereo", "run", "batch", "fit"}

MATERIAL_KEYS = {"base_color", "metallic", "specular", "roughness", "ior", "transmission", "emission", "base_color_texture"}
OBJECT_KEYS = {"name", "mesh", "material", "position", "rotation", "scale", "unknown"}
LIGHT_KEYS = {"kind", "position", "rotation", "intensity", "pattern", "fov", "size", "look_at"}
RIG_KEYS = {
    "width", "height", "fx", "fy", "cx", "cy", "baseline", "position", "rotation", "look_at", "up",
    "ir_ambient", "visible_attenuation", "projector", "rgb",
}
PROJECTOR_KEYS = {
    "fov", "intensity", "pattern", "pattern_density", "pattern_seed", "pattern_width", "pattern_height",
    "pattern_dot_size", "offset", "rotation", "position",
}
RGB_KEYS = {"width", "height", "fx", "fy", "cx", "cy", "offset", "rotation", "position"}


# ---------------------------------------------------------------------------
# OBJ


def read_obj(path):
    """ASCII OBJ subset: ``v``, ``vn``, ``vt`` and triangular ``f`` records.

    Corners referencing different v/vt/vn combinations are split into
    distinct vertices so that all attributes share one index.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingAssetError(path, "mesh file")
    positions, normals, uvs = [], [], []
    corner_index = {}
    out_v, out_n, out_t, faces, raw_faces = [], [], [], [], []
    has_n = has_t = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag, args = parts[0], parts[1:]
        try:
            if tag == "v":
                positions.append([float(a) for a in args[:3]])
            elif tag == "vn":
                normals.append([float(a) for a in args[:3]])
            elif tag == "vt":
                uvs.append([float(a) for a in args[:2]])
            elif tag == "f":
                if len(args) != 3:
                    raise SceneParseError(f"{path}:{lineno}: only triangular faces are supported")
                face, raw = [], []
                for corner in args:
                    fields = corner.split("/")
                    vi = _obj_index(fields[0], len(positions))
                    ti = _obj_index(fields[1], len(uvs)) if len(fields) > 1 and fields[1] else None
                    ni = _obj_index(fields[2], len(normals)) if len(fields) > 2 and fields[2] else None
                    if has_n is None:
                        has_n, has_t = ni is not None, ti is not None
                    elif has_n != (ni is not None) or has_t != (ti is not None):
                        raise SceneParseError(f"{path}:{lineno}: inconsistent face attribute layout")
                    key = (vi, ti, ni)
                    if key not in corner_index:
                        corner_index[key] = len(out_v)
                        out_v.append(positions[vi])
                        if ni is not None:
                            out_n.append(normals[ni])
                        if ti is not None:
                            out_t.append(uvs[ti])
                    face.append(corner_index[key])
                    raw.append(key)
                faces.append(face)
                raw_faces.append(raw)
        except (ValueError, IndexError) as exc:
            raise SceneParseError(f"{path}:{lineno}: {exc}") from None
    if not faces:
        raise SceneParseError(f"{path}: no faces")
    if _shared_indices(raw_faces, len(positions), len(normals) if has_n else None, len(uvs) if has_t else None):
        # attributes already share the position index: keep the file's vertex order
        return Mesh(
            np.array(positions, float),
            np.array([[k[0] for k in face] for face in raw_faces], np.int64),
            np.array(normals, float) if has_n else None,
            np.array(uvs, float) if has_t else None,
        )
    return Mesh(
        np.array(out_v, float),
        np.array(faces, np.int64),
        np.array(out_n, float) if has_n else None,
        np.array(out_t, float) if has_t else None,
    )


def _shared_indices(raw_faces, n_pos, n_norm, n_uv):
    if n_norm not in (None, n_pos) or n_uv not in (None, n_pos):
        return False
    return all(t in (None, v) and n in (None, v) for face in raw_faces for v, t, n in face)


def _obj_index(token, count):
    i = int(token)
    i = i - 1 if i > 0 else count + i
    if not 0 <= i < count:
        raise IndexError(f"index {token} out of range")
    return i


def write_obj(path, mesh):
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    if mesh.uvs is not None:
        lines += [f"vt {u!r} {v!r}" for u, v in mesh.uvs.tolist()]
    if mesh.normals is not None:
        lines += [f"vn {x!r} {y!r} {z!r}" for x, y, z in mesh.normals.tolist()]
    for face in (mesh.faces + 1).tolist():
        if mesh.normals is not None and mesh.uvs is not None:
            corners = [f"{i}/{i}/{i}" for i in face]
        elif mesh.normals is not None:
            corners = [f"{i}//{i}" for i in face]
        elif mesh.uvs is not None:
            corners = [f"{i}/{i}" for i in face]
        else:
            corners = [str(i) for i in face]
        lines.append("f " + " ".join(corners))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# textures


def read_texture(path, grayscale=False):
    from activesim.scene.types import Texture

    path = Path(path)
    if not path.is_file():
        raise MissingAssetError(path, "texture")
    data = to_unit_float(read_pnm(path))
    if grayscale and data.ndim == 3:
        data = data.mean(axis=2)
    return Texture(data, source=str(path))


def write_texture(path, texture):
    data = np.clip(np.rint(texture.data * 255.0), 0, 255).astype(np.uint8)
    if data.ndim == 2:
        write_pgm(path, data)
    else:
        write_ppm(path, data)


# ---------------------------------------------------------------------------
# scene loading


def read_toml(path):
    path = Path(path)
    if not path.is_file():
        raise MissingAssetError(path, "scene file")
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise SceneParseError(f"{path}: {exc}") from None


def load_scene(path):
    """Parse, resolve assets and validate a scene file."""
    path = Path(path)
    doc = read_toml(path)
    return scene_from_dict(doc, base_dir=path.parent)


def scene_from_dict(doc, base_dir="."):
    base_dir = Path(base_dir)
    unknown = set(doc) - SCENE_SECTIONS - CONFIG_SECTIONS
    if unknown:
        raise SceneParseError(f"unknown top-level section(s): {sorted(unknown)}")
    meshes = {name: _load_mesh(f"meshes.{name}", spec, base_dir) for name, spec in _table(doc, "meshes").items()}
    materials = {
        name: _build(f"materials.{name}", spec, MATERIAL_KEYS, lambda s: _material(s, base_dir))
        for name, spec in _table(doc, "materials").items()
    }
    objects = [
        _build(f"objects[{i}]", spec, OBJECT_KEYS, _object) for i, spec in enumerate(_array(doc, "objects"))
    ]
    lights = [
        _build(f"lights[{i}]", spec, LIGHT_KEYS, lambda s: _light(s, base_dir))
        for i, spec in enumerate(_array(doc, "lights"))
    ]
    rig = _build("rig", doc.get("rig", {}), RIG_KEYS, lambda s: _rig(s, base_dir))
    environment = doc.get("environment", (0.0, 0.0, 0.0))
    if np.isscalar(environment):
        environment = (environment,) * 3
    return Scene(meshes, materials, objects, lights, rig, tuple(environment))


def _table(doc, key):
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise SceneParseError(f"`{key}` must be a table")
    return value


def _array(doc, key):
    value = doc.get(key, [])
    if not isinstance(value, list):
        raise SceneParseError(f"`{key}` must be an array of tables")
    return value


def _build(where, spec, allowed, factory):
    if not isinstance(spec, dict):
        raise SceneParseError(f"`{where}` must be a table")
    extra = set(spec) - allowed
    if extra:
        raise SceneParseError(f"`{where}`: unknown field(s) {sorted(extra)}")
    try:
        return factory(spec)
    except InvariantError as exc:
        raise InvariantError(f"{where}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    except MissingAssetError:
        raise
    except SceneError as exc:
        raise type(exc)(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise SceneParseError(f"`{where}`: {exc}") from None


def _load_mesh(where, spec, base_dir):
    if not isinstance(spec, dict):
        raise SceneParseError(f"`{where}` must be a table")
    if "path" in spec:
        return read_obj(base_dir / spec["path"])
    if "primitive" in spec:
        params = {k: v for k, v in spec.items() if k != "primitive"}
        try:
            return make_primitive(spec["primitive"], **params)
        except InvariantError as exc:
            raise InvariantError(f"{where}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    raise SceneParseError(f"`{where}`: needs `path` or `primitive`")


def _pose(spec, pos_key="position"):
    if "look_at" in spec:
        up = spec.get("up", (0.0, -1.0, 0.0))
        return Pose.look_at(spec.get(pos_key, (0.0, 0.0, 0.0)), spec["look_at"], up)
    return Pose(spec.get(pos_key, (0.0, 0.0, 0.0)), spec.get("rotation", (0.0, 0.0, 0.0)))


def _material(spec, base_dir):
    params = dict(spec)
    if "base_color_texture" in params:
        params["base_color_texture"] = read_texture(base_dir / params["base_color_texture"])
    for key in ("base_color", "emission"):
        if key in params and np.isscalar(params[key]):
            params[key] = (params[key],) * 3
    return PbrMaterial(**params)


def _object(spec):
    for key in ("name", "mesh", "material"):
        if key not in spec:
            raise SceneParseError(f"missing `{key}`")
    return SceneObject(
        spec["name"],
        spec["mesh"],
        spec["material"],
        _pose(spec),
        float(spec.get("scale", 1.0)),
        bool(spec.get("unknown", False)),
    )


def _light(spec, base_dir):
    if "kind" not in spec:
        raise SceneParseError("missing `kind`")
    pattern = spec.get("pattern")
    if pattern is not None:
        pattern = read_texture(base_dir / pattern, grayscale=True)
    kwargs = {"kind": spec["kind"], "pose": _pose(spec), "pattern": pattern}
    for key in ("intensity", "fov", "size"):
        if key in spec:
            kwargs[key] = spec[key]
    return LightSource(**kwargs)


def _rig(spec, base_dir):
    width = int(spec.get("width", 424))
    height = int(spec.get("height", 240))
    proj_spec = dict(spec.get("projector", {}))
    extra = set(proj_spec) - PROJECTOR_KEYS
    if extra:
        raise SceneParseError(f"`rig.projector`: unknown field(s) {sorted(extra)}")
    if "pattern" in proj_spec:
        pattern = read_texture(base_dir / proj_spec["pattern"], grayscale=True)
    elif any(k.startswith("pattern_") for k in proj_spec):
        from activesim.scene.types import Texture

        pattern = Texture(
            generate_dot_pattern(
                int(proj_spec.get("pattern_width", 640)),
                int(proj_spec.get("pattern_height", 480)),
                float(proj_spec.get("pattern_density", 0.3)),
                int(proj_spec.get("pattern_seed", 20210901)),
                int(proj_spec.get("pattern_dot_size", 1)),
            ),
            source="generated",
        )
    else:
        from activesim.scene.pattern import default_pattern

        pattern = default_pattern()
    projector = LightSource(
        "textured_spot",
        pose=Pose((0.0, 0.0, 0.0), proj_spec.get("rotation", (0.0, 0.0, 0.0))),
        intensity=proj_spec.get("intensity", 1.0),
        pattern=pattern,
        fov=proj_spec.get("fov", 0.6),
    )
    baseline = float(spec.get("baseline", 0.055))
    left_pose = _pose(spec)
    rgb_spec = dict(spec.get("rgb", {}))
    extra = set(rgb_spec) - RGB_KEYS
    if extra:
        raise SceneParseError(f"`rig.rgb`: unknown field(s) {sorted(extra)}")
    fx = float(spec.get("fx", 430.0))
    rig = SensorRig.build(
        width=width,
        height=height,
        fx=fx,
        fy=spec.get("fy"),
        cx=spec.get("cx"),
        cy=spec.get("cy"),
        baseline=baseline,
        pose=left_pose,
        projector=projector,
        projector_offset=proj_spec.get("offset"),
        rgb_offset=rgb_spec.get("offset", (-0.015, 0.0, 0.0)),
        ir_ambient=spec.get("ir_ambient", 0.02),
        visible_attenuation=spec.get("visible_attenuation", 0.05),
    )
    from dataclasses import replace

    if "position" in proj_spec:
        rig = replace(rig, projector=replace(rig.projector, pose=_pose(proj_spec)))
    rgb_w = int(rgb_spec.get("width", width))
    rgb_h = int(rgb_spec.get("height", height))
    rgb_intr = {
        "fx": float(rgb_spec.get("fx", rig.ir_left.fx)),
        "fy": float(rgb_spec.get("fy", rgb_spec.get("fx", rig.ir_left.fy))),
        "cx": float(rgb_spec.get("cx", (rgb_w - 1) / 2.0 if "width" in rgb_spec else rig.ir_left.cx)),
        "cy": float(rgb_spec.get("cy", (rgb_h - 1) / 2.0 if "height" in rgb_spec else rig.ir_left.cy)),
    }
    if "position" in rgb_spec:
        rgb_pose = _pose(rgb_spec)
    else:
        rgb_pose = _local_pose(left_pose, rgb_spec.get("offset", (-0.015, 0.0, 0.0)), rgb_spec.get("rotation"))
    rgb = CameraModel(rgb_w, rgb_h, pose=rgb_pose, **rgb_intr)
    return replace(rig, rgb=rgb)


def _local_pose(parent, offset, rotation):
    local = Pose(offset, rotation if rotation is not None else (0.0, 0.0, 0.0))
    if rotation is None:
        return parent.translated_local(offset)
    return Pose.from_matrix(parent.matrix @ local.matrix)


# ---------------------------------------------------------------------------
# saving


def _floats(seq):
    return [float(v) for v in seq]


def scene_to_dict(scene, out_dir, stem="scene"):
    """Serialize ``scene`` to a TOML-ready dict, writing meshes/textures into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"environment": _floats(scene.environment), "meshes": {}, "materials": {}, "objects": [], "lights": []}
    for name, mesh in scene.meshes.items():
        fname = f"{stem}_mesh_{name}.obj"
        write_obj(out_dir / fname, mesh)
        doc["meshes"][name] = {"path": fname}
    for name, mat in scene.materials.items():
        entry = {
            "base_color": _floats(mat.base_color),
            "metallic": mat.metallic,
            "specular": mat.specular,
            "roughness": mat.roughness,
            "ior": mat.ior,
            "transmission": mat.transmission,
            "emission": _floats(mat.emission),
        }
        if mat.base_color_texture is not None:
            fname = f"{stem}_tex_{name}" + (".pgm" if mat.base_color_texture.data.ndim == 2 else ".ppm")
            write_texture(out_dir / fname, mat.base_color_texture)
            entry["base_color_texture"] = fname
        doc["materials"][name] = entry
    for obj in scene.objects:
        doc["objects"].append(
            {
                "name": obj.name,
                "mesh": obj.mesh,
                "material": obj.material,
                "position": _floats(obj.pose.position),
                "rotation": _floats(obj.pose.rotation),
                "scale": float(obj.scale),
                "unknown": bool(obj.unknown),
            }
        )
    for i, light in enumerate(scene.lights):
        entry = {
            "kind": light.kind,
            "position": _floats(light.pose.position),
            "rotation": _floats(light.pose.rotation),
            "intensity": _floats(light.intensity),
            "fov": light.fov,
            "size": _floats(light.size),
        }
        if light.pattern is not None:
            fname = f"{stem}_light{i}_pattern.pgm"
            write_texture(out_dir / fname, light.pattern)
            entry["pattern"] = fname
        doc["lights"].append(entry)
    rig = scene.rig
    left = rig.ir_left
    pattern_name = f"{stem}_projector_pattern.pgm"
    write_texture(out_dir / pattern_name, rig.projector.pattern)
    doc["rig"] = {
        "width": left.width,
        "height": left.height,
        "fx": left.fx,
        "fy": left.fy,
        "cx": left.cx,
        "cy": left.cy,
        "baseline": rig.baseline,
        "position": _floats(left.pose.position),
        "rotation": _floats(left.pose.rotation),
        "ir_ambient": rig.ir_ambient,
        "visible_attenuation": rig.visible_attenuation,
        "projector": {
            "fov": rig.projector.fov,
            "intensity": _floats(rig.projector.intensity),
            "pattern": pattern_name,
            "position": _floats(rig.projector.pose.position),
            "rotation": _floats(rig.projector.pose.rotation),
        },
        "rgb": {
            "width": rig.rgb.width,
            "height": rig.rgb.height,
            "fx": rig.rgb.fx,
            "fy": rig.rgb.fy,
            "cx": rig.rgb.cx,
            "cy": rig.rgb.cy,
            "position": _floats(rig.rgb.pose.position),
            "rotation": _floats(rig.rgb.pose.rotation),
        },
    }
    return doc


def save_scene(scene, path):
    """Write ``scene`` as TOML plus sibling OBJ/PGM/PPM assets."""
    path = Path(path)
    doc = scene_to_dict(scene, path.parent, stem=path.stem)
    with open(path, "wb") as f:
        tomli_w.dump(doc, f)
    return path

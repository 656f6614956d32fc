"""World description: materials, lights, cameras, the sensor rig, meshes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np
from scipy.spatial.transform import Rotation


class SceneError(ValueError):
    """Base class for scene loading/validation failures."""


class SceneParseError(SceneError):
    pass


class MissingAssetError(SceneError):
    def __init__(self, path, what="asset"):
        super().__init__(f"missing {what}: {path}")
        self.path = str(path)


class InvariantError(SceneError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class RigError(SceneError):
    pass


LIGHT_KINDS = ("point", "directional", "spot", "area", "textured_spot")


def _check_unit(name, value):
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise InvariantError(name, f"must lie in [0, 1], got {value}")


def _as_vec3(name, value):
    try:
        vec = tuple(float(v) for v in value)
    except TypeError:
        raise InvariantError(name, f"expected 3 numbers, got {value!r}") from None
    if len(vec) != 3:
        raise InvariantError(name, f"expected 3 numbers, got {len(vec)}")
    return vec


@dataclass(frozen=True, eq=False)
class Texture:
    """Grayscale (H, W) or color (H, W, 3) float image in [0, 1].

    Row 0 is the top of the image; texture coordinate v = 0 addresses the
    bottom row, matching OBJ conventions.
    """

    data: np.ndarray
    source: Optional[str] = None

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim not in (2, 3) or (data.ndim == 3 and data.shape[2] != 3):
            raise InvariantError("texture", f"bad texture shape {data.shape}")
        if data.size and (np.nanmin(data) < 0.0 or np.nanmax(data) > 1.0 or np.isnan(data).any()):
            raise InvariantError("texture", "values must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    def __eq__(self, other):
        return isinstance(other, Texture) and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True)
class Pose:
    """Rigid transform: Euler XYZ rotation (radians, extrinsic) then translation (m)."""

    position: tuple = (0.0, 0.0, 0.0)
    rotation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3("position", self.position))
        object.__setattr__(self, "rotation", _as_vec3("rotation", self.rotation))

    @property
    def rotation_matrix(self):
        return Rotation.from_euler("xyz", self.rotation).as_matrix()

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix
        m[:3, 3] = self.position
        return m

    def translated_local(self, offset):
        """Pose moved by ``offset`` expressed in this pose's own axes."""
        pos = np.asarray(self.position) + self.rotation_matrix @ np.asarray(offset, dtype=float)
        return Pose(tuple(pos.tolist()), self.rotation)

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        rot = Rotation.from_matrix(m[:3, :3]).as_euler("xyz")
        return cls(tuple(m[:3, 3].tolist()), tuple(rot.tolist()))

    @classmethod
    def look_at(cls, eye, target, up=(0.0, -1.0, 0.0)):
        """Camera-style pose whose +z axis points from ``eye`` to ``target``.

        ``up`` is the world direction that should map to image-up, i.e. the
        camera's -y axis.
        """
        eye = np.asarray(eye, float)
        z = np.asarray(target, float) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, -np.asarray(up, float))
        if np.linalg.norm(x) < 1e-9:
            raise InvariantError("look_at", "up vector parallel to viewing direction")
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        m = np.eye(4)
        m[:3, 0], m[:3, 1], m[:3, 2], m[:3, 3] = x, y, z, eye
        return cls.from_matrix(m)


@dataclass(frozen=True)
class PbrMaterial:
    base_color: tuple = (0.8, 0.8, 0.8)
    metallic: float = 0.0
    specular: float = 0.5
    roughness: float = 0.5
    ior: float = 1.5
    transmission: float = 0.0
    emission: tuple = (0.0, 0.0, 0.0)
    base_color_texture: Optional[Texture] = None

    def __post_init__(self):
        color = _as_vec3("base_color", self.base_color)
        for c in color:
            _check_unit("base_color", c)
        emission = _as_vec3("emission", self.emission)
        if min(emission) < 0.0:
            raise InvariantError("emission", "radiance must be >= 0")
        object.__setattr__(self, "base_color", color)
        object.__setattr__(self, "emission", emission)
        for name in ("metallic", "specular", "roughness", "transmission"):
            value = float(getattr(self, name))
            _check_unit(name, value)
            object.__setattr__(self, name, value)
        if not float(self.ior) >= 1.0:
            raise InvariantError("ior", f"must be >= 1, got {self.ior}")
        object.__setattr__(self, "ior", float(self.ior))

    @property
    def diffuse_weight(self):
        return (1.0 - self.metallic) * (1.0 - self.transmission)

    def with_params(self, **params):
        return replace(self, **params)


@dataclass(frozen=True)
class LightSource:
    """Light emitting along its pose's +z axis (spot/area/directional).

    ``intensity`` is radiant intensity (W/sr) for point and spot kinds,
    irradiance for directional, and emitted radiance for area lights.
    ``fov`` is the cone half-angle of spot kinds. ``size`` is the (x, y)
    extent of area lights in meters.
    """

    kind: str
    pose: Pose = field(default_factory=Pose)
    intensity: tuple = (1.0, 1.0, 1.0)
    pattern: Optional[Texture] = None
    fov: float = 0.5
    size: tuple = (0.1, 0.1)

    def __post_init__(self):
        if self.kind not in LIGHT_KINDS:
            raise InvariantError("kind", f"unknown light kind {self.kind!r}; expected one of {LIGHT_KINDS}")
        intensity = self.intensity
        if np.isscalar(intensity):
            intensity = (intensity,) * 3
        intensity = _as_vec3("intensity", intensity)
        if min(intensity) < 0.0:
            raise InvariantError("intensity", "must be component-wise >= 0")
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "fov", float(self.fov))
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        if self.kind == "textured_spot":
            if self.pattern is None:
                raise InvariantError("pattern", "textured_spot requires a pattern")
            if self.pattern.data.ndim != 2:
                raise InvariantError("pattern", "projector pattern must be grayscale")
        if self.kind in ("spot", "textured_spot") and not 0.0 < self.fov < math.pi / 2:
            raise InvariantError("fov", f"spot half-angle must lie in (0, pi/2), got {self.fov}")
        if self.kind == "area" and min(self.size) <= 0.0:
            raise InvariantError("size", "area light extent must be positive")

    def scaled(self, factor):
        return replace(self, intensity=tuple(factor * c for c in self.intensity))


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera, OpenCV axes (+z forward, +x right, +y down).

    Pixel centers sit at integer coordinates, so a centered principal point
    is ``((width - 1) / 2, (height - 1) / 2)``.
    """

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    pose: Pose = field(default_factory=Pose)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvariantError("width/height", "image size must be positive")
        if not (self.fx > 0 and self.fy > 0):
            raise InvariantError("fx/fy", "focal lengths must be positive")
        if not (0 <= self.cx < self.width):
            raise InvariantError("cx", f"principal point outside image: {self.cx}")
        if not (0 <= self.cy < self.height):
            raise InvariantError("cy", f"principal point outside image: {self.cy}")
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def intrinsics(self):
        return (self.fx, self.fy, self.cx, self.cy)

    @property
    def K(self):
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def with_pose(self, pose):
        return replace(self, pose=pose)


@dataclass(frozen=True)
class SensorRig:
    ir_left: CameraModel
    ir_right: CameraModel
    rgb: CameraModel
    projector: LightSource
    baseline: float
    ir_ambient: float = 0.02
    visible_attenuation: float = 0.05

    @classmethod
    def build(
        cls,
        width=424,
        height=240,
        fx=430.0,
        fy=None,
        cx=None,
        cy=None,
        baseline=0.055,
        pose=None,
        projector=None,
        projector_offset=None,
        rgb=None,
        rgb_offset=(-0.015, 0.0, 0.0),
        ir_ambient=0.02,
        visible_attenuation=0.05,
    ):
        """Rectified rig from one set of IR intrinsics and the left camera pose.

        The right camera sits ``baseline`` meters along the left camera's +x
        axis. The projector defaults to the rig midpoint.
        """
        fy = fx if fy is None else fy
        cx = (width - 1) / 2.0 if cx is None else cx
        cy = (height - 1) / 2.0 if cy is None else cy
        pose = pose or Pose()
        left = CameraModel(width, height, fx, fy, cx, cy, pose)
        right = left.with_pose(pose.translated_local((baseline, 0.0, 0.0)))
        if rgb is None:
            rgb = left.with_pose(pose.translated_local(rgb_offset))
        if projector is None:
            from activesim.scene.pattern import default_pattern

            projector = LightSource("textured_spot", pattern=default_pattern(), fov=0.6, intensity=(1.0, 1.0, 1.0))
        offset = (baseline / 2.0, 0.0, 0.0) if projector_offset is None else projector_offset
        projector = replace(projector, pose=_compose(pose, projector.pose, offset))
        return cls(left, right, rgb, projector, float(baseline), float(ir_ambient), float(visible_attenuation))

    def moved_to(self, pose):
        """Same rig with the left IR camera at ``pose``; relative geometry kept."""
        delta = pose.matrix @ np.linalg.inv(self.ir_left.pose.matrix)

        def move(p):
            return Pose.from_matrix(delta @ p.matrix)

        return replace(
            self,
            ir_left=self.ir_left.with_pose(move(self.ir_left.pose)),
            ir_right=self.ir_right.with_pose(move(self.ir_right.pose)),
            rgb=self.rgb.with_pose(move(self.rgb.pose)),
            projector=replace(self.projector, pose=move(self.projector.pose)),
        )


def _compose(rig_pose, local_pose, offset):
    """Place a device given in rig-local coordinates into the world."""
    local = local_pose.matrix
    local[:3, 3] = np.asarray(local_pose.position) + np.asarray(offset, float)
    return Pose.from_matrix(rig_pose.matrix @ local)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Indexed triangle mesh; normals/uvs share the vertex index."""

    vertices: np.ndarray
    faces: np.ndarray
    normals: Optional[np.ndarray] = None
    uvs: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise InvariantError("faces", "mesh index out of range")
        tri = v[f]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        if f.size and (np.linalg.norm(cross, axis=1) <= 0).any():
            raise InvariantError("faces", "degenerate triangle (normal not normalizable)")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.normals is not None:
            n = np.ascontiguousarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(v):
                raise InvariantError("normals", "one normal per vertex required")
            if (np.linalg.norm(n, axis=1) <= 0).any():
                raise InvariantError("normals", "zero-length vertex normal")
            object.__setattr__(self, "normals", n)
        if self.uvs is not None:
            uv = np.ascontiguousarray(self.uvs, dtype=np.float64).reshape(-1, 2)
            if len(uv) != len(v):
                raise InvariantError("uvs", "one uv per vertex required")
            object.__setattr__(self, "uvs", uv)
        for arr in (self.vertices, self.faces, self.normals, self.uvs):
            if arr is not None:
                arr.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented

        def same(a, b):
            return (a is None and b is None) or (a is not None and b is not None and np.array_equal(a, b))

        return (
            same(self.vertices, other.vertices)
            and same(self.faces, other.faces)
            and same(self.normals, other.normals)
            and same(self.uvs, other.uvs)
        )

    __hash__ = None


@dataclass(frozen=True)
class SceneObject:
    name: str
    mesh: str
    material: str
    pose: Pose = field(default_factory=Pose)
    scale: float = 1.0
    unknown: bool = False


@dataclass(frozen=True)
class Scene:
    meshes: Mapping[str, Mesh]
    materials: Mapping[str, PbrMaterial]
    objects: tuple
    lights: tuple
    rig: SensorRig
    environment: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "lights", tuple(self.lights))
        env = _as_vec3("environment", self.environment)
        if min(env) < 0:
            raise InvariantError("environment", "radiance must be >= 0")
        object.__setattr__(self, "environment", env)
        validate_scene(self)

    def object_named(self, name):
        for obj in self.objects:
            if obj.name == name:
                return obj
        raise KeyError(name)

    def material_of(self, name):
        return self.materials[self.object_named(name).material]

    def with_materials(self, **materials):
        merged = dict(self.materials)
        merged.update(materials)
        return replace(self, materials=merged)

    def with_lights(self, lights):
        return replace(self, lights=tuple(lights))

    def with_rig(self, rig):
        return replace(self, rig=rig)


def validate_scene(scene):
    names = set()
    for i, obj in enumerate(scene.objects):
        if obj.name in names:
            raise InvariantError(f"objects[{i}].name", f"duplicate object name {obj.name!r}")
        names.add(obj.name)
        if obj.mesh not in scene.meshes:
            raise InvariantError(f"objects[{i}].mesh", f"unknown mesh {obj.mesh!r}")
        if obj.material not in scene.materials:
            raise InvariantError(f"objects[{i}].material", f"unknown material {obj.material!r}")
        if not obj.scale > 0:
            raise InvariantError(f"objects[{i}].scale", "must be positive")
    if not isinstance(scene.rig, SensorRig):
        raise InvariantError("rig", "exactly one sensor rig required")
    validate_rig(scene.rig)


def validate_rig(rig, atol=1e-9):
    """Raise :class:`RigError` unless the IR pair is rectified with a usable baseline."""
    left, right = rig.ir_left, rig.ir_right
    if (left.width, left.height) != (right.width, right.height) or not np.allclose(
        left.intrinsics, right.intrinsics, atol=atol, rtol=0
    ):
        raise RigError("IR cameras not rectified: intrinsics differ")
    rel = np.linalg.inv(left.pose.matrix) @ right.pose.matrix
    if not np.allclose(rel[:3, :3], np.eye(3), atol=1e-7):
        raise RigError("IR cameras not rectified: relative rotation present")
    t = rel[:3, 3]
    if not rig.baseline > 0:
        raise RigError("degenerate baseline")
    if abs(t[1]) > 1e-7 or abs(t[2]) > 1e-7:
        raise RigError("IR cameras not rectified: baseline must be a pure x offset")
    if abs(t[0] - rig.baseline) > 1e-7:
        raise RigError(f"baseline mismatch: cameras are {t[0]:.6f} m apart, rig says {rig.baseline:.6f} m")
    if rig.projector.kind != "textured_spot":
        raise RigError("projector must be a textured_spot light")
    if rig.ir_ambient < 0:
        raise RigError("ir_ambient must be >= 0")
    if not rig.visible_attenuation >= 0:
        raise RigError("visible_attenuation must be >= 0")

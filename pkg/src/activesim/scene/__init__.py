from activesim.scene.io import load_scene, read_obj, save_scene, scene_from_dict, write_obj
from activesim.scene.pattern import default_pattern, generate_dot_pattern
from activesim.scene.primitives import box, icosphere, make_primitive, quad
from activesim.scene.types import (
    CameraModel,
    InvariantError,
    LightSource,
    Mesh,
    MissingAssetError,
    PbrMaterial,
    Pose,
    RigError,
    Scene,
    SceneError,
    SceneObject,
    SceneParseError,
    SensorRig,
    Texture,
    validate_rig,
)

__all__ = [
    "CameraModel", "InvariantError", "LightSource", "Mesh", "MissingAssetError", "PbrMaterial", "Pose",
    "RigError", "Scene", "SceneError", "SceneObject", "SceneParseError", "SensorRig", "Texture",
    "box", "default_pattern", "generate_dot_pattern", "icosphere", "load_scene", "make_primitive", "quad",
    "read_obj", "save_scene", "scene_from_dict", "validate_rig", "write_obj",
]

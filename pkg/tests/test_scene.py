import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activesim.scene import (
    InvariantError,
    LightSource,
    Mesh,
    MissingAssetError,
    PbrMaterial,
    Pose,
    RigError,
    Scene,
    SceneObject,
    SceneParseError,
    SensorRig,
    Texture,
    box,
    generate_dot_pattern,
    icosphere,
    load_scene,
    quad,
    read_obj,
    save_scene,
    validate_rig,
    write_obj,
)
from activesim.scene.io import scene_from_dict

MINIMAL = """
[meshes.q]
primitive = "quad"

[materials.white]
base_color = [0.8, 0.8, 0.8]

[[objects]]
name = "wall"
mesh = "q"
material = "white"
position = [0.0, 0.0, 1.0]

[[lights]]
kind = "point"
position = [0.0, -0.5, 0.0]
intensity = 2.0
"""


def test_minimal_scene(tmp_path):
    path = tmp_path / "s.toml"
    path.write_text(MINIMAL)
    scene = load_scene(path)
    assert len(scene.objects) == 1 and len(scene.lights) == 1
    assert scene.lights[0].intensity == (2.0, 2.0, 2.0)
    validate_rig(scene.rig)
    assert scene.rig.baseline == pytest.approx(0.055)


def test_missing_mesh_names_path(tmp_path):
    path = tmp_path / "s.toml"
    path.write_text(MINIMAL.replace('primitive = "quad"', 'path = "nowhere.obj"'))
    with pytest.raises(MissingAssetError, match="nowhere.obj"):
        load_scene(path)


def test_transmission_out_of_range(tmp_path):
    path = tmp_path / "s.toml"
    path.write_text(MINIMAL.replace("base_color = [0.8, 0.8, 0.8]", "transmission = 1.2"))
    with pytest.raises(InvariantError, match="transmission"):
        load_scene(path)


def test_parse_error_and_unknown_fields(tmp_path):
    path = tmp_path / "s.toml"
    path.write_text("[meshes\n")
    with pytest.raises(SceneParseError):
        load_scene(path)
    with pytest.raises(SceneParseError, match="colour"):
        scene_from_dict({"materials": {"m": {"colour": 1}}})
    with pytest.raises(SceneParseError):
        scene_from_dict({"bogus": {}})


def test_unknown_object_references():
    doc = {"meshes": {"q": {"primitive": "quad"}}, "materials": {"m": {}},
           "objects": [{"name": "a", "mesh": "q", "material": "nope"}]}
    with pytest.raises(Exception, match="nope"):
        scene_from_dict(doc)


def test_rig_rotated_right_camera_rejected():
    rig = SensorRig.build()
    turned = rig.ir_right.with_pose(Pose(rig.ir_right.pose.position, (0.0, math.radians(1.0), 0.0)))
    with pytest.raises(RigError, match="IR cameras not rectified"):
        validate_rig(replace(rig, ir_right=turned))


def test_rig_baseline_rules():
    validate_rig(SensorRig.build(baseline=0.055))
    with pytest.raises(RigError, match="degenerate baseline"):
        validate_rig(SensorRig.build(baseline=0.0))
    rig = SensorRig.build()
    shifted = rig.ir_right.with_pose(Pose((0.055, 0.01, 0.0)))
    with pytest.raises(RigError, match="not rectified"):
        validate_rig(replace(rig, ir_right=shifted))


def test_rig_intrinsics_mismatch():
    rig = SensorRig.build()
    with pytest.raises(RigError, match="intrinsics"):
        validate_rig(replace(rig, ir_right=replace(rig.ir_right, fx=431.0)))


def test_validation_is_pure():
    rig = SensorRig.build(pose=Pose((0.1, 0.2, 0.3), (0.1, -0.2, 0.05)))
    for _ in range(3):
        assert validate_rig(rig) is None


def test_invariants():
    with pytest.raises(InvariantError, match="ior"):
        PbrMaterial(ior=0.9)
    with pytest.raises(InvariantError, match="pattern"):
        LightSource("textured_spot")
    with pytest.raises(InvariantError, match="intensity"):
        LightSource("point", intensity=-1.0)
    with pytest.raises(InvariantError):
        Mesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))
    assert PbrMaterial(metallic=0, transmission=0).diffuse_weight == 1.0
    assert PbrMaterial(metallic=1, transmission=0.3).diffuse_weight == 0.0
    assert PbrMaterial(metallic=0.2, transmission=1).diffuse_weight == 0.0


def test_obj_roundtrip(tmp_path):
    mesh = icosphere(0.5, 1)
    write_obj(tmp_path / "m.obj", mesh)
    assert read_obj(tmp_path / "m.obj") == mesh


def test_obj_polygon_rejected(tmp_path):
    (tmp_path / "p.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(SceneParseError):
        read_obj(tmp_path / "p.obj")


def test_primitives():
    assert quad().faces.shape == (2, 3)
    assert box().faces.shape == (12, 3)
    v = icosphere(2.0, 2).vertices
    assert np.allclose(np.linalg.norm(v, axis=1), 2.0)


def test_dot_pattern_density():
    pat = generate_dot_pattern(200, 100, density=0.5, seed=3)
    assert set(np.unique(pat)) <= {0.0, 1.0}
    assert abs(pat.mean() - 0.5) < 0.02
    assert np.array_equal(pat, generate_dot_pattern(200, 100, density=0.5, seed=3))


unit = st.floats(0.0, 1.0, allow_nan=False)


@settings(max_examples=15, deadline=None)
@given(
    color=st.tuples(unit, unit, unit),
    metallic=unit,
    roughness=unit,
    transmission=unit,
    ior=st.floats(1.0, 3.0),
    position=st.tuples(*[st.floats(-2, 2)] * 3),
    rotation=st.tuples(*[st.floats(-1.5, 1.5)] * 3),
    intensity=st.floats(0.0, 10.0),
)
def test_save_load_roundtrip(tmp_path_factory, color, metallic, roughness, transmission, ior, position, rotation,
                             intensity):
    out = tmp_path_factory.mktemp("rt")
    tex = Texture(np.linspace(0, 1, 12).reshape(3, 4))
    scene = Scene(
        {"box": box((0.2, 0.3, 0.4))},
        {"m": PbrMaterial(base_color=color, metallic=metallic, roughness=roughness, transmission=transmission,
                          ior=ior)},
        [SceneObject("b", "box", "m", Pose(position, rotation), unknown=True)],
        [LightSource("point", Pose((0, -1, 0)), intensity=intensity),
         LightSource("textured_spot", Pose((0.1, 0, 0)), pattern=tex, fov=0.4)],
        SensorRig.build(width=64, height=48, fx=60.0, pose=Pose((0.0, 0.1, -0.2), (0.05, 0.0, 0.0))),
        environment=(0.1, 0.2, 0.3),
    )
    save_scene(scene, out / "scene.toml")
    back = load_scene(out / "scene.toml")
    assert back.materials == scene.materials
    assert back.objects == scene.objects
    assert back.environment == scene.environment
    assert back.meshes == scene.meshes
    for a, b in zip(back.lights, scene.lights):
        assert a.kind == b.kind and np.allclose(a.intensity, b.intensity)
        assert np.allclose(a.pose.matrix, b.pose.matrix)
    assert np.allclose(back.lights[1].pattern.data, np.round(tex.data * 255) / 255)
    for cam in ("ir_left", "ir_right", "rgb"):
        a, b = getattr(back.rig, cam), getattr(scene.rig, cam)
        assert np.allclose(a.intrinsics, b.intrinsics)
        assert np.allclose(a.pose.matrix, b.pose.matrix, atol=1e-9)
    assert np.allclose(back.rig.projector.pose.matrix, scene.rig.projector.pose.matrix, atol=1e-9)

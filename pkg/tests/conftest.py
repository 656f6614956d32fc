import activesim  # noqa: F401  (sizes the numba thread pool before numba is imported)
import numpy as np
import pytest

from activesim.scene import LightSource, PbrMaterial, Pose, Scene, SceneObject, SensorRig, icosphere, quad

# (criterion number, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def wall_scene(material=None, distance=1.0, size=6.0, rig=None, rotation=(0.0, 0.0, 0.0)):
    """Frontal wall in front of the default rig."""
    material = material or PbrMaterial(base_color=(0.8, 0.8, 0.8), roughness=1.0)
    return Scene(
        {"wall": quad(size, size)},
        {"wall": material},
        [SceneObject("wall", "wall", "wall", Pose((0.0, 0.0, distance), rotation))],
        [],
        rig or SensorRig.build(),
    )


def sphere_on_plane(sphere_material, rig=None):
    """Sphere 0.8 m in front of the rig, resting in front of a diffuse backdrop at 1.2 m."""
    plane = PbrMaterial(base_color=(0.8, 0.8, 0.8), roughness=1.0)
    return Scene(
        {"plane": quad(4.0, 4.0), "sphere": icosphere(0.12, 3)},
        {"plane": plane, "sphere": sphere_material},
        [
            SceneObject("plane", "plane", "plane", Pose((0.0, 0.0, 1.2))),
            SceneObject("sphere", "sphere", "sphere", Pose((0.0275, 0.0, 0.8))),
        ],
        [],
        rig or SensorRig.build(),
    )


def textured_image(h, w, seed=0):
    """Random 8-bit texture with enough structure for census matching."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(h, w)).astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def point_light():
    return LightSource("point", Pose((0.0, 0.0, 0.0)), intensity=(1.0, 1.0, 1.0))

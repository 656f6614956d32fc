import json

import numpy as np
import pytest

from activesim.cli import main
from activesim.imageio import read_image, read_pfm, write_pfm, write_pgm
from activesim.matfit import FitConfig, render_capture
from activesim.noise import NoiseParams, apply_noise
from activesim.pipeline import to_8bit
from activesim.scene import SensorRig, save_scene
from activesim.scene.io import read_toml
from conftest import textured_image, wall_scene
from test_matfit import fit_scene


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "scene" / "wall.toml"
    path.parent.mkdir()
    save_scene(wall_scene(rig=SensorRig.build(width=96, height=64, fx=200.0)), path)
    return path


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["levitate"])
    assert exc.value.code == 1


def test_missing_scene_is_config_error(tmp_path):
    assert main(["simulate", "--scene", str(tmp_path / "nope.toml"), "--out-dir", str(tmp_path)]) == 2


def test_unknown_config_section(tmp_path, scene_file):
    cfg = tmp_path / "extra.toml"
    cfg.write_text("[render]\nspp = 2\n")
    assert main(["--config", str(cfg), "simulate", "--scene", str(scene_file), "--out-dir", str(tmp_path)]) == 2


def test_simulate(tmp_path, scene_file):
    out = tmp_path / "out"
    rc = main(["--seed", "3", "--threads", "1", "simulate", "--scene", str(scene_file), "--out-dir", str(out),
               "--spp", "2", "--outputs", "depth", "ir"])
    assert rc == 0
    assert sorted(p.name for p in out.iterdir()) == ["depth.pfm", "ir_left.pgm", "ir_right.pgm"]
    depth = read_pfm(out / "depth.pfm")
    assert depth.shape == (64, 96)
    assert abs(np.nanmedian(depth) - 1.0) < 0.02


def test_config_overrides_scene(tmp_path, scene_file):
    cfg = tmp_path / "run.toml"
    cfg.write_text('[run]\nspp = 1\noutputs = ["disparity"]\n')
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "simulate", "--scene", str(scene_file), "--out-dir", str(out)]) == 0
    assert [p.name for p in out.iterdir()] == ["disparity.pfm"]


def test_render_and_ir_pair(tmp_path, scene_file):
    rgb = tmp_path / "rgb.ppm"
    assert main(["render", "--scene", str(scene_file), "--spp", "1", "--out", str(rgb)]) == 0
    assert read_image(rgb).shape == (64, 96, 3)
    ir = tmp_path / "ir.pfm"
    assert main(["render", "--scene", str(scene_file), "--camera", "ir_left", "--spectrum", "ir", "--spp", "1",
                 "--out", str(ir)]) == 0
    assert read_pfm(ir).shape == (64, 96)
    left, right = tmp_path / "l.pgm", tmp_path / "r.pgm"
    assert main(["ir-pair", "--scene", str(scene_file), "--spp", "1", "--out-left", str(left),
                 "--out-right", str(right)]) == 0
    assert read_image(left).dtype == np.uint8 and read_image(right).shape == (64, 96)


def test_noise_command(tmp_path):
    src = tmp_path / "in.pgm"
    image = np.full((20, 30), 100, np.uint8)
    write_pgm(src, image)
    out = tmp_path / "out.pgm"
    assert main(["--seed", "7", "noise", "--in", str(src), "--out", str(out), "--k", "5"]) == 0
    expected = to_8bit(apply_noise(image.astype(np.float64), NoiseParams(k=5.0), seed=7))
    np.testing.assert_array_equal(read_image(out), expected)
    assert main(["noise", "--in", str(src), "--out", str(out), "--k", "-1"]) == 2


def test_match(tmp_path):
    base = textured_image(40, 120, seed=2)
    left = base[:, 10:110]
    right = base[:, 17:117]
    lp, rp = tmp_path / "l.pgm", tmp_path / "r.pgm"
    write_pgm(lp, np.ascontiguousarray(left))
    write_pgm(rp, np.ascontiguousarray(right))
    disp, depth, vis = tmp_path / "d.pfm", tmp_path / "z.pfm", tmp_path / "v.pgm"
    rc = main(["match", "--left", str(lp), "--right", str(rp), "--fx", "100", "--baseline", "0.07",
               "--out-disp", str(disp), "--out-depth", str(depth), "--out-vis", str(vis)])
    assert rc == 0
    d = read_pfm(disp)
    assert np.nanmedian(d) == pytest.approx(7.0, abs=0.1)
    assert np.nanmedian(read_pfm(depth)) == pytest.approx(1.0, abs=0.02)
    assert read_image(vis).dtype == np.uint8
    assert main(["match", "--left", str(lp), "--right", str(rp), "--out-disp", str(disp),
                 "--out-depth", str(depth)]) == 1


def test_batch(tmp_path, scene_file):
    out = tmp_path / "batch"
    assert main(["batch", "--scene", str(scene_file), "--out-dir", str(out), "-n", "2", "--spp", "1"]) == 0
    lines = (out / "manifest.jsonl").read_text().splitlines()
    assert [json.loads(line)["sample"] for line in lines] == [0, 1]
    assert main(["batch", "--scene", str(scene_file), "--out-dir", str(out), "-n", "0"]) == 2


def test_fit(tmp_path):
    scene = fit_scene()
    cfg = FitConfig(spp=2, params=("roughness",), fit_lights=False)
    target = render_capture(scene, cfg)
    targets = tmp_path / "targets"
    targets.mkdir()
    write_pfm(targets / "front_rgb.pfm", target.rgb.astype(np.float32))
    write_pfm(targets / "front_ir.pfm", target.ir.astype(np.float32))
    scene_path = tmp_path / "fit.toml"
    save_scene(scene, scene_path)
    params = tmp_path / "fitted.toml"
    config = tmp_path / "fit_cfg.toml"
    config.write_text('[fit]\nparams = ["roughness"]\nrounds = 1\n')
    rc = main(["--config", str(config), "fit", "--scene", str(scene_path), "--targets-dir", str(targets),
               "--spp", "2", "--no-lights", "--out-params", str(params)])
    assert rc == 0
    fragment = read_toml(params)
    assert "ball" in json.dumps(fragment)
    rows = params.with_suffix(".csv").read_text().splitlines()
    assert rows[0].startswith("candidate,phase") and len(rows) > 10
    assert main(["fit", "--scene", str(scene_path), "--targets-dir", str(tmp_path / "none"),
                 "--out-params", str(params)]) == 2


def _write_stack(directory, clean, params, n, seed):
    directory.mkdir()
    for i in range(n):
        write_pgm(directory / f"f{i:03d}.pgm", to_8bit(apply_noise(clean, params, seed=seed + i)))


def test_estimate_noise(tmp_path):
    params = NoiseParams()
    rng = np.random.default_rng(0)
    bright = rng.uniform(60, 200, size=(40, 60))
    _write_stack(tmp_path / "bright", bright, params, 20, 0)
    _write_stack(tmp_path / "dark", np.zeros((40, 60)), params, 20, 100)
    out = tmp_path / "noise.toml"
    assert main(["estimate-noise", "--frames", str(tmp_path / "bright"), str(tmp_path / "dark"),
                 "--out", str(out)]) == 0
    fitted = read_toml(out)["noise"]
    assert fitted["k"] == pytest.approx(params.k, rel=0.3)
    assert main(["estimate-noise", "--frames", str(tmp_path / "dark")]) == 3


def test_extract_pattern(tmp_path):
    rng = np.random.default_rng(1)
    dots = rng.random((30, 40)) < 0.3
    frames = tmp_path / "frames"
    _write_stack(frames, np.where(dots, 150.0, 5.0), NoiseParams(), 8, 0)
    out = tmp_path / "pattern.pgm"
    assert main(["extract-pattern", "--frames", str(frames), "--out", str(out)]) == 0
    pattern = read_image(out) > 0
    assert (pattern == dots).mean() > 0.98

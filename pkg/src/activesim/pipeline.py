"""Scene in, simulated depth-sensor outputs out.

``simulate`` chains IR rendering, exposure, 8-bit quantization, sensor noise
and stereo matching; ``generate_batch`` repeats it over jittered object
poses and records every sample in a line-delimited JSON manifest.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from activesim.imageio import write_pfm, write_pgm, write_ppm
from activesim.noise import NoiseParams, apply_noise
from activesim.render.tracer import auto_exposure, depth_buffer, derive_seed, quantize_ir, render_ir_pair, trace
from activesim.scene.io import read_toml
from activesim.scene.types import Pose
from activesim.stereo import StereoConfig, compute_depth, register_depth

OUTPUTS = (
    "ir",
    "ir_noisy",
    "disparity",
    "depth",
    "registered_depth",
    "clean_depth",
    "rgb",
)
DEFAULT_OUTPUTS = ("ir", "ir_noisy", "disparity", "depth", "registered_depth", "clean_depth")

SEED_NOISE_LEFT = 3
SEED_NOISE_RIGHT = 4
SEED_RGB = 5


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BatchConfig:
    """Uniform pose jitter: each listed object moves by U(-r, r) per axis."""

    position_jitter: tuple = (0.0, 0.0, 0.0)
    rotation_jitter: tuple = (0.0, 0.0, 0.0)
    objects: tuple = None  # None: every object

    def __post_init__(self):
        for name in ("position_jitter", "rotation_jitter"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 3 or min(value) < 0:
                raise ConfigError(f"batch.{name} must be three non-negative numbers")
            object.__setattr__(self, name, value)
        if self.objects is not None:
            object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class RunConfig:
    spp: int = 8
    seed: int = 0
    exposure: object = "auto"  # "auto" or a positive float
    max_bounces: int = 8
    median_prefilter: bool = False
    noise_enabled: bool = True
    noise: NoiseParams = field(default_factory=NoiseParams)
    stereo: StereoConfig = field(default_factory=StereoConfig)
    outputs: tuple = DEFAULT_OUTPUTS
    batch: BatchConfig = None
    threads: int = None

    def __post_init__(self):
        if int(self.spp) < 1:
            raise ConfigError("run.spp must be >= 1")
        if self.exposure != "auto" and not float(self.exposure) > 0:
            raise ConfigError("run.exposure must be 'auto' or a positive number")
        unknown = set(self.outputs) - set(OUTPUTS)
        if unknown:
            raise ConfigError(f"unknown output(s): {sorted(unknown)}")
        object.__setattr__(self, "outputs", tuple(self.outputs))

    def with_(self, **changes):
        return replace(self, **changes)


RUN_KEYS = {"spp", "seed", "exposure", "max_bounces", "median_prefilter", "noise_enabled", "outputs", "threads"}


def run_config_from_dict(doc):
    """RunConfig from a parsed config document with ``run``, ``noise``, ``stereo``, ``batch`` tables."""
    run = dict(doc.get("run", {}))
    unknown = set(run) - RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown run key(s): {sorted(unknown)}")
    try:
        noise = NoiseParams.from_dict(doc.get("noise", {}))
        stereo = StereoConfig.from_dict(doc.get("stereo", {}))
        batch = None
        if "batch" in doc:
            batch_doc = doc["batch"]
            allowed = {f.name for f in fields(BatchConfig)}
            extra = set(batch_doc) - allowed
            if extra:
                raise ConfigError(f"unknown batch key(s): {sorted(extra)}")
            batch = BatchConfig(**batch_doc)
        if "outputs" in run:
            run["outputs"] = tuple(run["outputs"])
        return RunConfig(noise=noise, stereo=stereo, batch=batch, **run)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(path):
    return run_config_from_dict(read_toml(path))


@dataclass
class SimOutput:
    ir_left: np.ndarray  # uint8, noise-free
    ir_right: np.ndarray
    ir_left_noisy: np.ndarray
    ir_right_noisy: np.ndarray
    disparity: np.ndarray  # float32 px, NaN invalid
    depth: np.ndarray  # float32 m, NaN invalid
    registered_depth: np.ndarray
    clean_depth: np.ndarray  # renderer z-buffer of the left IR camera
    clean_registered_depth: np.ndarray = None
    rgb: np.ndarray = None
    exposure: float = 1.0

    def save(self, out_dir, outputs=DEFAULT_OUTPUTS):
        """Write the selected artifacts; returns {name: path}."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = {}

        def put(name, writer, data):
            if data is None:
                return
            path = out_dir / name
            writer(path, data)
            files[name] = str(path)

        if "ir" in outputs:
            put("ir_left.pgm", write_pgm, self.ir_left)
            put("ir_right.pgm", write_pgm, self.ir_right)
        if "ir_noisy" in outputs:
            put("ir_left_noisy.pgm", write_pgm, self.ir_left_noisy)
            put("ir_right_noisy.pgm", write_pgm, self.ir_right_noisy)
        if "disparity" in outputs:
            put("disparity.pfm", write_pfm, self.disparity)
        if "depth" in outputs:
            put("depth.pfm", write_pfm, self.depth)
        if "registered_depth" in outputs:
            put("registered_depth.pfm", write_pfm, self.registered_depth)
        if "clean_depth" in outputs:
            put("clean_depth.pfm", write_pfm, self.clean_depth)
            put("clean_registered_depth.pfm", write_pfm, self.clean_registered_depth)
        if "rgb" in outputs:
            put("rgb.ppm", write_ppm, self.rgb)
        return files


def to_8bit(intensity):
    """Round-half-up and clamp sensor intensities (0..255 scale) to uint8."""
    return np.clip(np.floor(np.asarray(intensity, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def simulate(scene, cfg=None):
    """Render, expose, quantize, add noise per eye, and match.

    One exposure (auto: the left image's 99th percentile maps to 90% of full
    scale) is shared by both eyes. Noise is applied to the exposed float
    intensities before rounding, with distinct seeds per eye.
    """
    cfg = cfg or RunConfig()
    render_kw = dict(max_bounces=cfg.max_bounces, median_prefilter=cfg.median_prefilter, threads=cfg.threads)
    left, right = render_ir_pair(scene, spp=cfg.spp, seed=cfg.seed, **render_kw)
    exposure = auto_exposure(left.data) if cfg.exposure == "auto" else float(cfg.exposure)
    ir_left = quantize_ir(left, exposure)
    ir_right = quantize_ir(right, exposure)
    if cfg.noise_enabled:
        scale = exposure * 255.0
        noisy_left = to_8bit(apply_noise(left.data * scale, cfg.noise, derive_seed(cfg.seed, SEED_NOISE_LEFT)))
        noisy_right = to_8bit(apply_noise(right.data * scale, cfg.noise, derive_seed(cfg.seed, SEED_NOISE_RIGHT)))
    else:
        noisy_left, noisy_right = ir_left.copy(), ir_right.copy()
    result = compute_depth(noisy_left, noisy_right, cfg.stereo, rig=scene.rig, threads=cfg.threads)
    rig = scene.rig
    clean = depth_buffer(scene, rig.ir_left).astype(np.float32)
    clean_registered = register_depth(clean, rig.ir_left, rig.rgb) if cfg.stereo.register else None
    rgb = None
    if "rgb" in cfg.outputs:
        radiance = trace(scene, rig.rgb, cfg.spp, "visible", seed=derive_seed(cfg.seed, SEED_RGB), **render_kw)
        rgb = np.clip(np.floor(np.clip(radiance.data, 0.0, 1.0) * 255.0 + 0.5), 0, 255).astype(np.uint8)
    return SimOutput(
        ir_left, ir_right, noisy_left, noisy_right, result.disparity, result.depth, result.registered_depth,
        clean, clean_registered, rgb, float(exposure),
    )


def jitter_scene(scene, batch, rng):
    """Scene with object poses perturbed within the batch ranges; returns (scene, poses)."""
    names = set(batch.objects) if batch.objects is not None else {obj.name for obj in scene.objects}
    missing = names - {obj.name for obj in scene.objects}
    if missing:
        raise ConfigError(f"batch.objects names unknown object(s): {sorted(missing)}")
    pos_r = np.asarray(batch.position_jitter)
    rot_r = np.asarray(batch.rotation_jitter)
    objects, poses = [], {}
    for obj in scene.objects:
        if obj.name in names:
            dp = rng.uniform(-1.0, 1.0, 3) * pos_r
            dr = rng.uniform(-1.0, 1.0, 3) * rot_r
            pose = Pose(tuple(np.add(obj.pose.position, dp)), tuple(np.add(obj.pose.rotation, dr)))
            obj = replace(obj, pose=pose)
        objects.append(obj)
        poses[obj.name] = {"position": [float(v) for v in obj.pose.position],
                           "rotation": [float(v) for v in obj.pose.rotation]}
    return replace(scene, objects=tuple(objects)), poses


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def read_manifest(path):
    """Latest record per sample id from a line-delimited manifest."""
    records = {}
    if not os.path.exists(path):
        return records
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                rec = json.loads(line)
                records[rec["sample"]] = rec
    return records


def _complete(rec, root):
    for name, rel in rec["files"].items():
        path = root / rel
        if not path.is_file() or _sha256(path) != rec["sha256"][name]:
            return False
    return True


def generate_batch(scene, cfg, n, out_dir, resume=True):
    """Simulate ``n`` jittered copies of ``scene`` into ``out_dir/sample_XXXXX``.

    Sample i uses seed ``cfg.seed + i`` for both the renders and its pose
    jitter, so sample 0 with zero jitter equals ``simulate(scene, cfg)``.
    Samples already recorded in the manifest with matching checksums are
    skipped when ``resume`` is set. Returns the manifest records in order.
    """
    if n < 1:
        raise ConfigError("batch size must be >= 1")
    batch = cfg.batch or BatchConfig()
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest = root / "manifest.jsonl"
    done = read_manifest(manifest) if resume else {}
    if not resume and manifest.exists():
        manifest.unlink()
    records = []
    for i in range(n):
        rec = done.get(i)
        if rec is not None and _complete(rec, root):
            records.append(rec)
            continue
        seed = int(cfg.seed) + i
        rng = np.random.default_rng(derive_seed(seed, 0))
        sample_scene, poses = jitter_scene(scene, batch, rng)
        out = simulate(sample_scene, cfg.with_(seed=seed))
        sample_dir = root / f"sample_{i:05d}"
        files = out.save(sample_dir, cfg.outputs)
        rel = {name: os.path.relpath(path, root) for name, path in files.items()}
        rec = {
            "sample": i,
            "seed": seed,
            "poses": poses,
            "files": rel,
            "sha256": {name: _sha256(path) for name, path in files.items()},
            "exposure": out.exposure,
        }
        with open(manifest, "a") as f:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
        records.append(rec)
    return records


def run_config_to_dict(cfg):
    doc = {
        "run": {k: v for k, v in asdict(cfg).items() if k in RUN_KEYS and v is not None},
        "noise": cfg.noise.to_dict(),
        "stereo": {k: v for k, v in cfg.stereo.to_dict().items() if v is not None},
    }
    doc["run"]["outputs"] = list(cfg.outputs)
    if cfg.batch is not None:
        doc["batch"] = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg.batch).items() if v is not None}
    return doc

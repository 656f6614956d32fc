"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 configuration/scene/input error,
3 runtime failure.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

import activesim
from activesim import _threads
from activesim.imageio import ImageFormatError, read_image, to_unit_float, write_image, write_pfm, write_pgm
from activesim.matfit import CapturePair, FitConfig, FitError, fit_materials, history_rows
from activesim.noise import FrameStack, NoiseError, NoiseEstimationError, NoiseParams, apply_noise, estimate_noise_params, extract_pattern
from activesim.pipeline import (
    OUTPUTS,
    ConfigError,
    generate_batch,
    run_config_from_dict,
    simulate,
    to_8bit,
)
from activesim.render.tracer import auto_exposure, quantize_ir, render_ir_pair, trace
from activesim.scene.io import CONFIG_SECTIONS, load_scene, read_toml
from activesim.scene.types import Pose, SceneError
from activesim.stereo import StereoConfig, StereoConfigError, compute_depth

try:
    import tomli_w
except ModuleNotFoundError:  # pragma: no cover
    tomli_w = None

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
CONFIG_ERRORS = (SceneError, ConfigError, StereoConfigError, FitError, ImageFormatError, FileNotFoundError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_doc(args):
    """Config tables from the scene file (if any) overridden by --config."""
    doc = {}
    scene_path = getattr(args, "scene", None)
    if scene_path:
        doc.update({k: v for k, v in read_toml(scene_path).items() if k in CONFIG_SECTIONS})
    if args.config:
        extra = read_toml(args.config)
        unknown = set(extra) - CONFIG_SECTIONS
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        for key, value in extra.items():
            merged = dict(doc.get(key, {}))
            merged.update(value)
            doc[key] = merged
    return doc


def _run_config(args):
    doc = _config_doc(args)
    cfg = run_config_from_dict(doc)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.threads is not None:
        changes["threads"] = args.threads
    if getattr(args, "spp", None) is not None:
        changes["spp"] = args.spp
    return cfg.with_(**changes) if changes else cfg


def _stereo_config(args):
    doc = _config_doc(args)
    return StereoConfig.from_dict(doc.get("stereo", {}))


def _read_gray8(path):
    img = read_image(path)
    if img.ndim == 3:
        img = img[:, :, 0]
    if img.dtype == np.uint8:
        return img
    if img.dtype == np.uint16:
        return (img >> 8).astype(np.uint8)
    return to_8bit(np.nan_to_num(img) * (255.0 if np.nanmax(img) <= 1.0 else 1.0))


def cmd_render(args):
    scene = load_scene(args.scene)
    cfg = _run_config(args)
    cam = getattr(scene.rig, args.camera)
    img = trace(scene, cam, cfg.spp, args.spectrum, max_bounces=cfg.max_bounces, seed=cfg.seed,
                median_prefilter=cfg.median_prefilter, threads=cfg.threads)
    out = Path(args.out)
    if out.suffix.lower() == ".pfm":
        write_pfm(out, img.data)
    else:
        write_image(out, np.clip(np.floor(np.clip(img.data, 0, 1) * 255 + 0.5), 0, 255).astype(np.uint8))
    print(f"wrote {out}")


def cmd_ir_pair(args):
    scene = load_scene(args.scene)
    cfg = _run_config(args)
    left, right = render_ir_pair(scene, cfg.spp, cfg.seed, max_bounces=cfg.max_bounces,
                                 median_prefilter=cfg.median_prefilter, threads=cfg.threads)
    exposure = auto_exposure(left.data) if cfg.exposure == "auto" else float(cfg.exposure)
    for img, path in ((left, Path(args.out_left)), (right, Path(args.out_right))):
        if path.suffix.lower() == ".pfm":
            write_pfm(path, img.data)
        else:
            write_pgm(path, quantize_ir(img, exposure))
        print(f"wrote {path}")
    print(f"exposure {exposure:.6g}")


def cmd_noise(args):
    doc = _config_doc(args)
    params = NoiseParams.from_dict(doc.get("noise", {}))
    overrides = {k: v for k, v in (("k", args.k), ("theta", args.theta), ("mu_n", args.mu), ("sigma", args.sigma),
                                   ("scale", args.scale)) if v is not None}
    params = params.with_(**overrides)
    img = read_image(args.input)
    if img.ndim == 3:
        img = img[:, :, 0]
    noisy = apply_noise(np.asarray(img, dtype=np.float64), params, seed=args.seed or 0)
    out = Path(args.out)
    if out.suffix.lower() == ".pfm":
        write_pfm(out, noisy.astype(np.float32))
    else:
        write_image(out, to_8bit(noisy))
    print(f"wrote {out}")


def _visualize(disp, cfg):
    vis = np.zeros(disp.shape, np.uint8)
    ok = np.isfinite(disp)
    span = max(cfg.max_disp - 1 - cfg.min_disp, 1)
    vis[ok] = to_8bit(1.0 + 254.0 * (disp[ok] - cfg.min_disp) / span)
    return vis


def cmd_match(args):
    cfg = _stereo_config(args)
    left = _read_gray8(args.left)
    right = _read_gray8(args.right)
    rig = load_scene(args.scene).rig if args.scene else None
    if rig is None and args.out_depth and (args.fx is None or args.baseline is None):
        raise UsageError("--out-depth needs --scene or both --fx and --baseline")
    with _threads.thread_scope(args.threads):
        result = compute_depth(left, right, cfg, rig=rig, fx=args.fx, baseline=args.baseline)
    write_pfm(args.out_disp, result.disparity)
    print(f"wrote {args.out_disp}")
    if args.out_depth:
        write_pfm(args.out_depth, result.depth)
        print(f"wrote {args.out_depth}")
    if args.out_vis:
        write_pgm(args.out_vis, _visualize(result.disparity, cfg))
        print(f"wrote {args.out_vis}")
    valid = float(np.isfinite(result.disparity).mean())
    print(f"valid fraction {valid:.4f}")


def cmd_simulate(args):
    scene = load_scene(args.scene)
    cfg = _run_config(args)
    if args.outputs:
        cfg = cfg.with_(outputs=tuple(args.outputs))
    out = simulate(scene, cfg)
    files = out.save(args.out_dir, cfg.outputs)
    for path in files.values():
        print(f"wrote {path}")
    print(f"valid depth fraction {float(np.isfinite(out.depth).mean()):.4f}")


def cmd_batch(args):
    scene = load_scene(args.scene)
    cfg = _run_config(args)
    records = generate_batch(scene, cfg, args.n, args.out_dir, resume=not args.no_resume)
    print(f"{len(records)} samples in {args.out_dir}")


def _load_targets(directory):
    """Targets are ``<view>_rgb.(pfm|ppm)`` + ``<view>_ir.(pfm|pgm)``; ``viewpoints.json`` maps views to rig poses."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"targets directory not found: {directory}")
    views = sorted({p.name.rsplit("_rgb", 1)[0] for p in directory.glob("*_rgb.*")})
    if not views:
        raise ConfigError(f"no <view>_rgb.* targets in {directory}")
    poses = {}
    pose_file = directory / "viewpoints.json"
    if pose_file.is_file():
        poses = json.loads(pose_file.read_text())
    targets, viewpoints = [], []
    for view in views:
        rgb_path = next(iter(sorted(directory.glob(f"{view}_rgb.*"))))
        ir_paths = sorted(directory.glob(f"{view}_ir.*"))
        if not ir_paths:
            raise ConfigError(f"missing IR target for view {view!r}")
        rgb = to_unit_float(read_image(rgb_path))
        ir = to_unit_float(read_image(ir_paths[0]))
        targets.append(CapturePair(rgb, ir, "real-target"))
        pose = poses.get(view)
        viewpoints.append(Pose(tuple(pose["position"]), tuple(pose.get("rotation", (0, 0, 0)))) if pose else None)
    return targets, viewpoints


def cmd_fit(args):
    scene = load_scene(args.scene)
    doc = _config_doc(args)
    fit_doc = dict(doc.get("fit", {}))
    for key in ("params", "parts", "light_range"):
        if key in fit_doc:
            fit_doc[key] = tuple(fit_doc[key])
    if args.part:
        fit_doc["parts"] = tuple(args.part)
    if args.lam is not None:
        fit_doc["lam"] = args.lam
    if args.mode:
        fit_doc["mode"] = args.mode
    if args.spp is not None:
        fit_doc["spp"] = args.spp
    if args.seed is not None:
        fit_doc["seed"] = args.seed
    if args.no_lights:
        fit_doc["fit_lights"] = False
    try:
        cfg = FitConfig(**fit_doc)
    except TypeError as exc:
        raise ConfigError(f"bad fit configuration: {exc}") from None
    targets, viewpoints = _load_targets(args.targets_dir)
    with _threads.thread_scope(args.threads):
        result = fit_materials(scene, targets, cfg, viewpoints)
    fragment = result.params.to_config(scene)
    Path(args.out_params).write_text(tomli_w.dumps(fragment))
    print(f"wrote {args.out_params}")
    csv_path = Path(args.out_csv) if args.out_csv else Path(args.out_params).with_suffix(".csv")
    rows = history_rows(result)
    columns = sorted({k for row in rows for k in row} - {"candidate", "phase", "loss"})
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, ["candidate", "phase", *columns, "loss"])
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {csv_path}")
    print(f"loss initial {result.initial_loss:.6g} coarse {result.coarse_loss:.6g} fine {result.loss:.6g}")


def cmd_estimate_noise(args):
    stacks = [FrameStack.load(src) for src in args.frames]
    params = estimate_noise_params(stacks, bright_fraction=args.bright_fraction)
    text = tomli_w.dumps({"noise": params.to_dict()})
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")


def cmd_extract_pattern(args):
    stack = FrameStack.load(args.frames)
    pattern = extract_pattern(stack, args.threshold)
    write_pgm(args.out, (pattern.data * 255).astype(np.uint8))
    print(f"wrote {args.out} (lit fraction {float(pattern.data.mean()):.4f})")


def build_parser():
    parser = _Parser(prog="activesim", description="Active stereo depth-sensor simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {activesim.__version__}")
    parser.add_argument("--seed", type=int, default=None, help="random seed (overrides run.seed)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for parallel kernels")
    parser.add_argument("--config", default=None, help="TOML with run/noise/stereo/batch/fit tables")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("render", help="path-trace one camera of the rig")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", choices=("ir_left", "ir_right", "rgb"), default="rgb")
    p.add_argument("--spectrum", choices=("visible", "ir"), default="visible")
    p.add_argument("--spp", type=int)
    p.add_argument("--out", required=True, help=".pfm keeps linear radiance; .ppm/.pgm clips to [0, 1]")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("ir-pair", help="render the left/right IR images")
    p.add_argument("--scene", required=True)
    p.add_argument("--spp", type=int)
    p.add_argument("--out-left", required=True)
    p.add_argument("--out-right", required=True)
    p.set_defaults(func=cmd_ir_pair)

    p = sub.add_parser("noise", help="apply the speckle + read-noise model to an image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--scale", type=float)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("match", help="stereo-match an 8-bit IR pair")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--scene", help="scene file providing the rig (fx, baseline)")
    p.add_argument("--fx", type=float)
    p.add_argument("--baseline", type=float)
    p.add_argument("--out-disp", required=True, help="PFM, NaN = invalid")
    p.add_argument("--out-depth", help="PFM meters, NaN = invalid")
    p.add_argument("--out-vis", help="PGM, disparity scaled to 1..255, 0 = invalid")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("simulate", help="full sensor simulation of one scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--spp", type=int)
    p.add_argument("--outputs", nargs="+", choices=OUTPUTS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("batch", help="simulate n pose-jittered samples with a manifest")
    p.add_argument("--scene", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--spp", type=int)
    p.add_argument("--no-resume", action="store_true")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("fit", help="grid-search materials of unknown parts against targets")
    p.add_argument("--scene", required=True)
    p.add_argument("--targets-dir", required=True)
    p.add_argument("--part", action="append", help="part to fit (repeatable; default: objects marked unknown)")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mode", choices=("coord", "full"))
    p.add_argument("--spp", type=int)
    p.add_argument("--no-lights", action="store_true", help="keep light intensities fixed")
    p.add_argument("--out-params", required=True, help="TOML fragment with the fitted materials")
    p.add_argument("--out-csv", help="candidate/loss table (default: next to --out-params)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("estimate-noise", help="fit noise parameters from static frame stacks")
    p.add_argument("--frames", nargs="+", required=True, help="one directory or glob per stack")
    p.add_argument("--bright-fraction", type=float, default=0.1)
    p.add_argument("--out", help="TOML file with a [noise] table (default: stdout)")
    p.set_defaults(func=cmd_estimate_noise)

    p = sub.add_parser("extract-pattern", help="threshold the mean of wall captures into a pattern")
    p.add_argument("--frames", required=True, help="directory or glob of captures")
    p.add_argument("--threshold", type=float, help="intensity threshold (default: Otsu)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_pattern)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"activesim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoiseEstimationError as exc:
        print(f"activesim: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (NoiseError, *CONFIG_ERRORS) as exc:
        print(f"activesim: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"activesim: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

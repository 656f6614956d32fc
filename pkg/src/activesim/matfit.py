"""Material and light-intensity acquisition by grid search.

Candidates are rendered in both the visible and the IR spectrum and scored
against target captures with ``L = L_rgb + lambda * L_ir``, where each term
is a mean squared error plus a pluggable feature loss. All candidates use
the same render seed, so Monte Carlo noise is shared between them and loss
differences reflect the parameters rather than the sampling.
"""

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import convolve1d

from activesim.render.tracer import trace

MATERIAL_PARAMS = ("roughness", "metallic", "specular", "transmission")
PROJECTOR = "projector"
_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


class FitError(ValueError):
    pass


@dataclass
class CapturePair:
    """Linear RGB (H, W, 3) and IR (H, W) intensities of one viewpoint."""

    rgb: np.ndarray
    ir: np.ndarray
    tag: str = "sim"

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        self.ir = np.asarray(self.ir, dtype=np.float64)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise FitError("rgb must have shape (H, W, 3)")
        if self.ir.ndim == 3:
            self.ir = self.ir[:, :, 0]
        if self.ir.ndim != 2:
            raise FitError("ir must have shape (H, W)")
        if self.tag not in ("sim", "real-target"):
            raise FitError(f"unknown capture tag {self.tag!r}")


def _pyramid(img, levels):
    out = []
    cur = img
    for _ in range(levels):
        if min(cur.shape[:2]) < 4:
            break
        cur = convolve1d(convolve1d(cur, _BINOMIAL, axis=0, mode="reflect"), _BINOMIAL, axis=1, mode="reflect")
        cur = cur[::2, ::2]
        out.append(cur)
    return out


def _standardize(img):
    axes = (0, 1)
    centered = img - img.mean(axis=axes, keepdims=True)
    std = centered.std(axis=axes, keepdims=True)
    return np.divide(centered, std, out=np.zeros_like(centered), where=std > 1e-12)


def pyramid_feature_loss(a, b, levels=4):
    """Mean over pyramid levels 1..levels of the MSE between standardized downsamplings.

    Each level is blurred with a 5-tap binomial kernel and halved, then
    shifted to zero mean and unit standard deviation per channel, so global
    brightness offsets and gains do not count. Levels smaller than 4 pixels
    are skipped.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise FitError(f"image shapes differ: {a.shape} vs {b.shape}")
    terms = [np.mean((_standardize(x) - _standardize(y)) ** 2) for x, y in zip(_pyramid(a, levels), _pyramid(b, levels))]
    return float(np.mean(terms)) if terms else 0.0


def multispectral_loss(sim, target, lam=1.0, feat=pyramid_feature_loss):
    """[MSE(rgb) + feat(rgb)] + lam * [MSE(ir) + feat(ir)]; ``feat=None`` drops the feature term."""
    for name in ("rgb", "ir"):
        if getattr(sim, name).shape != getattr(target, name).shape:
            raise FitError(f"{name} shapes differ: {getattr(sim, name).shape} vs {getattr(target, name).shape}")

    def term(a, b):
        value = float(np.mean((a - b) ** 2))
        if feat is not None:
            value += float(feat(a, b))
        return value

    loss = term(sim.rgb, target.rgb)
    if lam != 0.0:
        loss += lam * term(sim.ir, target.ir)
    return loss


@dataclass
class ParamSet:
    """Per-part material parameters and per-light intensity multipliers."""

    parts: dict = field(default_factory=dict)
    lights: dict = field(default_factory=dict)

    def __post_init__(self):
        for part, params in self.parts.items():
            for name, value in params.items():
                if name not in MATERIAL_PARAMS:
                    raise FitError(f"unknown material parameter {name!r} for part {part!r}")
                if not 0.0 <= value <= 1.0:
                    raise FitError(f"{part}.{name} = {value} outside [0, 1]")
        for name, value in self.lights.items():
            if not value > 0:
                raise FitError(f"light multiplier {name} must be > 0")

    def copy(self):
        return ParamSet({p: dict(v) for p, v in self.parts.items()}, dict(self.lights))

    def key(self):
        parts = tuple(sorted((p, tuple(sorted(v.items()))) for p, v in self.parts.items()))
        return parts, tuple(sorted(self.lights.items()))

    def to_config(self, scene):
        """Config fragment: fitted materials under their scene names plus light multipliers."""
        materials = {}
        for part, params in self.parts.items():
            name = scene.object_named(part).material
            materials[name] = {k: float(v) for k, v in params.items()}
        return {"materials": materials, "fit": {"light_multipliers": {k: float(v) for k, v in self.lights.items()}}}


def light_names(scene):
    return [f"light{i}" for i in range(len(scene.lights))] + [PROJECTOR]


def apply_params(scene, params):
    """Scene with the fitted parts given private materials and lights rescaled."""
    materials = dict(scene.materials)
    objects = []
    for obj in scene.objects:
        if obj.name in params.parts:
            name = f"{obj.name}__fit"
            materials[name] = scene.materials[obj.material].with_params(**params.parts[obj.name])
            obj = replace(obj, material=name)
        objects.append(obj)
    lights = [
        light.scaled(params.lights.get(f"light{i}", 1.0)) for i, light in enumerate(scene.lights)
    ]
    rig = scene.rig
    if params.lights.get(PROJECTOR, 1.0) != 1.0:
        rig = replace(rig, projector=rig.projector.scaled(params.lights[PROJECTOR]))
    return replace(scene, materials=materials, objects=tuple(objects), lights=tuple(lights), rig=rig)


@dataclass(frozen=True)
class FitConfig:
    samples_per_param: int = 10
    lam: float = 1.0
    spp: int = 8
    seed: int = 0
    params: tuple = MATERIAL_PARAMS
    parts: tuple = None  # default: objects flagged unknown
    fit_lights: bool = True
    light_range: tuple = (0.25, 4.0)
    mode: str = "coord"
    rounds: int = 2
    median_prefilter: bool = True
    max_bounces: int = 6

    def __post_init__(self):
        if self.samples_per_param < 2:
            raise FitError("samples_per_param must be >= 2")
        if self.mode not in ("coord", "full"):
            raise FitError("mode must be 'coord' or 'full'")
        if self.spp < 1:
            raise FitError("spp must be >= 1")
        if self.rounds < 1:
            raise FitError("rounds must be >= 1")
        unknown = set(self.params) - set(MATERIAL_PARAMS)
        if unknown:
            raise FitError(f"unknown material parameter(s): {sorted(unknown)}")
        lo, hi = self.light_range
        if not 0 < lo < hi:
            raise FitError("light_range must satisfy 0 < lo < hi")

    @property
    def coarse_step(self):
        return 1.0 / self.samples_per_param

    def coarse_grid(self):
        n = self.samples_per_param
        return [(i + 0.5) / n for i in range(n)]

    def fine_grid(self, center):
        """``samples_per_param`` points spaced coarse_step / (n - 1), including ``center``."""
        n = self.samples_per_param
        step = self.coarse_step / (n - 1)
        values = [center + j * step for j in range(-(n // 2), n - n // 2)]
        return sorted({min(1.0, max(0.0, round(v, 12))) for v in values})

    def light_grid(self):
        lo, hi = self.light_range
        return list(np.geomspace(lo, hi, self.samples_per_param))


@dataclass
class FitResult:
    params: ParamSet
    loss: float
    coarse: ParamSet
    coarse_loss: float
    initial_loss: float
    history: list  # (phase, ParamSet, loss) per evaluated candidate


def render_capture(scene, cfg, viewpoint=None):
    """Simulated CapturePair (RGB camera, left IR camera) with the fit's render settings."""
    if viewpoint is not None:
        scene = scene.with_rig(scene.rig.moved_to(viewpoint))
    common = dict(spp=cfg.spp, seed=cfg.seed, median_prefilter=cfg.median_prefilter, max_bounces=cfg.max_bounces)
    rgb = trace(scene, scene.rig.rgb, spectrum="visible", **common).data
    ir = trace(scene, scene.rig.ir_left, spectrum="ir", **common).data
    return CapturePair(rgb, ir, "sim")


class _Evaluator:
    def __init__(self, scene, targets, viewpoints, cfg, feat):
        self.scene = scene
        self.targets = targets
        self.viewpoints = viewpoints
        self.cfg = cfg
        self.feat = feat
        self.cache = {}
        self.history = []

    def __call__(self, params, phase):
        key = params.key()
        if key not in self.cache:
            scene = apply_params(self.scene, params)
            loss = 0.0
            for target, view in zip(self.targets, self.viewpoints):
                loss += multispectral_loss(render_capture(scene, self.cfg, view), target, self.cfg.lam, self.feat)
            self.cache[key] = loss
            self.history.append((phase, params.copy(), loss))
        return self.cache[key]


def _sweep(evaluate, best, best_loss, coordinate, values, phase):
    """Try every value of one coordinate; keep strict improvements only."""
    kind, owner, name = coordinate
    for value in values:
        cand = best.copy()
        if kind == "part":
            cand.parts[owner][name] = float(value)
        else:
            cand.lights[owner] = float(value)
        loss = evaluate(cand, phase)
        if loss < best_loss:
            best, best_loss = cand, loss
    return best, best_loss


def fit_materials(scene, targets, cfg=None, viewpoints=None, feat=pyramid_feature_loss):
    """Coarse-then-fine grid search over the unknown parts' materials and light intensities.

    Coarse phase: ``rounds`` coordinate-wise sweeps over {0.05, ..., 0.95}
    for each material parameter and a log grid over each light multiplier
    (``mode="full"`` replaces the material sweeps by the full product grid
    per part). Fine phase: each material parameter is swept over 10 points
    around its coarse optimum with lights fixed. Only strict improvements
    are accepted, so the loss never increases from the initial parameters to
    the coarse and then the fine result.
    """
    cfg = cfg or FitConfig()
    if isinstance(targets, CapturePair):
        targets = [targets]
    if not targets:
        raise FitError("need at least one target capture")
    viewpoints = list(viewpoints) if viewpoints is not None else [None] * len(targets)
    if len(viewpoints) != len(targets):
        raise FitError("one viewpoint per target is required")
    names = [obj.name for obj in scene.objects]
    parts = list(cfg.parts) if cfg.parts is not None else [obj.name for obj in scene.objects if obj.unknown]
    for part in parts:
        if part not in names:
            raise FitError(f"no object named {part!r}")
    if not parts or (not cfg.params and not cfg.fit_lights):
        raise FitError("nothing to fit")

    start = ParamSet(
        {p: {name: getattr(scene.material_of(p), name) for name in cfg.params} for p in parts},
        {name: 1.0 for name in light_names(scene)} if cfg.fit_lights else {},
    )
    evaluate = _Evaluator(scene, targets, viewpoints, cfg, feat)
    initial_loss = evaluate(start, "initial")
    best, best_loss = start, initial_loss

    coarse = cfg.coarse_grid()
    for _ in range(cfg.rounds):
        if cfg.mode == "coord":
            for part in parts:
                for name in cfg.params:
                    best, best_loss = _sweep(evaluate, best, best_loss, ("part", part, name), coarse, "coarse")
        else:
            for part in parts:
                for combo in itertools.product(coarse, repeat=len(cfg.params)):
                    cand = best.copy()
                    cand.parts[part] = dict(zip(cfg.params, map(float, combo)))
                    loss = evaluate(cand, "coarse")
                    if loss < best_loss:
                        best, best_loss = cand, loss
        if cfg.fit_lights:
            for name in light_names(scene):
                best, best_loss = _sweep(evaluate, best, best_loss, ("light", name, None), cfg.light_grid(), "coarse")
        if cfg.mode == "full":
            break
    coarse_best, coarse_loss = best, best_loss

    for part in parts:
        for name in cfg.params:
            center = coarse_best.parts[part][name]
            best, best_loss = _sweep(evaluate, best, best_loss, ("part", part, name), cfg.fine_grid(center), "fine")
    return FitResult(best, best_loss, coarse_best, coarse_loss, initial_loss, evaluate.history)


def grid_search(scene, targets, cfg=None, viewpoints=None, feat=pyramid_feature_loss):
    """Fitted ParamSet; see :func:`fit_materials` for the search and its diagnostics."""
    return fit_materials(scene, targets, cfg, viewpoints, feat).params


def history_rows(result):
    """Flat (index, phase, parameter columns..., loss) rows for CSV export."""
    rows = []
    for i, (phase, params, loss) in enumerate(result.history):
        row = {"candidate": i, "phase": phase}
        for part, values in sorted(params.parts.items()):
            for name, value in sorted(values.items()):
                row[f"{part}.{name}"] = value
        for name, value in sorted(params.lights.items()):
            row[f"light.{name}"] = value
        row["loss"] = loss
        rows.append(row)
    return rows


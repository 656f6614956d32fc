"""IR sensor noise: multiplicative speckle plus additive Gaussian read noise.

Intensities are in 8-bit sensor units (0..255 floats before quantization),
the scale the default parameters were measured in.
"""

import glob
import os
import warnings
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy import optimize, special

from activesim.imageio import read_image
from activesim.scene.types import Texture

PAPER_K = 3.98
PAPER_THETA = 0.254
PAPER_MU = -0.231
PAPER_SIGMA = 0.83


class NoiseError(ValueError):
    pass


class NoiseEstimationError(NoiseError):
    pass


@dataclass(frozen=True)
class NoiseParams:
    """Speckle gamma(k, theta), read noise N(mu_n, sigma^2), and a strength multiplier."""

    k: float = PAPER_K
    theta: float = PAPER_THETA
    mu_n: float = PAPER_MU
    sigma: float = PAPER_SIGMA
    scale: float = 1.0

    def __post_init__(self):
        for name in ("k", "theta", "mu_n", "sigma", "scale"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise NoiseError(f"noise parameter {name} must be finite")
            object.__setattr__(self, name, value)
        if self.k <= 0:
            raise NoiseError("k must be > 0")
        if self.theta <= 0:
            raise NoiseError("theta must be > 0")
        if self.sigma < 0:
            raise NoiseError("sigma must be >= 0")
        if self.scale < 0:
            raise NoiseError("scale must be >= 0")

    @property
    def gamma_mean(self):
        return self.k * self.theta

    def expected_mean(self, c):
        """Mean output for a constant input c (before the clamp at zero)."""
        return self.gamma_mean * c + self.scale * self.mu_n

    def expected_variance(self, c):
        s = self.scale
        return s * s * (c * c * self.k * self.theta**2 + self.sigma**2)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise NoiseError(f"unknown noise key(s): {sorted(unknown)}")
        return cls(**data)

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class FrameStack:
    """N >= 2 frames of one static scene, stored (N, H, W) float64."""

    frames: np.ndarray

    def __post_init__(self):
        frames = self.frames
        if isinstance(frames, (list, tuple)):
            shapes = {np.shape(f) for f in frames}
            if len(shapes) > 1:
                raise NoiseError(f"frames differ in size: {sorted(shapes)}")
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim == 4 and frames.shape[-1] in (1, 3):
            frames = frames[..., 0]
        if frames.ndim != 3:
            raise NoiseError("a frame stack needs shape (N, H, W)")
        if frames.shape[0] < 2:
            raise NoiseError("a frame stack needs at least 2 frames")
        self.frames = frames

    def __len__(self):
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape[1:]

    def mean(self):
        return self.frames.mean(axis=0)

    @classmethod
    def load(cls, source):
        """Read a numbered image sequence: a directory, a glob pattern, or a list of paths."""
        if isinstance(source, (list, tuple)):
            paths = [str(p) for p in source]
        elif os.path.isdir(source):
            paths = sorted(
                os.path.join(source, name)
                for name in os.listdir(source)
                if name.lower().endswith((".pgm", ".ppm", ".pfm"))
            )
        else:
            paths = sorted(glob.glob(str(source)))
        if not paths:
            raise NoiseError(f"no frames found at {source}")
        return cls([read_image(p).astype(np.float64) for p in paths])


def apply_noise(img, params=None, seed=0, clamp=True):
    """Return gamma * img + n per pixel, clamped at zero.

    With ``params.scale = s`` the draws become kθ + s(γ − kθ) and s·n, so
    s = 0 gives exactly kθ·img and the variance grows monotonically with s.
    One PCG64 stream is consumed in raster order, so the result depends only
    on (img shape, params, seed). ``clamp=False`` skips the clamp at zero,
    which otherwise lifts the mean of dim pixels above kθ·img + s·mu_n.
    """
    params = params or NoiseParams()
    img = np.asarray(img, dtype=np.float64)
    if np.any(img < 0) or not np.all(np.isfinite(img)):
        raise NoiseError("apply_noise expects finite, non-negative intensities")
    mean_gamma = params.gamma_mean
    if params.scale == 0.0:
        return mean_gamma * img
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) % 2**63)))
    gamma = rng.gamma(params.k, params.theta, size=img.shape)
    additive = rng.normal(params.mu_n, params.sigma, size=img.shape) if params.sigma > 0 else np.full(img.shape, params.mu_n)
    s = params.scale
    gamma = mean_gamma + s * (gamma - mean_gamma)
    out = gamma * img + s * additive
    return np.maximum(out, 0.0) if clamp else out


def _gamma_mle(samples):
    """Shape/scale MLE for positive samples, starting from the moment estimate."""
    mean = samples.mean()
    var = samples.var()
    if var <= 1e-15 * mean * mean:
        return 1e12, mean / 1e12
    k = mean * mean / var
    # the shape solves log k - digamma(k) = log(mean) - mean(log x)
    s = np.log(mean) - np.log(samples).mean()
    if s <= 0:
        return k, mean / k
    for _ in range(100):
        f = np.log(k) - special.digamma(k) - s
        df = 1.0 / k - special.polygamma(1, k)
        step = f / df
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) < 1e-12 * k:
            k = k_new
            break
        k = k_new
    return k, mean / k


def _censored_normal_mle(values):
    """(mu, sigma) of n from observations max(n, 0)."""
    censored = values <= 0.0
    n0 = int(censored.sum())
    pos = values[~censored]
    if pos.size == 0:
        return 0.0, 0.0
    if n0 == 0:
        return float(pos.mean()), float(pos.std())
    start_sigma = max(pos.std(), 1e-3)

    def nll(p):
        mu, log_sigma = p
        sigma = np.exp(log_sigma)
        z = (pos - mu) / sigma
        return -(n0 * special.log_ndtr(-mu / sigma) - 0.5 * np.sum(z * z) - pos.size * log_sigma)

    res = optimize.minimize(nll, x0=[0.0, np.log(start_sigma)], method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-8, "maxiter": 4000})
    mu, log_sigma = res.x
    return float(mu), float(np.exp(log_sigma))


def estimate_noise_params(stacks, bright_fraction=0.1, min_signal=5.0, min_frames=10, min_pixels=16):
    """Fit speckle and read-noise parameters from static frame stacks.

    The mean of each stack stands in for the clean image. Pixels whose mean
    reaches ``bright_fraction`` of the stack maximum (and ``min_signal``)
    feed the gamma fit through the ratios (I - mu) / (mean - mu); the
    remaining pixels are treated as unlit, so they observe max(n, 0) and
    give mu and sigma through a censored-normal likelihood. Both fits are
    maximum likelihood (flat priors), started from moment estimates.

    Because the clean image is itself estimated by averaging, the gamma
    mean is not identifiable from the data and is normalized to k*theta = 1.
    """
    if isinstance(stacks, FrameStack):
        stacks = [stacks]
    stacks = [s if isinstance(s, FrameStack) else FrameStack(s) for s in stacks]
    if not stacks:
        raise NoiseEstimationError("need at least one frame stack")
    bright_masks, dark_values = [], []
    for stack in stacks:
        mean = stack.mean()
        peak = float(mean.max())
        threshold = max(bright_fraction * peak, min_signal)
        bright = mean >= threshold
        bright_masks.append(bright)
        dark_values.append(stack.frames[:, ~bright].ravel())
    if sum(int(b.sum()) for b in bright_masks) < min_pixels:
        raise NoiseEstimationError("insufficient bright pixels for the speckle fit")
    for stack in stacks:
        if len(stack) < min_frames:
            raise NoiseEstimationError(f"insufficient frames: need >= {min_frames}, got {len(stack)}")

    dark = np.concatenate(dark_values)
    if dark.size:
        mu, sigma = _censored_normal_mle(dark)
    else:
        warnings.warn("no dark pixels; additive noise set to zero", stacklevel=2)
        mu, sigma = 0.0, 0.0

    ratios, frame_counts = [], []
    for stack, bright in zip(stacks, bright_masks):
        frames = stack.frames[:, bright]
        base = frames.mean(axis=0) - mu
        ratios.append(((frames - mu) / base).ravel())
        frame_counts.append(np.full(frames.size, len(stack)))
    g = np.concatenate(ratios)
    counts = np.concatenate(frame_counts)
    keep = g > 0
    g, counts = g[keep], counts[keep]
    k, _ = _gamma_mle(g)
    # ratios against the in-sample mean shrink the spread by (1 - 1/N)
    k = k * float(np.mean(1.0 - 1.0 / counts))
    k = min(k, 1e12)
    return NoiseParams(k=k, theta=1.0 / k, mu_n=mu, sigma=sigma)


def otsu_threshold(values, bins=256):
    """Threshold maximizing the between-class variance of a histogram."""
    values = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return lo
    hist, edges = np.histogram(values, bins=bins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    m0 = np.cumsum(hist * centers)
    total = m0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mean0 = m0 / w0
        mean1 = (total - m0) / w1
        between = w0 * w1 * (mean0 - mean1) ** 2
    between[~np.isfinite(between)] = -1.0
    return float(edges[int(np.argmax(between)) + 1])


def extract_pattern(stack, threshold=None):
    """Binary projector pattern: the stack mean above ``threshold`` (Otsu when None)."""
    if not isinstance(stack, FrameStack):
        stack = FrameStack(stack)
    mean = stack.mean()
    if threshold is None:
        threshold = otsu_threshold(mean)
    return Texture((mean > threshold).astype(np.float32), source="extracted")

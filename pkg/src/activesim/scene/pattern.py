"""Projector dot patterns."""

from functools import lru_cache
from importlib import resources

import numpy as np

from activesim.imageio import read_pnm, to_unit_float
from activesim.scene.types import Texture

DEFAULT_PATTERN_SIZE = (640, 480)
DEFAULT_DENSITY = 0.3
DEFAULT_SEED = 20210901


def generate_dot_pattern(width=640, height=480, density=DEFAULT_DENSITY, seed=DEFAULT_SEED, dot_size=1):
    """Binary pseudo-random dot texture: each ``dot_size`` cell is lit with probability ``density``."""
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    cells = rng.random(((height + dot_size - 1) // dot_size, (width + dot_size - 1) // dot_size)) < density
    dots = np.repeat(np.repeat(cells, dot_size, axis=0), dot_size, axis=1)[:height, :width]
    return dots.astype(np.float32)


@lru_cache(maxsize=1)
def default_pattern():
    """The shipped projector pattern (see ``assets/pattern_default.pgm``)."""
    try:
        with resources.as_file(resources.files("activesim") / "assets" / "pattern_default.pgm") as path:
            data = to_unit_float(read_pnm(path))
    except (FileNotFoundError, OSError):
        data = generate_dot_pattern(*DEFAULT_PATTERN_SIZE)
    return Texture(data, source="default")

"""Independent reference implementations used by the tests."""

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _label_paths(length, labels):
    return np.array(list(itertools.product(range(labels), repeat=length)), dtype=np.int64).reshape(-1, length)


def path_energy(line, p1, p2):
    """E[x, d]: cheapest label path over positions 0..x ending in label d, by enumeration."""
    n, nd = line.shape
    energy = np.empty((n, nd), np.int64)
    for x in range(n):
        paths = _label_paths(x + 1, nd)
        data = line[np.arange(x + 1), paths].sum(axis=1)
        jumps = np.abs(np.diff(paths, axis=1))
        smooth = np.where(jumps == 0, 0, np.where(jumps == 1, p1, p2)).sum(axis=1)
        total = data + smooth
        for d in range(nd):
            energy[x, d] = total[paths[:, -1] == d].min()
    return energy


def path_cost(line, p1, p2):
    """Normalized path cost: the recurrence subtracts min_k L(x-1, k) at every step,
    and these subtractions telescope to min_k E(x-1, k)."""
    energy = path_energy(np.asarray(line, np.int64), p1, p2)
    out = energy.copy()
    out[1:] -= energy[:-1].min(axis=1, keepdims=True)
    return out


def sgm_oracle(costs, p1, p2):
    """Sum of the four directional path costs for an (H, W, D) volume."""
    costs = np.asarray(costs, np.int64)
    h, w, _ = costs.shape
    total = np.zeros_like(costs)
    for y in range(h):
        total[y] += path_cost(costs[y], p1, p2)
        total[y] += path_cost(costs[y, ::-1], p1, p2)[::-1]
    for x in range(w):
        total[:, x] += path_cost(costs[:, x], p1, p2)
        total[:, x] += path_cost(costs[::-1, x], p1, p2)[::-1]
    return total


def census_oracle(img, width, height):
    """Center-symmetric census by direct window enumeration; None on border pixels."""
    h, w = img.shape
    ry, rx = height // 2, width // 2
    offsets = [(dy, dx) for dy in range(-ry, ry + 1) for dx in range(-rx, rx + 1)]
    half = offsets[: len(offsets) // 2]
    out = {}
    for y in range(ry, h - ry):
        for x in range(rx, w - rx):
            out[(y, x)] = [int(img[y + dy, x + dx] > img[y - dy, x - dx]) for dy, dx in half]
    return out


def random_sgm_case(rng):
    h, w, nd = (int(v) for v in rng.integers(1, (7, 7, 5)))
    p1 = int(rng.integers(1, 20))
    p2 = int(rng.integers(p1 + 1, 60))
    costs = rng.integers(0, 64, size=(h, w, nd)).astype(np.uint16)
    return costs, p1, p2

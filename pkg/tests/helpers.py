from pathlib import Path

import numpy as np

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'config'


def midpoint(hmap):
    return np.array([0.5 * (lo + hi) for lo, hi in hmap.domain])


def interior_points(hmap, count=3, seed=7):
    """Midpoint plus seeded points strictly inside the domain"""
    rng = np.random.default_rng(seed)
    box = np.asarray(hmap.domain, dtype=float)
    width = box[:, 1] - box[:, 0]
    lo, hi = box[:, 0] + 0.1 * width, box[:, 1] - 0.1 * width
    points = [midpoint(hmap)]
    for _ in range(count - 1):
        points.append(lo + (hi - lo) * rng.random(hmap.m))
    return points

"""Deterministic synthetic images for demos and desk-scale checks."""
from __future__ import annotations

import numpy as np


def _grid(h, w):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return yy / max(h - 1, 1), xx / max(w - 1, 1)


def stripes(h=64, w=64, period=8.0, angle=0.5):
    y, x = _grid(h, w)
    phase = (x * w * np.cos(angle) + y * h * np.sin(angle)) * 2 * np.pi / period
    v = 0.5 + 0.35 * np.sin(phase)
    return np.stack([v, 0.8 * v + 0.1, 1.0 - 0.7 * v], axis=-1).clip(0, 1)


def checkerboard(h=64, w=64, cell=8):
    yy, xx = np.mgrid[0:h, 0:w]
    v = ((yy // cell + xx // cell) % 2).astype(np.float64)
    v = 0.2 + 0.6 * v
    return np.stack([v, v, v], axis=-1)


def disks(h=64, w=64):
    y, x = _grid(h, w)
    img = np.stack([0.3 + 0.4 * x, 0.3 + 0.4 * y, 0.6 - 0.3 * x], axis=-1)
    for cy, cx, r, col in [(0.3, 0.3, 0.18, (0.9, 0.2, 0.2)), (0.65, 0.7, 0.22, (0.1, 0.7, 0.3)),
                           (0.75, 0.25, 0.12, (0.95, 0.9, 0.2))]:
        m = (y - cy) ** 2 + (x - cx) ** 2 < r**2
        img[m] = col
    return img.clip(0, 1)


def rings(h=64, w=64, freq=6.0):
    y, x = _grid(h, w)
    r = np.sqrt((y - 0.5) ** 2 + (x - 0.5) ** 2)
    v = 0.5 + 0.4 * np.cos(2 * np.pi * freq * r)
    return np.stack([v, 0.5 + 0.3 * np.sin(2 * np.pi * freq * r), 0.6 * np.ones_like(v)], axis=-1).clip(0, 1)


def blobs(h=64, w=64, n=12, seed=0):
    """Smooth colored blobs on a gradient; seeded."""
    rng = np.random.default_rng(seed)
    y, x = _grid(h, w)
    img = np.stack([0.2 + 0.2 * y, 0.25 + 0.1 * x, 0.4 - 0.2 * y], axis=-1)
    for _ in range(n):
        cy, cx = rng.uniform(0, 1, 2)
        s = rng.uniform(0.05, 0.15)
        col = rng.uniform(0, 1, 3)
        g = np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * s**2))[..., None]
        img = img * (1 - g) + col * g
    return img.clip(0, 1)


def texture(h=64, w=96, cell=16, seed=0):
    """Tile-like texture: repeated rounded bumps with seeded jitter in color."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w, 3))
    for ty in range(0, h, cell):
        for tx in range(0, w, cell):
            cy, cx = ty + cell / 2 + rng.uniform(-2, 2), tx + cell / 2 + rng.uniform(-2, 2)
            r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
            bump = np.clip(1 - r / (cell * 0.45), 0, 1) ** 0.5
            col = np.array([0.8, 0.5, 0.2]) + rng.uniform(-0.15, 0.15, 3)
            img += bump[..., None] * col
    base = np.array([0.15, 0.2, 0.3])
    return np.clip(img + base * (img.sum(-1, keepdims=True) == 0), 0, 1)


def desk_set(size=64):
    """The five fixed clean images used for desk-scale restoration checks."""
    return {
        "stripes": stripes(size, size),
        "checkerboard": checkerboard(size, size),
        "disks": disks(size, size),
        "rings": rings(size, size),
        "blobs": blobs(size, size),
    }

"""Procedural 7-class texture dataset for desk-scale experiments.

Real cooking-state photos need the external challenge dataset; these
textures stand in for it wherever a test or demo needs learnable,
class-distinct images: horizontal/vertical stripes, checkerboard, dots,
diagonal ramp, concentric rings and speckle noise. Every sample carries
random phase/period/contrast jitter, a mild per-channel tint and additive
noise, so the classes are distinct but not trivially constant.
"""

from __future__ import annotations

import numpy as np

from .rng import Rng

TEXTURE_CLASSES = (
    "h_stripes", "v_stripes", "checker", "dots", "diag_ramp", "rings", "speckle",
)


def _texture(kind: int, size: int, gen: np.random.Generator) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    if kind == 0:  # horizontal stripes
        period = gen.uniform(4.0, 9.0)
        phase = gen.uniform(0, 2 * np.pi)
        base = np.sin(2 * np.pi * yy / period + phase)
    elif kind == 1:  # vertical stripes
        period = gen.uniform(4.0, 9.0)
        phase = gen.uniform(0, 2 * np.pi)
        base = np.sin(2 * np.pi * xx / period + phase)
    elif kind == 2:  # checkerboard
        cell = gen.integers(3, 7)
        oy, ox = gen.integers(0, cell, size=2)
        base = ((((yy + oy) // cell) + ((xx + ox) // cell)) % 2) * 2.0 - 1.0
    elif kind == 3:  # dot lattice
        spacing = gen.uniform(6.0, 10.0)
        oy, ox = gen.uniform(0, spacing, size=2)
        dy = (yy + oy) % spacing - spacing / 2
        dx = (xx + ox) % spacing - spacing / 2
        r2 = dy * dy + dx * dx
        base = np.exp(-r2 / (2 * (spacing / 5.0) ** 2)) * 2.0 - 1.0
    elif kind == 4:  # diagonal ramp
        angle = np.deg2rad(45.0 + gen.uniform(-15.0, 15.0)) * gen.choice([-1.0, 1.0])
        proj = np.cos(angle) * xx + np.sin(angle) * yy
        proj = proj - proj.min()
        base = proj / max(proj.max(), 1e-9) * 2.0 - 1.0
    elif kind == 5:  # concentric rings
        cy, cx = gen.uniform(0.3 * size, 0.7 * size, size=2)
        period = gen.uniform(5.0, 9.0)
        r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        base = np.sin(2 * np.pi * r / period)
    elif kind == 6:  # binary speckle
        density = gen.uniform(0.35, 0.65)
        base = (gen.random((size, size)) < density) * 2.0 - 1.0
    else:
        raise ValueError(f"texture kind {kind} out of range")
    return base


def make_texture_dataset(n: int = 700, size: int = 32, seed: int = 0,
                         noise: float = 45.0, contrast: tuple = (40.0, 85.0)):
    """Generate ``(images, labels)``: N x 3 x size x size in [0, 255], int labels.

    Classes are balanced (remainder spread over the first classes) and the
    whole set is deterministic in ``seed``. The default noise level and
    contrast range leave the classes learnable but genuinely ambiguous on a
    minority of samples, so careless overconfidence costs log-loss.
    """
    k = len(TEXTURE_CLASSES)
    rng = Rng(seed)
    counts = [n // k + (1 if i < n % k else 0) for i in range(k)]
    images = np.empty((n, 3, size, size), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    row = 0
    for cls, count in enumerate(counts):
        for j in range(count):
            gen = rng.stream(16, cls * 1_000_000 + j)
            base = _texture(cls, size, gen)
            amp = gen.uniform(*contrast)
            offset = gen.uniform(110.0, 150.0)
            tint = gen.uniform(0.82, 1.0, size=3)
            img = offset + amp * base[None, :, :] * tint[:, None, None]
            img = img + gen.normal(0.0, noise, size=img.shape)
            images[row] = np.clip(img, 0.0, 255.0)
            labels[row] = cls
            row += 1
    order = rng.stream(16, 999_999_937).permutation(n)
    return images[order], labels[order]

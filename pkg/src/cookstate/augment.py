"""Image augmentation: one composed affine map per image.

Sampled ingredients (rotation, horizontal/vertical shift, shear, zoom,
horizontal flip) compose into a single affine transform about the image
center, applied in the fixed order

    rotate( shear( zoom( flip( shift(p) ) ) ) )

and resampled with bilinear interpolation under the configured fill mode
("nearest" replicates edges, "zero" fills black). Positive rotation turns
the image counterclockwise on screen; zoom factors above 1 magnify. The
trigonometry snaps to exact values at quarter turns, so four forced
90-degree rotations compose to the identity on integer grids, and the
all-zero configuration is a bit-identical no-op.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError, DataError
from .tensor import default_dtype


@dataclass
class AugmentConfig:
    rotation_max_deg: float = 90.0
    width_shift_frac: float = 0.3
    height_shift_frac: float = 0.3
    horizontal_flip_prob: float = 0.3
    shear_frac: float = 0.3
    zoom_frac: float = 0.3
    fill_mode: str = "nearest"  # "nearest" | "zero"

    def __post_init__(self):
        for name in ("width_shift_frac", "height_shift_frac", "horizontal_flip_prob",
                     "shear_frac", "zoom_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 <= self.rotation_max_deg <= 180.0:
            raise ConfigError(f"rotation_max_deg must be in [0, 180], got {self.rotation_max_deg}")
        if self.fill_mode not in ("nearest", "zero"):
            raise ConfigError(f"fill_mode must be 'nearest' or 'zero', got {self.fill_mode!r}")

    @classmethod
    def zero(cls) -> "AugmentConfig":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class AffineParams:
    """One concrete draw of the augmentation ingredients."""

    rotation_deg: float = 0.0
    shift_x: float = 0.0  # pixels, content moves right for positive values
    shift_y: float = 0.0  # pixels, content moves down
    shear: float = 0.0
    zoom: float = 1.0
    flip: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def sample_params(config: AugmentConfig, gen: np.random.Generator, width: int,
                  height: int) -> AffineParams:
    """Draw one transform; the draw order is fixed for reproducibility."""
    rot = gen.uniform(-config.rotation_max_deg, config.rotation_max_deg)
    sx = gen.uniform(-config.width_shift_frac, config.width_shift_frac) * width
    sy = gen.uniform(-config.height_shift_frac, config.height_shift_frac) * height
    shear = gen.uniform(-config.shear_frac, config.shear_frac)
    zoom = gen.uniform(1.0 - config.zoom_frac, 1.0 + config.zoom_frac)
    flip = bool(gen.random() < config.horizontal_flip_prob)
    return AffineParams(float(rot), float(sx), float(sy), float(shear), float(zoom), flip)


def _exact_cos_sin(deg: float):
    # exact values at quarter turns keep 90-degree grid permutations exact
    q = deg % 360.0
    table = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}
    if q in table:
        return table[q]
    rad = np.deg2rad(deg)
    return float(np.cos(rad)), float(np.sin(rad))


def _forward_matrix(params: AffineParams):
    """2x2 linear part of the forward map on centered (x, y) coordinates."""
    c, s = _exact_cos_sin(params.rotation_deg)
    # y runs downward, so this matrix turns content counterclockwise on screen
    rot = np.array([[c, s], [-s, c]])
    shear = np.array([[1.0, params.shear], [0.0, 1.0]])
    zoom = np.array([[params.zoom, 0.0], [0.0, params.zoom]])
    flip = np.array([[-1.0 if params.flip else 1.0, 0.0], [0.0, 1.0]])
    return rot @ shear @ zoom @ flip


def apply_affine(image, params: AffineParams, fill_mode: str = "nearest") -> np.ndarray:
    """Resample ``image`` (C x H x W) under the transform; shape is preserved
    and the result stays within the raw [0, 255] range."""
    image = np.asarray(image)
    if image.ndim != 3:
        raise DataError(f"apply_affine expects C x H x W, got {image.shape}")
    _c, h, w = image.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    fwd = _forward_matrix(params)
    inv = np.linalg.inv(fwd)

    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    # invert: p_in = inv @ (p_out - center) + center - shift
    dx, dy = xx - cx, yy - cy
    src_x = inv[0, 0] * dx + inv[0, 1] * dy + cx - params.shift_x
    src_y = inv[1, 0] * dx + inv[1, 1] * dy + cy - params.shift_y

    img = image.astype(np.float64)
    if fill_mode == "nearest":
        src_x = np.clip(src_x, 0.0, w - 1.0)
        src_y = np.clip(src_y, 0.0, h - 1.0)
        x0 = np.floor(src_x).astype(np.int64)
        y0 = np.floor(src_y).astype(np.int64)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        wx = src_x - x0
        wy = src_y - y0
        out = (
            img[:, y0, x0] * (1 - wy) * (1 - wx)
            + img[:, y0, x1] * (1 - wy) * wx
            + img[:, y1, x0] * wy * (1 - wx)
            + img[:, y1, x1] * wy * wx
        )
    elif fill_mode == "zero":
        x0 = np.floor(src_x).astype(np.int64)
        y0 = np.floor(src_y).astype(np.int64)
        wx = src_x - x0
        wy = src_y - y0
        out = np.zeros_like(img)
        for oy, ox, wgt in (
            (y0, x0, (1 - wy) * (1 - wx)),
            (y0, x0 + 1, (1 - wy) * wx),
            (y0 + 1, x0, wy * (1 - wx)),
            (y0 + 1, x0 + 1, wy * wx),
        ):
            valid = (oy >= 0) & (oy < h) & (ox >= 0) & (ox < w)
            yc = np.clip(oy, 0, h - 1)
            xc = np.clip(ox, 0, w - 1)
            out += img[:, yc, xc] * (wgt * valid)
    else:
        raise ConfigError(f"fill_mode must be 'nearest' or 'zero', got {fill_mode!r}")
    return np.clip(out, 0.0, 255.0).astype(default_dtype())


def augment(image, config: AugmentConfig, gen: np.random.Generator) -> np.ndarray:
    """Sample one transform from ``config`` and apply it."""
    image = np.asarray(image)
    params = sample_params(config, gen, image.shape[2], image.shape[1])
    return apply_affine(image, params, config.fill_mode)

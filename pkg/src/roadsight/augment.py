"""Seeded stochastic augmentation: affine family, horizontal flip, cutout.

Operates on normalized H x W x 3 float tensors. Randomness comes from an
explicit numpy Generator (PCG64 via default_rng), so sequences are fully
reproducible from a seed within this implementation.

Draw order per sample is fixed: rotation, width shift, height shift, shear,
zoom, flip, then (inside cutout) the cutout gate and center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AugmentConfig:
    rotation_deg: float = 15.0
    width_shift: float = 0.1
    height_shift: float = 0.1
    shear_deg: float = 10.0
    zoom: float = 0.1
    hflip_prob: float = 0.5
    cutout_size: int = 40
    cutout_prob: float = 0.5

    def __post_init__(self) -> None:
        for name in ("rotation_deg", "width_shift", "height_shift", "shear_deg", "zoom"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("hflip_prob", "cutout_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0,1]")
        if self.cutout_size < 0:
            raise ValueError("cutout_size must be >= 0")

    def is_identity(self) -> bool:
        return (
            self.rotation_deg == 0
            and self.width_shift == 0
            and self.height_shift == 0
            and self.shear_deg == 0
            and self.zoom == 0
            and self.hflip_prob == 0
            and (self.cutout_size == 0 or self.cutout_prob == 0)
        )


IDENTITY = AugmentConfig(0, 0, 0, 0, 0, 0, 0, 0)


def sample_affine(
    cfg: AugmentConfig, rng: np.random.Generator, width: int, height: int
) -> tuple[np.ndarray, bool]:
    """Forward 2x3 affine matrix about the image center, plus a flip flag.

    Linear part composes zoom * rotate * shear; the translation shifts by a
    uniform fraction of each dimension.
    """
    angle = math.radians(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
    tx = rng.uniform(-cfg.width_shift, cfg.width_shift) * width
    ty = rng.uniform(-cfg.height_shift, cfg.height_shift) * height
    shear = math.radians(rng.uniform(-cfg.shear_deg, cfg.shear_deg))
    zoom = rng.uniform(1.0 - cfg.zoom, 1.0 + cfg.zoom)
    flip = bool(rng.random() < cfg.hflip_prob)

    cos_a, sin_a = math.cos(angle), math.sin(angle)
    rot = np.array([[cos_a, -sin_a], [sin_a, cos_a]])
    sh = np.array([[1.0, math.tan(shear)], [0.0, 1.0]])
    lin = (zoom * np.eye(2)) @ rot @ sh
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    # q = lin @ (p - c) + c + t
    trans = np.array([cx + tx, cy + ty]) - lin @ np.array([cx, cy])
    return np.hstack([lin, trans[:, None]]), flip


def apply_affine(tensor: np.ndarray, matrix: np.ndarray, flip: bool) -> np.ndarray:
    """Inverse-mapped bilinear sampling with edge replication.

    Flip is applied to the source first (x -> W-1-x), then the forward matrix;
    sampling therefore inverts the matrix and flips the source coordinate.
    """
    h, w = tensor.shape[0], tensor.shape[1]
    lin = matrix[:, :2]
    trans = matrix[:, 2]
    inv = np.linalg.inv(lin)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    q = np.stack([xs.ravel(), ys.ravel()])  # 2 x (H*W), output coords
    p = inv @ (q - trans[:, None])
    px, py = p[0], p[1]
    if flip:
        px = (w - 1) - px

    px = np.clip(px, 0.0, w - 1)
    py = np.clip(py, 0.0, h - 1)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (px - x0)[:, None]
    fy = (py - y0)[:, None]

    flat = tensor.reshape(h * w, -1).astype(np.float64)
    top = flat[y0 * w + x0] * (1 - fx) + flat[y0 * w + x1] * fx
    bot = flat[y1 * w + x0] * (1 - fx) + flat[y1 * w + x1] * fx
    out = top * (1 - fy) + bot * fy
    return out.reshape(tensor.shape).astype(tensor.dtype)


def cutout_coords(
    cfg: AugmentConfig, rng: np.random.Generator, width: int, height: int
) -> tuple[int, int, int, int] | None:
    """Seeded draw of the clipped cutout square, or None when gated off."""
    if cfg.cutout_size <= 0 or cfg.cutout_prob <= 0:
        return None
    if rng.random() >= cfg.cutout_prob:
        return None
    cx = int(rng.integers(0, width))
    cy = int(rng.integers(0, height))
    half = cfg.cutout_size // 2
    x0 = max(0, cx - half)
    y0 = max(0, cy - half)
    x1 = min(width, cx - half + cfg.cutout_size)
    y1 = min(height, cy - half + cfg.cutout_size)
    return x0, y0, x1, y1


def cutout(tensor: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Zero a random cutout square (clipped to bounds) with prob cutout_prob."""
    coords = cutout_coords(cfg, rng, tensor.shape[1], tensor.shape[0])
    if coords is None:
        return tensor
    x0, y0, x1, y1 = coords
    out = tensor.copy()
    out[y0:y1, x0:x1] = 0.0
    return out


def augment(tensor: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Full per-sample pipeline: affine + flip, then cutout."""
    if cfg.is_identity():
        return tensor
    matrix, flip = sample_affine(cfg, rng, tensor.shape[1], tensor.shape[0])
    out = apply_affine(tensor, matrix, flip)
    return cutout(out, cfg, rng)

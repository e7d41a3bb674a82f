"""Masked PSNR and SSIM for 8-bit images."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import correlate1d

from .images import Image

WINDOW = 11
SIGMA = 1.5
C1 = (0.01 * 255) ** 2
C2 = (0.03 * 255) ** 2
LUMA = np.array([0.299, 0.587, 0.114])


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    valid_pixel_count: int


def _arrays(a, b):
    da = a.data if isinstance(a, Image) else np.asarray(a)
    db = b.data if isinstance(b, Image) else np.asarray(b)
    if da.ndim == 2:
        da = da[..., None]
    if db.ndim == 2:
        db = db[..., None]
    if da.shape != db.shape:
        raise MetricError(f"image shapes differ: {da.shape} vs {db.shape}")
    return da.astype(np.float64), db.astype(np.float64)


def _mask(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    m = np.asarray(mask, dtype=bool)
    if m.shape != shape:
        raise MetricError(f"mask shape {m.shape} does not match image {shape}")
    return m


def psnr(a, b, mask=None) -> float:
    """10 log10(255^2 / MSE) over masked pixels and all channels; inf when identical."""
    da, db = _arrays(a, b)
    m = _mask(mask, da.shape[:2])
    if not m.any():
        raise MetricError("mask selects no pixels")
    mse = float(np.mean((da[m] - db[m]) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def luma(data) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 3 and data.shape[2] == 3:
        return data @ LUMA
    return data.reshape(data.shape[0], data.shape[1])


def _valid_filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only fully-inside windows."""
    half = len(g) // 2
    out = correlate1d(img, g, axis=0, mode="constant")
    out = correlate1d(out, g, axis=1, mode="constant")
    return out[half:img.shape[0] - half, half:img.shape[1] - half]


def ssim_map(a, b) -> np.ndarray:
    """Per-window SSIM on luma for every window fully inside the image."""
    da, db = _arrays(a, b)
    x, y = luma(da), luma(db)
    if min(x.shape) < WINDOW:
        raise MetricError(f"image smaller than the {WINDOW}x{WINDOW} SSIM window")
    g = gaussian_window()
    mu_x, mu_y = _valid_filter(x, g), _valid_filter(y, g)
    sxx = _valid_filter(x * x, g) - mu_x * mu_x
    syy = _valid_filter(y * y, g) - mu_y * mu_y
    sxy = _valid_filter(x * y, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + C1) * (2 * sxy + C2)
    den = (mu_x * mu_x + mu_y * mu_y + C1) * (sxx + syy + C2)
    return num / den


def window_mask(mask, shape) -> np.ndarray:
    """True for windows whose every pixel is inside ``mask``."""
    m = _mask(mask, shape).astype(np.float64)
    box = np.ones(WINDOW)
    counts = _valid_filter(m, box)
    return counts > WINDOW * WINDOW - 0.5


def ssim(a, b, mask=None) -> float:
    da, _ = _arrays(a, b)
    smap = ssim_map(a, b)
    wm = window_mask(mask, da.shape[:2])
    if not wm.any():
        raise MetricError("no SSIM window lies entirely inside the mask")
    return float(np.mean(smap[wm]))


def evaluate(a, b, mask=None) -> MetricReport:
    if mask is None:
        masks = [m for m in (getattr(a, "mask", None), getattr(b, "mask", None)) if m is not None]
        if masks:
            mask = np.logical_and.reduce(masks)
    da, _ = _arrays(a, b)
    m = _mask(mask, da.shape[:2])
    return MetricReport(psnr(a, b, m), ssim(a, b, m), int(m.sum()))

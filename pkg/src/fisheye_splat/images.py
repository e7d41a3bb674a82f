"""8-bit images with an optional per-pixel validity mask, plus PNG/PPM/PGM I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image as PILImage

SUPPORTED_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")


@dataclass
class Image:
    """Row-major 8-bit image, ``data`` shaped (H, W, C) with C in {1, 3}."""

    data: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[..., None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"image data must be (H, W, 1|3), got {data.shape}")
        if data.dtype != np.uint8:
            raise ValueError(f"image data must be uint8, got {data.dtype}")
        self.data = data
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != data.shape[:2]:
                raise ValueError(f"mask shape {mask.shape} does not match image {data.shape[:2]}")
            self.mask = mask

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def valid(self) -> np.ndarray:
        return np.ones((self.height, self.width), bool) if self.mask is None else self.mask

    @classmethod
    def from_float(cls, values, mask=None) -> "Image":
        """Quantize values in [0, 1] to 8 bits (round to nearest)."""
        q = np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
        return cls(q, mask)

    def to_float(self) -> np.ndarray:
        return self.data.astype(np.float64) / 255.0


def read_image(path) -> Image:
    path = Path(path)
    with PILImage.open(path) as im:
        if im.mode in ("L", "1", "I;16", "I"):
            arr = np.asarray(im.convert("L"))
        else:
            arr = np.asarray(im.convert("RGB"))
    return Image(np.ascontiguousarray(arr))


def write_image(image: Image, path) -> None:
    path = Path(path)
    arr = image.data[..., 0] if image.channels == 1 else image.data
    if path.suffix.lower() == ".pgm" and image.channels != 1:
        raise ValueError("PGM output requires a single-channel image")
    PILImage.fromarray(np.ascontiguousarray(arr)).save(path)


def read_mask(path) -> np.ndarray:
    return read_image(path).data[..., 0] >= 128


def write_mask(mask, path) -> None:
    write_image(Image(np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8)), path)

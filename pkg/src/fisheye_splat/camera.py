"""Fisheye and pinhole camera models.

All cameras share one radial form: a camera-frame point at incidence angle
``theta`` lands at normalized radius ``d(theta)`` from the principal point,

    EQUIDISTANT  d = theta
    POLYNOMIAL   d = theta + k1 theta^3 + k2 theta^5 + k3 theta^7 + k4 theta^9
    PINHOLE      d = tan(theta)

and pixel = (cx + fx d x / r, cy + fy d y / r) with r = hypot(x, y).
Pixel coordinates use the pixel-center convention: pixel (i, j) of an image
covers [j - 0.5, j + 0.5] x [i - 0.5, i + 0.5].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

_MONOTONE_SAMPLES = 4097
_INVERSE_TOL = 1e-12


class CameraError(ValueError):
    pass


class NonFiniteInputError(CameraError):
    pass


class DegeneratePointError(CameraError):
    pass


class OutOfFovError(CameraError):
    pass


class CameraModel(enum.Enum):
    EQUIDISTANT = "EQUIDISTANT"
    POLYNOMIAL = "POLYNOMIAL"
    PINHOLE = "PINHOLE"


class Ray(NamedTuple):
    """Unit viewing direction(s) in the camera frame and incidence angle(s)."""

    direction: np.ndarray
    theta: np.ndarray


def fov_to_focal(fov_deg: float, image_radius_px: float) -> float:
    """Equidistant focal length mapping theta = fov/2 onto the image-circle radius."""
    if not 0 < fov_deg <= 360:
        raise CameraError(f"fov_deg must lie in (0, 360], got {fov_deg}")
    if not image_radius_px > 0:
        raise CameraError(f"image radius must be positive, got {image_radius_px}")
    return image_radius_px / math.radians(fov_deg / 2.0)


@dataclass(frozen=True)
class FisheyeCamera:
    model: CameraModel
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    fov_deg: float
    k: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        model = CameraModel(self.model)
        object.__setattr__(self, "model", model)
        k = tuple(float(v) for v in self.k)
        if len(k) != 4:
            raise CameraError("exactly four distortion coefficients k1..k4 are required")
        object.__setattr__(self, "k", k)
        for name in ("fx", "fy", "cx", "cy", "fov_deg"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise NonFiniteInputError(f"{name} is not finite")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

        if self.fx <= 0 or self.fy <= 0:
            raise CameraError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise CameraError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise CameraError("principal point must lie inside the image")
        if not 0 < self.theta_max <= math.pi:
            raise CameraError(f"fov_deg={self.fov_deg} gives theta_max outside (0, pi]")
        if model is not CameraModel.POLYNOMIAL and any(k):
            raise CameraError(f"{model.value} camera must have zero distortion coefficients")
        if model is CameraModel.PINHOLE and self.theta_max >= math.pi / 2:
            raise CameraError("pinhole cameras cannot reach theta >= pi/2 (fov >= 180 deg)")

        theta = np.linspace(0.0, self.theta_max, _MONOTONE_SAMPLES)
        if not np.all(np.diff(self.radial(theta)) > 0):
            raise CameraError(
                f"radial distortion d(theta) is not strictly increasing on [0, {self.theta_max:.6g}]"
            )

    # -- construction helpers -------------------------------------------------

    @classmethod
    def equidistant(cls, width: int, height: int, fov_deg: float) -> "FisheyeCamera":
        """Ideal equidistant camera whose fov circle is inscribed in the frame."""
        f = fov_to_focal(fov_deg, min(width, height) / 2.0)
        return cls(CameraModel.EQUIDISTANT, f, f, (width - 1) / 2.0, (height - 1) / 2.0,
                   width, height, fov_deg)

    def masked(self, *names: str) -> "FisheyeCamera":
        """Copy with the named coefficients (``"k1"`` .. ``"k4"``) forced to zero."""
        k = list(self.k)
        for name in names:
            if name not in ("k1", "k2", "k3", "k4"):
                raise CameraError(f"unknown distortion coefficient {name!r}")
            k[int(name[1]) - 1] = 0.0
        return replace(self, k=tuple(k))

    def as_equidistant(self) -> "FisheyeCamera":
        return replace(self, model=CameraModel.EQUIDISTANT, k=(0.0, 0.0, 0.0, 0.0))

    # -- radial model -----------------------------------------------------------

    @property
    def theta_max(self) -> float:
        return math.radians(self.fov_deg / 2.0)

    @property
    def r_max(self) -> float:
        """Normalized radius d(theta_max) of the fov circle."""
        return float(self.radial(np.float64(self.theta_max)))

    def radial(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if self.model is CameraModel.EQUIDISTANT:
            return theta.copy()
        if self.model is CameraModel.PINHOLE:
            return np.tan(theta)
        k1, k2, k3, k4 = self.k
        t2 = theta * theta
        return theta * (1 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))))

    def radial_derivative(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if self.model is CameraModel.EQUIDISTANT:
            return np.ones_like(theta)
        if self.model is CameraModel.PINHOLE:
            return 1.0 / np.cos(theta) ** 2
        k1, k2, k3, k4 = self.k
        t2 = theta * theta
        return 1 + t2 * (3 * k1 + t2 * (5 * k2 + t2 * (7 * k3 + t2 * 9 * k4)))

    def inverse_radial(self, rd):
        """theta with d(theta) = rd, clamped to [0, theta_max]."""
        rd = np.asarray(rd, dtype=np.float64)
        if self.model is CameraModel.EQUIDISTANT:
            return np.clip(rd, 0.0, self.theta_max)
        if self.model is CameraModel.PINHOLE:
            return np.clip(np.arctan(rd), 0.0, self.theta_max)
        return self._invert_polynomial(rd)

    def _invert_polynomial(self, rd):
        # Bracketed Newton: d is strictly increasing on [0, theta_max], so the
        # bracket shrinks every step and bisection takes over if Newton escapes it.
        lo = np.zeros_like(rd)
        hi = np.full_like(rd, self.theta_max)
        theta = np.clip(rd, lo, hi)
        for _ in range(100):
            f = self.radial(theta) - rd
            lo = np.where(f < 0, theta, lo)
            hi = np.where(f > 0, theta, hi)
            step = f / self.radial_derivative(theta)
            cand = theta - step
            outside = (cand <= lo) | (cand >= hi)
            cand = np.where(outside, 0.5 * (lo + hi), cand)
            done = (np.abs(cand - theta) < _INVERSE_TOL) | (f == 0)
            theta = np.where(f == 0, theta, cand)
            if np.all(done):
                break
        return np.clip(theta, 0.0, self.theta_max)

    # -- projection -------------------------------------------------------------

    def in_bounds(self, pixels) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=np.float64)
        u, v = pixels[..., 0], pixels[..., 1]
        return (u >= -0.5) & (u <= self.width - 0.5) & (v >= -0.5) & (v <= self.height - 0.5)

    def project(self, points):
        """Project camera-frame point(s) of shape (..., 3).

        Returns ``(pixels, valid)``; ``pixels`` has shape (..., 2). Points past
        theta_max or landing outside the frame come back with ``valid=False``.
        """
        p = np.asarray(points, dtype=np.float64)
        if p.shape[-1] != 3:
            raise CameraError(f"expected points of shape (..., 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise NonFiniteInputError("cannot project non-finite points")
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        r = np.hypot(x, y)
        if np.any((r == 0) & (z == 0)):
            raise DegeneratePointError("the zero vector has no viewing direction")
        theta = np.arctan2(r, z)
        valid = theta <= self.theta_max
        if self.model is CameraModel.PINHOLE:
            valid &= theta < math.pi / 2
        # Past theta_max the fisheye polynomials stay finite and are kept for
        # diagnostics; tan() is meaningless behind the pinhole plane.
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(r > 0, self.radial(theta) / np.where(r > 0, r, 1.0), 0.0)
        pixels = np.stack([self.cx + self.fx * scale * x, self.cy + self.fy * scale * y], axis=-1)
        if self.model is CameraModel.PINHOLE:
            pixels[~valid] = np.nan
        valid = valid & self.in_bounds(pixels) & np.all(np.isfinite(pixels), axis=-1)
        return pixels, valid

    def jacobian(self, points) -> np.ndarray:
        """Analytic 2x3 Jacobian d(pixel)/d(point), shape (..., 2, 3)."""
        p = np.asarray(points, dtype=np.float64)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        r2 = x * x + y * y
        r = np.sqrt(r2)
        rho2 = r2 + z * z
        theta = np.arctan2(r, z)
        d = self.radial(theta)
        dd = self.radial_derivative(theta)
        J = np.zeros(p.shape[:-1] + (2, 3))
        on_axis = r == 0
        rs = np.where(on_axis, 1.0, r)
        # For r > 0:
        #   du/dx = fx (d y^2 / r^3 + d' z x^2 / (r^2 rho^2))
        #   du/dy = fx x y (d' z / (r^2 rho^2) - d / r^3)
        #   du/dz = -fx x d' / rho^2
        a = d / rs**3
        b = dd * z / (rs**2 * rho2)
        J[..., 0, 0] = self.fx * (a * y * y + b * x * x)
        J[..., 0, 1] = self.fx * x * y * (b - a)
        J[..., 0, 2] = -self.fx * x * dd / rho2
        J[..., 1, 0] = self.fy * x * y * (b - a)
        J[..., 1, 1] = self.fy * (a * x * x + b * y * y)
        J[..., 1, 2] = -self.fy * y * dd / rho2
        if np.any(on_axis):
            # Limit on the optical axis: d(theta)/r -> d'(0) / z = 1 / z.
            zs = np.where(on_axis, z, 1.0)
            J[..., 0, 0] = np.where(on_axis, self.fx / zs, J[..., 0, 0])
            J[..., 1, 1] = np.where(on_axis, self.fy / zs, J[..., 1, 1])
            for i, j in ((0, 1), (0, 2), (1, 0), (1, 2)):
                J[..., i, j] = np.where(on_axis, 0.0, J[..., i, j])
        return J

    def backproject(self, pixels):
        """Unit rays for pixel(s) (..., 2) plus a validity mask; never raises on fov."""
        px = np.asarray(pixels, dtype=np.float64)
        if not np.all(np.isfinite(px)):
            raise NonFiniteInputError("cannot unproject non-finite pixels")
        mx = (px[..., 0] - self.cx) / self.fx
        my = (px[..., 1] - self.cy) / self.fy
        rd = np.hypot(mx, my)
        valid = (rd <= self.r_max * (1 + 1e-12)) & self.in_bounds(px)
        theta = self.inverse_radial(rd)
        s = np.sin(theta)
        with np.errstate(invalid="ignore", divide="ignore"):
            ux = np.where(rd > 0, mx / rd, 0.0)
            uy = np.where(rd > 0, my / rd, 0.0)
        direction = np.stack([s * ux, s * uy, np.cos(theta)], axis=-1)
        return Ray(direction, theta), valid

    def unproject(self, pixels) -> Ray:
        ray, valid = self.backproject(pixels)
        if not np.all(valid):
            raise OutOfFovError(f"{np.size(valid) - np.count_nonzero(valid)} pixel(s) outside the field of view")
        return ray

    # -- serialization ----------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"model = {self.model.value}"]
        for name in ("fx", "fy", "cx", "cy"):
            lines.append(f"{name} = {getattr(self, name)!r}")
        for i, kv in enumerate(self.k, start=1):
            lines.append(f"k{i} = {kv!r}")
        lines += [f"width = {self.width}", f"height = {self.height}", f"fov_deg = {self.fov_deg!r}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FisheyeCamera":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                key, sep, value = line.partition(":")
            if not sep:
                raise CameraError(f"line {lineno}: expected 'key = value', got {raw!r}")
            values[key.strip().lower()] = value.strip()
        required = ("model", "fx", "fy", "cx", "cy", "width", "height", "fov_deg")
        missing = [k for k in required if k not in values]
        if missing:
            raise CameraError(f"camera block is missing keys: {', '.join(missing)}")
        unknown = set(values) - set(required) - {"k1", "k2", "k3", "k4"}
        if unknown:
            raise CameraError(f"unknown camera keys: {', '.join(sorted(unknown))}")
        try:
            model = CameraModel(values["model"].upper())
        except ValueError:
            raise CameraError(f"unknown camera model {values['model']!r}") from None
        try:
            return cls(
                model=model,
                fx=float(values["fx"]), fy=float(values["fy"]),
                cx=float(values["cx"]), cy=float(values["cy"]),
                width=int(values["width"]), height=int(values["height"]),
                fov_deg=float(values["fov_deg"]),
                k=tuple(float(values.get(f"k{i}", 0.0)) for i in range(1, 5)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, CameraError):
                raise
            raise CameraError(f"bad camera value: {exc}") from None


def project(camera: FisheyeCamera, points):
    return camera.project(points)


def unproject(camera: FisheyeCamera, pixels) -> Ray:
    return camera.unproject(pixels)


def read_camera_file(path) -> FisheyeCamera:
    return FisheyeCamera.from_text(Path(path).read_text())


def write_camera_file(camera: FisheyeCamera, path) -> None:
    Path(path).write_text(camera.to_text())


class AffineCamera:
    """Orthographic-style test camera: pixel = A @ p + b, always valid.

    Used as a linear reference: any moment-propagation scheme must be exact
    through it.
    """

    def __init__(self, A, b=(0.0, 0.0)):
        self.A = np.asarray(A, dtype=np.float64).reshape(2, 3)
        self.b = np.asarray(b, dtype=np.float64).reshape(2)

    def project(self, points):
        p = np.asarray(points, dtype=np.float64)
        if not np.all(np.isfinite(p)):
            raise NonFiniteInputError("cannot project non-finite points")
        return p @ self.A.T + self.b, np.ones(p.shape[:-1], dtype=bool)

    def jacobian(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return np.broadcast_to(self.A, p.shape[:-1] + (2, 3)).copy()

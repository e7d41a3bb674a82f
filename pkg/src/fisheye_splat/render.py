"""Tile-based forward rasterizer for projected Gaussians.

Gaussians are projected with the chosen backend, sorted front to back and
binned into screen-space tiles using the bounding box of their
``extent_sigmas`` ellipse. Each pixel then composites

    C = sum_i c_i a_i prod_{j<i} (1 - a_j),   a_i = min(0.99, o_i exp(-d^T S^-1 d / 2))

until the transmittance would drop below ``min_transmittance``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .camera import FisheyeCamera
from .geometry import Pose
from .images import Image
from .scene_io import DepthGrid
from .splat import COV2D_BLUR, Gaussian3D, GaussianCloud, UTConfig, project_batch

log = logging.getLogger(__name__)


class Backend(str, enum.Enum):
    EWA = "ewa"
    UT = "ut"


@dataclass(frozen=True)
class RenderConfig:
    backend: Backend = Backend.EWA
    tile_size: int = 16
    alpha_threshold: float = 1.0 / 255.0
    extent_sigmas: float = 3.0
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    max_alpha: float = 0.99
    min_transmittance: float = 1e-4
    blur: float = COV2D_BLUR
    ut: UTConfig = field(default_factory=UTConfig)

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))
        if self.tile_size < 1:
            raise ValueError("tile_size must be >= 1")
        if self.extent_sigmas <= 0:
            raise ValueError("extent_sigmas must be positive")


@dataclass
class Rasterization:
    color: np.ndarray  # (H, W, 3) float in [0, 1]
    depth: np.ndarray  # (H, W) expected distance, NaN where uncovered
    alpha: np.ndarray  # (H, W) accumulated opacity
    mask: np.ndarray  # (H, W) pixel inside the camera's fov
    n_visible: int
    n_skipped: int


def _as_cloud(gaussians) -> GaussianCloud:
    if isinstance(gaussians, GaussianCloud):
        return gaussians
    if isinstance(gaussians, Gaussian3D):
        return GaussianCloud.from_list([gaussians])
    return GaussianCloud.from_list(gaussians)


def rasterize(gaussians, pose: Pose, cam: FisheyeCamera, cfg: RenderConfig = RenderConfig()) -> Rasterization:
    cloud = _as_cloud(gaussians)
    H, W = cam.height, cam.width
    jj, ii = np.meshgrid(np.arange(W, dtype=np.float64), np.arange(H, dtype=np.float64))
    _, mask = cam.backproject(np.stack([jj, ii], axis=-1))

    color = np.zeros((H, W, 3))
    depth_sum = np.zeros((H, W))
    transmittance = np.ones((H, W))
    n_skipped = 0
    n_visible = 0

    if len(cloud):
        proj = project_batch(cloud, pose, cam, cfg.backend.value, cfg.ut, cfg.blur)
        cov = proj.cov2d
        det = cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] * cov[:, 1, 0]
        finite = np.all(np.isfinite(cov.reshape(len(cloud), -1)), axis=1) & np.all(np.isfinite(proj.mean2d), axis=1)
        invertible = finite & (det > 0) & (cov[:, 0, 0] > 0)
        bad = proj.valid & ~invertible
        n_skipped = int(np.count_nonzero(bad))
        if n_skipped:
            log.warning("skipping %d Gaussians with non-invertible 2D covariance", n_skipped)
        keep = np.flatnonzero(proj.valid & invertible)
        order = keep[np.argsort(proj.depth[keep], kind="stable")]
        n_visible = len(order)
        if n_visible:
            _composite(cloud, proj, order, cfg, H, W, color, depth_sum, transmittance)

    alpha = 1.0 - transmittance
    bg = np.asarray(cfg.background, dtype=np.float64)
    color = color + transmittance[..., None] * bg
    with np.errstate(invalid="ignore", divide="ignore"):
        depth = np.where(alpha >= 1e-3, depth_sum / alpha, np.nan)
    color[~mask] = bg
    depth[~mask] = np.nan
    alpha[~mask] = 0.0
    return Rasterization(color, depth, alpha, mask, n_visible, n_skipped)


def _composite(cloud, proj, order, cfg, H, W, color, depth_sum, transmittance):
    ts = cfg.tile_size
    mean = proj.mean2d[order]
    cov = proj.cov2d[order]
    det = cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] ** 2
    conic = np.stack([cov[:, 1, 1] / det, -cov[:, 0, 1] / det, cov[:, 0, 0] / det], axis=1)
    opacity = cloud.opacity[order]
    rgb = cloud.color[order]
    dist = proj.depth[order]

    # Exact bounding box of the extent ellipse.
    hx = cfg.extent_sigmas * np.sqrt(cov[:, 0, 0])
    hy = cfg.extent_sigmas * np.sqrt(cov[:, 1, 1])
    n_tx, n_ty = -(-W // ts), -(-H // ts)
    tx0 = np.clip(np.floor((mean[:, 0] - hx) / ts), 0, n_tx).astype(int)
    tx1 = np.clip(np.floor((mean[:, 0] + hx) / ts) + 1, 0, n_tx).astype(int)
    ty0 = np.clip(np.floor((mean[:, 1] - hy) / ts), 0, n_ty).astype(int)
    ty1 = np.clip(np.floor((mean[:, 1] + hy) / ts) + 1, 0, n_ty).astype(int)

    bins: dict[int, list[int]] = {}
    for g in range(len(order)):
        for ty in range(ty0[g], ty1[g]):
            for tx in range(tx0[g], tx1[g]):
                bins.setdefault(ty * n_tx + tx, []).append(g)

    cutoff = cfg.extent_sigmas ** 2
    for tile, members in bins.items():
        ty, tx = divmod(tile, n_tx)
        y0, x0 = ty * ts, tx * ts
        y1, x1 = min(y0 + ts, H), min(x0 + ts, W)
        yy, xx = np.mgrid[y0:y1, x0:x1]
        px = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64)
        g = np.asarray(members)  # already front to back
        d = px[:, None, :] - mean[g][None, :, :]
        a, b, c = conic[g, 0], conic[g, 1], conic[g, 2]
        power = a * d[..., 0] ** 2 + 2 * b * d[..., 0] * d[..., 1] + c * d[..., 1] ** 2
        alpha = np.minimum(cfg.max_alpha, opacity[g] * np.exp(-0.5 * power))
        alpha[(power > cutoff) | (alpha < cfg.alpha_threshold)] = 0.0

        t_prev = transmittance[y0:y1, x0:x1].reshape(-1, 1)
        t_after = t_prev * np.cumprod(1.0 - alpha, axis=1)
        t_before = np.concatenate([t_prev, t_after[:, :-1]], axis=1)
        included = t_after >= cfg.min_transmittance  # prefix along each row: t_after is non-increasing
        w = np.where(included, alpha * t_before, 0.0)

        color[y0:y1, x0:x1] += (w @ rgb[g]).reshape(y1 - y0, x1 - x0, 3)
        depth_sum[y0:y1, x0:x1] += (w @ dist[g]).reshape(y1 - y0, x1 - x0)
        t_final = np.where(included, 1.0 - alpha, 1.0).prod(axis=1) * t_prev[:, 0]
        transmittance[y0:y1, x0:x1] = t_final.reshape(y1 - y0, x1 - x0)


def render(gaussians, pose: Pose, cam: FisheyeCamera, cfg: RenderConfig = RenderConfig()) -> Image:
    """Render an 8-bit RGB image plus the fov validity mask."""
    r = rasterize(gaussians, pose, cam, cfg)
    return Image.from_float(r.color, mask=r.mask)


def render_depth(gaussians, pose: Pose, cam: FisheyeCamera, cfg: RenderConfig = RenderConfig()) -> DepthGrid:
    """Alpha-weighted expected distance from the camera center per pixel."""
    r = rasterize(gaussians, pose, cam, cfg)
    return DepthGrid(r.depth.astype(np.float32))

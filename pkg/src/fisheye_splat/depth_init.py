"""Dense point-cloud initialization from a few monocular fisheye depth maps.

Pipeline: unproject each depth grid into its camera frame, fuse the views
with their (predicted-frame) poses, estimate the similarity that maps the
predicted frame onto the COLMAP frame from camera correspondences, apply it
and subsample to a point budget.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .camera import FisheyeCamera
from .geometry import Pose, rotation_angle
from .images import Image
from .scene_io import DepthGrid, Frame, PointCloud
from .warp import bilinear_sample

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 2_130_000
DEFAULT_STRIDE = 2


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityTransform:
    """p -> s R p + t."""

    s: float
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not self.s > 0:
            raise ValueError("similarity scale must be positive")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9 or np.linalg.det(R) < 0:
            raise ValueError("R must be a proper rotation")
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        return self.s * np.asarray(points, dtype=np.float64) @ self.R.T + self.t

    def compose(self, inner: "SimilarityTransform") -> "SimilarityTransform":
        """self after inner."""
        return SimilarityTransform(self.s * inner.s, self.R @ inner.R, self.s * self.R @ inner.t + self.t)

    def inverse(self) -> "SimilarityTransform":
        return SimilarityTransform(1.0 / self.s, self.R.T, -(self.R.T @ self.t) / self.s)

    def transform_pose(self, pose: Pose) -> Pose:
        """Express a world-to-camera pose of the source frame in the target frame.

        Camera-frame coordinates are rescaled by ``s`` so depths stay consistent.
        """
        R_new = pose.R @ self.R.T
        t_new = self.s * pose.t_vec - R_new @ self.t
        return Pose.from_rt(R_new, t_new, image_name=pose.image_name,
                            camera_id=pose.camera_id, image_id=pose.image_id)


def unproject_depth(grid: DepthGrid, cam: FisheyeCamera, image: Optional[Image] = None,
                    stride: int = 1, z_depth: bool = False) -> PointCloud:
    """Lift valid depth pixels to 3-D points in the camera frame.

    ``grid`` may be the camera resolution divided by an integer factor; grid
    pixels then map to the centers of the camera-pixel blocks they cover.
    Ray directions stored in the grid take precedence over the camera model.
    With ``z_depth`` the values are read as distances along the optical axis.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    fx, rx = divmod(cam.width, grid.width)
    fy, ry = divmod(cam.height, grid.height)
    if rx or ry or fx != fy or fx < 1:
        raise ValueError(
            f"depth grid {grid.width}x{grid.height} does not match camera {cam.width}x{cam.height} "
            "or an integer downscale of it"
        )
    factor = fx
    ii, jj = np.mgrid[0:grid.height:stride, 0:grid.width:stride]
    depth = grid.values[ii, jj].astype(np.float64)
    u = jj * factor + (factor - 1) / 2.0
    v = ii * factor + (factor - 1) / 2.0
    pixels = np.stack([u, v], axis=-1)

    if grid.rays is not None:
        dirs = grid.rays[ii, jj].astype(np.float64)
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        valid = np.isfinite(depth) & np.all(np.isfinite(dirs), axis=-1)
    else:
        ray, valid = cam.backproject(pixels)
        dirs = ray.direction
        valid &= np.isfinite(depth)
    if z_depth:
        with np.errstate(divide="ignore", invalid="ignore"):
            depth = depth / dirs[..., 2]
        valid &= np.isfinite(depth) & (depth > 0)

    points = depth[valid][:, None] * dirs[valid]
    colors = None
    if image is not None:
        if (image.width, image.height) != (cam.width, cam.height):
            raise ValueError("color image size does not match the camera")
        px = pixels[valid]
        rgb, _ = bilinear_sample(image, px[:, 0], px[:, 1])
        colors = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
        if colors.shape[1] == 1:
            colors = np.repeat(colors, 3, axis=1)
    return PointCloud(points, colors, Frame.CAMERA)


def fuse_clouds(clouds: Sequence[PointCloud], poses: Sequence[Pose]) -> PointCloud:
    """Map camera-frame clouds to the world with p = R^T (p_cam - t) and concatenate."""
    if len(clouds) != len(poses):
        raise ValueError(f"{len(clouds)} clouds but {len(poses)} poses")
    if not clouds:
        return PointCloud.empty(Frame.PRED_WORLD)
    positions = [pose.to_world(c.positions) for c, pose in zip(clouds, poses)]
    with_colors = all(c.colors is not None for c in clouds)
    colors = np.concatenate([c.colors for c in clouds]) if with_colors else None
    return PointCloud(np.concatenate(positions), colors, Frame.PRED_WORLD)


def umeyama_align(source, target) -> SimilarityTransform:
    """Least-squares similarity with target ~= s R source + t (Umeyama 1991)."""
    src = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(src) != len(tgt):
        raise AlignmentError(f"correspondence counts differ ({len(src)} vs {len(tgt)})")
    if len(src) < 3:
        raise AlignmentError("at least 3 correspondences are required")
    mu_s, mu_t = src.mean(axis=0), tgt.mean(axis=0)
    ds, dt = src - mu_s, tgt - mu_t
    sv = np.linalg.svd(ds, compute_uv=False)
    if sv[0] == 0 or sv[1] <= 1e-10 * sv[0]:
        raise AlignmentError("source points are collinear or coincident")
    cov = dt.T @ ds / len(src)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    var_s = (ds ** 2).sum() / len(src)
    s = float(np.trace(np.diag(D) @ S) / var_s)
    t = mu_t - s * R @ mu_s
    return SimilarityTransform(s, R, t)


def apply_similarity(cloud: PointCloud, T: SimilarityTransform) -> PointCloud:
    return PointCloud(T.apply(cloud.positions), cloud.colors, Frame.COLMAP)


def downsample(cloud: PointCloud, target_count: int, seed: int = 0) -> PointCloud:
    """Uniform random subset of ``target_count`` points (original order kept)."""
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    if len(cloud) <= target_count:
        return cloud
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(cloud), size=target_count, replace=False))
    colors = cloud.colors[keep] if cloud.colors is not None else None
    return PointCloud(cloud.positions[keep], colors, cloud.frame)


def pose_correspondences(poses: Sequence[Pose]) -> np.ndarray:
    """Camera centers plus the three camera-axis tips of every view.

    Axis tips sit at ``center + L R^T e_i``, with L the RMS spread of the
    centers around their mean (1 for a single view), so the point set scales
    with the frame and a similarity maps one set onto the other exactly.
    """
    centers = np.array([p.center for p in poses])
    spread = float(np.sqrt(((centers - centers.mean(axis=0)) ** 2).sum(axis=1).mean()))
    length = spread if spread > 1e-12 else 1.0
    pts = []
    for pose, c in zip(poses, centers):
        pts.append(c)
        pts.extend(c + length * pose.R)  # rows of R are the camera axes in world coordinates
    return np.array(pts)


def align_poses(pred_poses: Sequence[Pose], colmap_poses: Sequence[Pose]):
    """Similarity from the predicted frame to COLMAP, plus its RMS residual."""
    if len(pred_poses) != len(colmap_poses):
        raise AlignmentError("need one COLMAP pose per predicted pose")
    if not pred_poses:
        raise AlignmentError("no poses to align")
    if len(pred_poses) == 1:
        log.warning("single view: scale is unobservable, alignment uses the camera axes only")
    src = pose_correspondences(pred_poses)
    tgt = pose_correspondences(colmap_poses)
    T = umeyama_align(src, tgt)
    residual = float(np.sqrt(((T.apply(src) - tgt) ** 2).sum(axis=1).mean()))
    return T, residual


@dataclass
class DepthInitResult:
    cloud: PointCloud
    transform: SimilarityTransform
    residual: float
    fused_count: int
    per_view_counts: list[int]


def init_from_depth(grids: Sequence[DepthGrid], cameras: Sequence[FisheyeCamera],
                    pred_poses: Sequence[Pose], colmap_poses: Sequence[Pose],
                    images: Optional[Sequence[Optional[Image]]] = None,
                    budget: int = DEFAULT_BUDGET, stride: int = DEFAULT_STRIDE,
                    seed: int = 0, z_depth: bool = False) -> DepthInitResult:
    if not (len(grids) == len(cameras) == len(pred_poses) == len(colmap_poses)):
        raise ValueError("grids, cameras and poses must have equal lengths")
    images = list(images) if images is not None else [None] * len(grids)
    clouds = [unproject_depth(g, c, img, stride, z_depth) for g, c, img in zip(grids, cameras, images)]
    fused = fuse_clouds(clouds, pred_poses)
    T, residual = align_poses(pred_poses, colmap_poses)
    aligned = apply_similarity(fused, T)
    final = downsample(aligned, budget, seed)
    return DepthInitResult(final, T, residual, len(fused), [len(c) for c in clouds])


def transform_error(estimated: SimilarityTransform, truth: SimilarityTransform):
    """(|ds|, rotation angle between the two, |dt|)."""
    return (abs(estimated.s - truth.s),
            rotation_angle(estimated.R.T @ truth.R),
            float(np.linalg.norm(estimated.t - truth.t)))

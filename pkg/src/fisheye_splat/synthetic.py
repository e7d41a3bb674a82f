"""Synthetic scenes and images used by tests, scripts and the CLI fixtures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import FisheyeCamera, write_camera_file
from .depth_init import SimilarityTransform
from .geometry import Pose, random_rotation, rotmat_to_quat
from .images import Image, write_image
from .render import RenderConfig, rasterize
from .scene_io import DepthGrid, SparseModel, write_colmap_text, write_depth_grid, write_gaussians_ply
from .splat import GaussianCloud


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _tangent_frames(normals: np.ndarray) -> np.ndarray:
    """Rotation matrices whose third column is the given unit normal."""
    helper = np.where(np.abs(normals[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    t1 = np.cross(helper, normals)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(normals, t1)
    return np.stack([t1, t2, normals], axis=2)


def smooth_color(directions: np.ndarray) -> np.ndarray:
    """Low-frequency RGB field over the unit sphere, values in [0.1, 0.9]."""
    d = directions
    return 0.5 + 0.4 * np.stack([
        np.sin(2.0 * d[:, 0] + 0.3),
        np.cos(1.5 * d[:, 1] - 0.2 * d[:, 2]),
        np.sin(1.7 * d[:, 2] + d[:, 0]),
    ], axis=1)


def sphere_scene(n: int = 3000, radius: float = 5.0, center=(0.0, 0.0, 0.0),
                 disc_sigma: float | None = None, thickness: float = 1e-3,
                 opacity: float = 0.9) -> GaussianCloud:
    """Flat Gaussian discs tiling a sphere, oriented tangentially.

    Viewed from near the center this covers every direction, including
    rays behind the image plane of a >180 deg fisheye.
    """
    dirs = fibonacci_sphere(n)
    spacing = radius * math.sqrt(4.0 * math.pi / n)
    sigma = 0.6 * spacing if disc_sigma is None else disc_sigma
    frames = _tangent_frames(dirs)
    rot = np.array([rotmat_to_quat(R) for R in frames])
    return GaussianCloud(
        mu=np.asarray(center, dtype=np.float64) + radius * dirs,
        scale=np.tile([sigma, sigma, thickness], (n, 1)),
        rot=rot,
        opacity=np.full(n, opacity),
        color=smooth_color(dirs),
    )


def central_object_scene(n: int = 300, distance: float = 4.0, extent: float = 0.6,
                         seed: int = 0) -> GaussianCloud:
    """A blob of Gaussians on the optical axis in front of the camera."""
    rng = np.random.default_rng(seed)
    offsets = rng.normal(size=(n, 3)) * extent / 2.0
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianCloud(
        mu=offsets + [0.0, 0.0, distance],
        scale=rng.uniform(0.04, 0.12, size=(n, 3)),
        rot=q,
        opacity=rng.uniform(0.4, 0.9, size=n),
        color=rng.uniform(0.1, 0.9, size=(n, 3)),
    )


def smooth_image(width: int, height: int, channels: int = 3, period: float = 48.0) -> Image:
    """Low-frequency test pattern; bilinear resampling is accurate on it."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    chans = [
        0.5 + 0.4 * np.sin(2 * math.pi * xx / period) * np.cos(2 * math.pi * yy / (1.3 * period)),
        0.5 + 0.4 * np.cos(2 * math.pi * (xx + yy) / (1.7 * period)),
        0.5 + 0.4 * np.sin(2 * math.pi * (xx - 0.5 * yy) / (2.1 * period)),
    ]
    return Image.from_float(np.stack(chans[:channels], axis=-1))


@dataclass
class TwoViewFixture:
    """A sphere scene seen by two cameras near its center, with the depth
    grids expressed in a deliberately perturbed "predicted" frame."""

    scene: GaussianCloud
    camera: FisheyeCamera
    colmap_poses: list
    pred_poses: list
    pred_to_colmap: SimilarityTransform
    depth_grids: list
    images: list
    radius: float


def two_view_fixture(size: int = 128, fov_deg: float = 200.0, n: int = 6000, radius: float = 5.0,
                     baseline: float = 0.02, scale: float = 1.7, seed: int = 0) -> TwoViewFixture:
    rng = np.random.default_rng(seed)
    scene = sphere_scene(n, radius)
    cam = FisheyeCamera.equidistant(size, size, fov_deg)
    centers = [np.array([-baseline, 0.0, 0.0]), np.array([baseline, 0.0, 0.0])]
    colmap = [Pose.look_from(c, random_rotation(rng), image_name=f"view{i}.png", image_id=i + 1)
              for i, c in enumerate(centers)]
    colmap_to_pred = SimilarityTransform(scale, random_rotation(rng), rng.normal(size=3))
    pred = [colmap_to_pred.transform_pose(p) for p in colmap]
    grids, images = [], []
    for pose in colmap:
        r = rasterize(scene, pose, cam, RenderConfig())
        grids.append(DepthGrid((r.depth * scale).astype(np.float32)))
        images.append(Image.from_float(r.color, r.mask))
    return TwoViewFixture(scene, cam, colmap, pred, colmap_to_pred.inverse(), grids, images, radius)


def write_fixture(fx: TwoViewFixture, directory) -> dict:
    """Lay the fixture out on disk the way the CLI consumes it; returns the paths."""
    d = Path(directory)
    (d / "images").mkdir(parents=True, exist_ok=True)
    (d / "depth").mkdir(exist_ok=True)
    write_colmap_text(SparseModel({1: fx.camera}, list(fx.colmap_poses)), d / "colmap")
    pred_dir = d / "pred"
    write_colmap_text(SparseModel({1: fx.camera}, list(fx.pred_poses)), pred_dir)
    write_camera_file(fx.camera, d / "camera.txt")
    write_gaussians_ply(fx.scene, d / "scene.ply")
    depth_paths = []
    for pose, grid, img in zip(fx.colmap_poses, fx.depth_grids, fx.images):
        write_image(img, d / "images" / pose.image_name)
        path = d / "depth" / (Path(pose.image_name).stem + ".fdg")
        write_depth_grid(grid, path)
        depth_paths.append(path)
    return {
        "colmap": d / "colmap", "pred_poses": pred_dir / "images.txt", "camera": d / "camera.txt",
        "scene": d / "scene.ply", "images": d / "images", "depth": depth_paths,
        "names": [p.image_name for p in fx.colmap_poses],
    }

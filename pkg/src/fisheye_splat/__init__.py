"""Fisheye 3D Gaussian splatting: camera models, EWA and unscented projection,
a tile rasterizer, angular image warps and depth-based initialization."""

from .camera import (AffineCamera, CameraError, CameraModel, FisheyeCamera, OutOfFovError, Ray,
                     fov_to_focal, project, unproject)
from .depth_init import (SimilarityTransform, align_poses, apply_similarity, downsample, fuse_clouds,
                         init_from_depth, umeyama_align, unproject_depth)
from .geometry import Pose
from .images import Image, read_image, write_image
from .metrics import MetricReport, evaluate, psnr, ssim
from .render import Backend, RenderConfig, rasterize, render, render_depth
from .scene_io import (DepthGrid, Frame, PointCloud, SparseModel, read_colmap_text, read_depth_grid,
                       read_ply, write_colmap_text, write_depth_grid, write_ply)
from .splat import Gaussian3D, GaussianCloud, UTConfig, mc_project, project_ewa, project_ut, sigma_points
from .warp import convert_model, reduce_fov

__version__ = "0.1.0"

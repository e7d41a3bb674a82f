"""Readers and writers for the interchange formats the pipeline consumes.

* COLMAP text models (cameras.txt / images.txt / points3D.txt)
* PLY point clouds and Gaussian sets (ascii 1.0, binary_little_endian 1.0)
* FDG1 depth grids: b"FDG1", u32 width, u32 height, u8 has_rays, then
  width*height float32 distances and optionally width*height*3 float32 ray
  directions, all little-endian, row-major.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import plyfile

from .camera import CameraError, CameraModel, FisheyeCamera
from .geometry import Pose

# -- point clouds ----------------------------------------------------------------


class Frame(str, enum.Enum):
    CAMERA = "CAMERA"
    PRED_WORLD = "PRED_WORLD"
    COLMAP = "COLMAP"


@dataclass
class PointCloud:
    positions: np.ndarray
    colors: Optional[np.ndarray] = None
    frame: Frame = Frame.COLMAP

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("point positions must be finite")
        if self.colors is not None:
            colors = np.asarray(self.colors)
            if colors.shape != self.positions.shape:
                raise ValueError(f"colors shape {colors.shape} does not match positions {self.positions.shape}")
            self.colors = colors.astype(np.uint8)
        self.frame = Frame(self.frame)

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def empty(cls, frame: Frame = Frame.COLMAP, with_colors: bool = False) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), np.uint8) if with_colors else None, frame)


# -- depth grids -----------------------------------------------------------------

FDG_MAGIC = b"FDG1"
_FDG_HEADER = struct.Struct("<4sIIB")


class DepthGridFormatError(ValueError):
    pass


@dataclass
class DepthGrid:
    """Per-pixel distance along the pixel's unit ray; NaN marks invalid pixels."""

    values: np.ndarray
    rays: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ValueError(f"depth values must be 2-D, got {values.shape}")
        self.values = values
        finite = np.isfinite(values)
        if np.any(values[finite] <= 0):
            raise ValueError("valid depths must be positive (encode invalid pixels as NaN)")
        if self.rays is not None:
            rays = np.asarray(self.rays, dtype=np.float32)
            if rays.shape != values.shape + (3,):
                raise ValueError(f"ray grid shape {rays.shape} does not match {values.shape + (3,)}")
            norms = np.linalg.norm(rays.astype(np.float64), axis=-1)
            ok = np.isfinite(norms)
            if np.any(np.abs(norms[ok] - 1.0) > 1e-6):
                raise ValueError("ray directions must be unit length")
            self.rays = rays

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def write_depth_grid(grid: DepthGrid, path) -> None:
    header = _FDG_HEADER.pack(FDG_MAGIC, grid.width, grid.height, int(grid.rays is not None))
    with open(path, "wb") as f:
        f.write(header)
        f.write(grid.values.astype("<f4").tobytes())
        if grid.rays is not None:
            f.write(grid.rays.astype("<f4").tobytes())


def read_depth_grid(path) -> DepthGrid:
    raw = Path(path).read_bytes()
    if len(raw) < _FDG_HEADER.size:
        raise DepthGridFormatError(f"{path}: truncated header")
    magic, width, height, has_rays = _FDG_HEADER.unpack_from(raw)
    if magic != FDG_MAGIC:
        raise DepthGridFormatError(f"{path}: bad magic {magic!r}")
    if has_rays not in (0, 1):
        raise DepthGridFormatError(f"{path}: has_rays flag must be 0 or 1, got {has_rays}")
    n = width * height
    expected = _FDG_HEADER.size + 4 * n * (4 if has_rays else 1)
    if len(raw) != expected:
        kind = "truncated payload" if len(raw) < expected else "trailing bytes after payload"
        raise DepthGridFormatError(f"{path}: {kind} ({len(raw)} bytes, expected {expected})")
    payload = np.frombuffer(raw, dtype="<f4", offset=_FDG_HEADER.size)
    values = payload[:n].reshape(height, width).astype(np.float32)
    rays = payload[n:].reshape(height, width, 3).astype(np.float32) if has_rays else None
    return DepthGrid(values, rays)


# -- PLY -------------------------------------------------------------------------


class PlyFormatError(ValueError):
    pass


_GAUSSIAN_PROPS = ("x", "y", "z", "scale_0", "scale_1", "scale_2",
                   "rot_0", "rot_1", "rot_2", "rot_3", "opacity", "red", "green", "blue")


def _read_vertices(path) -> np.ndarray:
    try:
        ply = plyfile.PlyData.read(str(path))
    except (plyfile.PlyParseError, ValueError, EOFError) as exc:
        raise PlyFormatError(f"{path}: {exc}") from None
    names = [el.name for el in ply.elements]
    if names != ["vertex"]:
        raise PlyFormatError(f"{path}: expected a single 'vertex' element, found {names}")
    vertex = ply["vertex"]
    for prop in vertex.properties:
        if isinstance(prop, plyfile.PlyListProperty):
            raise PlyFormatError(f"{path}: list property {prop.name!r} is not supported")
    return vertex.data


def _write_vertices(data: np.ndarray, path, binary: bool) -> None:
    el = plyfile.PlyElement.describe(data, "vertex")
    plyfile.PlyData([el], text=not binary, byte_order="<").write(str(path))


def write_ply(cloud: PointCloud, path, binary: bool = True) -> None:
    dtype = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if cloud.colors is not None:
        dtype += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    data = np.empty(len(cloud), dtype=dtype)
    for i, axis in enumerate("xyz"):
        data[axis] = cloud.positions[:, i]
    if cloud.colors is not None:
        for i, ch in enumerate(("red", "green", "blue")):
            data[ch] = cloud.colors[:, i]
    _write_vertices(data, path, binary)


def read_ply(path, frame: Frame = Frame.COLMAP) -> PointCloud:
    data = _read_vertices(path)
    fields = data.dtype.names or ()
    if not all(a in fields for a in "xyz"):
        raise PlyFormatError(f"{path}: vertex element lacks x/y/z properties")
    positions = np.stack([data[a].astype(np.float64) for a in "xyz"], axis=1)
    colors = None
    rgb = ("red", "green", "blue")
    if any(c in fields for c in rgb):
        if not all(c in fields for c in rgb):
            raise PlyFormatError(f"{path}: incomplete red/green/blue properties")
        colors = np.stack([data[c] for c in rgb], axis=1)
        if colors.dtype != np.uint8:
            raise PlyFormatError(f"{path}: colors must be uchar, got {colors.dtype}")
    return PointCloud(positions, colors, frame)


def write_gaussians_ply(cloud, path, binary: bool = True) -> None:
    """Gaussian set as float32 vertex properties; scales are stored unactivated."""
    data = np.empty(len(cloud), dtype=[(p, "<f4") for p in _GAUSSIAN_PROPS])
    columns = np.concatenate([cloud.mu, cloud.scale, cloud.rot, cloud.opacity[:, None], cloud.color], axis=1)
    for i, name in enumerate(_GAUSSIAN_PROPS):
        data[name] = columns[:, i]
    _write_vertices(data, path, binary)


def read_gaussians_ply(path):
    from .splat import GaussianCloud

    data = _read_vertices(path)
    fields = data.dtype.names or ()
    missing = [p for p in _GAUSSIAN_PROPS if p not in fields]
    if missing:
        raise PlyFormatError(f"{path}: Gaussian PLY lacks properties {missing}")
    cols = {p: data[p].astype(np.float64) for p in _GAUSSIAN_PROPS}
    rot = np.stack([cols[f"rot_{i}"] for i in range(4)], axis=1)
    norms = np.linalg.norm(rot, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise PlyFormatError(f"{path}: zero rotation quaternion")
    return GaussianCloud(
        mu=np.stack([cols[a] for a in "xyz"], axis=1),
        scale=np.stack([cols[f"scale_{i}"] for i in range(3)], axis=1),
        rot=rot / norms,
        opacity=cols["opacity"],
        color=np.stack([cols[c] for c in ("red", "green", "blue")], axis=1),
    )


# -- COLMAP text model -----------------------------------------------------------


class ColmapFormatError(ValueError):
    pass


class UnknownCameraModelError(ColmapFormatError):
    pass


@dataclass
class SparseModel:
    cameras: dict[int, FisheyeCamera] = field(default_factory=dict)
    poses: list[Pose] = field(default_factory=list)
    points: PointCloud = field(default_factory=lambda: PointCloud.empty(with_colors=True))
    point_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    point_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        n = len(self.points)
        self.point_ids = np.asarray(self.point_ids, dtype=np.int64).reshape(-1)
        self.point_errors = np.asarray(self.point_errors, dtype=np.float64).reshape(-1)
        if n and not len(self.point_ids):
            self.point_ids = np.arange(1, n + 1, dtype=np.int64)
        if n and not len(self.point_errors):
            self.point_errors = np.zeros(n)
        if len(self.point_ids) != n or len(self.point_errors) != n:
            raise ValueError("point ids/errors must match the point count")
        for pose in self.poses:
            if pose.camera_id not in self.cameras:
                raise ColmapFormatError(
                    f"image {pose.image_name!r} references missing camera id {pose.camera_id}"
                )

    def pose_by_name(self, name: str) -> Pose:
        for pose in self.poses:
            if pose.image_name == name:
                return pose
        available = ", ".join(sorted(p.image_name for p in self.poses)) or "(none)"
        raise KeyError(f"image {name!r} not in COLMAP model; available: {available}")

    def camera_for(self, pose: Pose) -> FisheyeCamera:
        return self.cameras[pose.camera_id]


_META_TAG = "# FISHEYE_SPLAT_CAMERA"


def _fov_from_frame(model: CameraModel, fx, fy, cx, cy, width, height, k) -> float:
    """Full fov (degrees) of the circle inscribed in the image frame."""
    radius = min(cx + 0.5, cy + 0.5, width - 0.5 - cx, height - 0.5 - cy)
    rn = radius / max(fx, fy)
    if model is CameraModel.PINHOLE:
        return 2.0 * math.degrees(math.atan(rn))
    theta = np.linspace(0.0, math.pi, 200_001)
    t2 = theta * theta
    d = theta * (1 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))))
    rising = np.flatnonzero(np.diff(d) <= 0)
    stop = rising[0] if len(rising) else len(theta) - 1
    th = float(np.interp(rn, d[: stop + 1], theta[: stop + 1]))
    # stay strictly inside the monotone range so camera validation passes
    th = min(th, theta[max(stop - 1, 1)])
    return 2.0 * math.degrees(th)


def _camera_from_colmap(model_name, width, height, params, meta, lineno) -> FisheyeCamera:
    if model_name == "OPENCV_FISHEYE":
        if len(params) != 8:
            raise ColmapFormatError(f"cameras.txt line {lineno}: OPENCV_FISHEYE needs 8 params, got {len(params)}")
        fx, fy, cx, cy = params[:4]
        k = tuple(params[4:])
        model = CameraModel.POLYNOMIAL
    elif model_name == "PINHOLE":
        if len(params) != 4:
            raise ColmapFormatError(f"cameras.txt line {lineno}: PINHOLE needs 4 params, got {len(params)}")
        fx, fy, cx, cy = params
        k = (0.0,) * 4
        model = CameraModel.PINHOLE
    elif model_name == "SIMPLE_PINHOLE":
        if len(params) != 3:
            raise ColmapFormatError(f"cameras.txt line {lineno}: SIMPLE_PINHOLE needs 3 params, got {len(params)}")
        fx, cx, cy = params
        fy = fx
        k = (0.0,) * 4
        model = CameraModel.PINHOLE
    else:
        raise UnknownCameraModelError(f"cameras.txt line {lineno}: unsupported camera model {model_name!r}")
    if meta.get("model") == "EQUIDISTANT" and not any(k):
        model = CameraModel.EQUIDISTANT
    fov = meta.get("fov_deg")
    fov = float(fov) if fov is not None else _fov_from_frame(model, fx, fy, cx, cy, width, height, k)
    try:
        return FisheyeCamera(model, fx, fy, cx, cy, width, height, fov, k)
    except CameraError as exc:
        raise ColmapFormatError(f"cameras.txt line {lineno}: {exc}") from None


def _data_lines(path: Path):
    if not path.is_file():
        raise FileNotFoundError(f"COLMAP model file not found: {path}")
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            yield lineno, line.rstrip("\n").rstrip("\r")


def _floats(tokens, path, lineno):
    try:
        values = [float(t) for t in tokens]
    except ValueError:
        raise ColmapFormatError(f"{path.name} line {lineno}: expected numbers, got {' '.join(tokens)!r}") from None
    if not all(math.isfinite(v) for v in values):
        raise ColmapFormatError(f"{path.name} line {lineno}: non-finite value")
    return values


def _ints(tokens, path, lineno):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ColmapFormatError(f"{path.name} line {lineno}: expected integers, got {' '.join(tokens)!r}") from None


def _read_cameras(path: Path) -> dict[int, FisheyeCamera]:
    meta: dict[int, dict] = {}
    rows = []
    for lineno, line in _data_lines(path):
        s = line.strip()
        if s.startswith(_META_TAG):
            tokens = s[len(_META_TAG):].split()
            if not tokens:
                raise ColmapFormatError(f"{path.name} line {lineno}: empty camera metadata")
            (cam_id,) = _ints(tokens[:1], path, lineno)
            entry = meta.setdefault(cam_id, {})
            for tok in tokens[1:]:
                key, sep, value = tok.partition("=")
                if not sep:
                    raise ColmapFormatError(f"{path.name} line {lineno}: bad metadata token {tok!r}")
                entry[key] = value
            continue
        if not s or s.startswith("#"):
            continue
        tokens = s.split()
        if len(tokens) < 4:
            raise ColmapFormatError(f"{path.name} line {lineno}: expected 'ID MODEL WIDTH HEIGHT PARAMS...'")
        rows.append((lineno, tokens))
    cameras = {}
    for lineno, tokens in rows:
        cam_id, width, height = _ints([tokens[0], tokens[2], tokens[3]], path, lineno)
        params = _floats(tokens[4:], path, lineno)
        if cam_id in cameras:
            raise ColmapFormatError(f"{path.name} line {lineno}: duplicate camera id {cam_id}")
        cameras[cam_id] = _camera_from_colmap(tokens[1], width, height, params, meta.get(cam_id, {}), lineno)
    return cameras


def _read_images(path: Path) -> list[Pose]:
    poses = []
    pending = None
    for lineno, line in _data_lines(path):
        if pending is not None:
            poses.append(pending)  # this line holds the 2D observations, which are skipped
            pending = None
            continue
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        tokens = s.split()
        if len(tokens) < 10:
            raise ColmapFormatError(f"{path.name} line {lineno}: expected 'ID QW QX QY QZ TX TY TZ CAMERA_ID NAME'")
        (image_id,) = _ints(tokens[:1], path, lineno)
        values = _floats(tokens[1:8], path, lineno)
        (camera_id,) = _ints(tokens[8:9], path, lineno)
        try:
            pending = Pose(tuple(values[:4]), tuple(values[4:7]), " ".join(tokens[9:]), camera_id, image_id)
        except ValueError as exc:
            raise ColmapFormatError(f"{path.name} line {lineno}: {exc}") from None
    if pending is not None:
        raise ColmapFormatError(f"{path.name}: truncated, image {pending.image_name!r} lacks its observation line")
    return poses


def _read_points(path: Path):
    ids, xyz, rgb, err = [], [], [], []
    for lineno, line in _data_lines(path):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        tokens = s.split()
        if len(tokens) < 8 or (len(tokens) - 8) % 2:
            raise ColmapFormatError(f"{path.name} line {lineno}: expected 'ID X Y Z R G B ERROR TRACK[]'")
        (pid,) = _ints(tokens[:1], path, lineno)
        xyz.append(_floats(tokens[1:4], path, lineno))
        color = _ints(tokens[4:7], path, lineno)
        if not all(0 <= c <= 255 for c in color):
            raise ColmapFormatError(f"{path.name} line {lineno}: color out of 0..255")
        rgb.append(color)
        err.append(_floats(tokens[7:8], path, lineno)[0])
        ids.append(pid)
    positions = np.array(xyz, dtype=np.float64).reshape(-1, 3)
    colors = np.array(rgb, dtype=np.uint8).reshape(-1, 3)
    return PointCloud(positions, colors, Frame.COLMAP), np.array(ids, dtype=np.int64), np.array(err)


def read_poses_text(path) -> list[Pose]:
    """Poses from a standalone COLMAP-style images.txt (e.g. a predicted-frame export)."""
    return _read_images(Path(path))


def read_colmap_text(directory) -> SparseModel:
    d = Path(directory)
    cameras = _read_cameras(d / "cameras.txt")
    poses = _read_images(d / "images.txt")
    points, ids, errors = _read_points(d / "points3D.txt")
    return SparseModel(cameras, poses, points, ids, errors)


def _colmap_camera_line(cam_id: int, cam: FisheyeCamera) -> str:
    if cam.model is CameraModel.PINHOLE:
        name, params = "PINHOLE", (cam.fx, cam.fy, cam.cx, cam.cy)
    else:
        name, params = "OPENCV_FISHEYE", (cam.fx, cam.fy, cam.cx, cam.cy) + cam.k
    return " ".join([str(cam_id), name, str(cam.width), str(cam.height)] + [repr(float(p)) for p in params])


def write_colmap_text(model: SparseModel, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = [
        "# Camera list with one line of data per camera:",
        "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]",
        f"# Number of cameras: {len(model.cameras)}",
    ]
    for cam_id, cam in sorted(model.cameras.items()):
        lines.append(f"{_META_TAG} {cam_id} model={cam.model.value} fov_deg={cam.fov_deg!r}")
    for cam_id, cam in sorted(model.cameras.items()):
        lines.append(_colmap_camera_line(cam_id, cam))
    (d / "cameras.txt").write_text("\n".join(lines) + "\n")

    lines = [
        "# Image list with two lines of data per image:",
        "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
        "#   POINTS2D[] as (X, Y, POINT3D_ID)",
        f"# Number of images: {len(model.poses)}, mean observations per image: 0",
    ]
    for pose in model.poses:
        nums = " ".join(repr(float(v)) for v in pose.q + pose.t)
        lines.append(f"{pose.image_id} {nums} {pose.camera_id} {pose.image_name}")
        lines.append("")
    (d / "images.txt").write_text("\n".join(lines) + "\n")

    lines = [
        "# 3D point list with one line of data per point:",
        "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)",
        f"# Number of points: {len(model.points)}, mean track length: 0",
    ]
    colors = model.points.colors
    if colors is None:
        colors = np.zeros((len(model.points), 3), np.uint8)
    for pid, p, c, e in zip(model.point_ids, model.points.positions, colors, model.point_errors):
        xyz = " ".join(repr(float(v)) for v in p)
        lines.append(f"{pid} {xyz} {c[0]} {c[1]} {c[2]} {float(e)!r}")
    (d / "points3D.txt").write_text("\n".join(lines) + "\n")

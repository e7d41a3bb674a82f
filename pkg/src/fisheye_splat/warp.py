"""Angular reprojection of fisheye images (field-of-view reduction, model conversion).

Every warp is an inverse map: each destination pixel is unprojected through
the destination camera, re-projected through the source camera and the
source is sampled bilinearly there. Destination pixels without a valid
source lookup are black and masked out.
"""

from __future__ import annotations

import numpy as np

from .camera import FisheyeCamera
from .images import Image


_SNAP = 1e-9


class WarpError(ValueError):
    pass


def bilinear_sample(img: Image, x, y, border: float = 0.0):
    """Sample ``img`` at sub-pixel positions.

    Returns ``(values, valid)`` with values shaped (N, C) as floats on the
    0..255 scale. Positions outside [0, W-1] x [0, H-1] are invalid unless
    they lie within ``border`` pixels of that box, in which case they are
    clamped onto it. When the image carries a mask, a sample is valid only
    if every neighbour with non-zero weight is valid.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    H, W = img.height, img.width
    finite = np.isfinite(x) & np.isfinite(y)
    xs, ys = np.where(finite, x, 0.0), np.where(finite, y, 0.0)
    valid = finite & (xs >= -border) & (xs <= W - 1 + border) & (ys >= -border) & (ys <= H - 1 + border)
    xs = np.clip(xs, 0, W - 1)
    ys = np.clip(ys, 0, H - 1)
    # snap round-off so exact grid hits do not touch masked neighbours
    xs = np.where(np.abs(xs - np.rint(xs)) < _SNAP, np.rint(xs), xs)
    ys = np.where(np.abs(ys - np.rint(ys)) < _SNAP, np.rint(ys), ys)
    x0 = np.minimum(np.floor(xs).astype(np.intp), max(W - 2, 0))
    y0 = np.minimum(np.floor(ys).astype(np.intp), max(H - 2, 0))
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = (xs - x0)[:, None]
    fy = (ys - y0)[:, None]
    data = img.data.astype(np.float64)
    values = ((1 - fy) * ((1 - fx) * data[y0, x0] + fx * data[y0, x1])
              + fy * ((1 - fx) * data[y1, x0] + fx * data[y1, x1]))
    if img.mask is not None:
        m = img.mask
        fxs, fys = fx[:, 0], fy[:, 0]
        ok = (m[y0, x0] | ((fxs == 1) | (fys == 1))) \
            & (m[y0, x1] | (fxs == 0) | (fys == 1)) \
            & (m[y1, x0] | (fxs == 1) | (fys == 0)) \
            & (m[y1, x1] | (fxs == 0) | (fys == 0))
        valid &= ok
    values[~valid] = 0.0
    return values, valid


def warp_map(src_cam: FisheyeCamera, dst_cam: FisheyeCamera):
    """Source pixel coordinates for every destination pixel.

    Returns ``(map_x, map_y, valid)``, each shaped (dst H, dst W).
    """
    jj, ii = np.meshgrid(np.arange(dst_cam.width, dtype=np.float64),
                         np.arange(dst_cam.height, dtype=np.float64))
    ray, ok_dst = dst_cam.backproject(np.stack([jj, ii], axis=-1))
    src_px, ok_src = src_cam.project(ray.direction)
    valid = ok_dst & ok_src
    return src_px[..., 0], src_px[..., 1], valid


def remap(src: Image, map_x, map_y, valid) -> Image:
    shape = np.shape(map_x)
    values, ok = bilinear_sample(src, map_x, map_y, border=0.5)
    ok &= np.asarray(valid).ravel()
    values[~ok] = 0.0
    out = np.clip(np.rint(values), 0, 255).astype(np.uint8)
    return Image(out.reshape(shape + (src.channels,)), mask=ok.reshape(shape))


def _check_source(src: Image, src_cam: FisheyeCamera) -> None:
    if (src.width, src.height) != (src_cam.width, src_cam.height):
        raise WarpError(
            f"image is {src.width}x{src.height} but camera expects {src_cam.width}x{src_cam.height}"
        )


def convert_model(src: Image, src_cam: FisheyeCamera, dst_cam: FisheyeCamera) -> Image:
    """Resample ``src`` (seen by ``src_cam``) as ``dst_cam`` would see it.

    Both cameras share the optical center; only the projection changes.
    """
    _check_source(src, src_cam)
    if dst_cam.theta_max > src_cam.theta_max + 1e-12:
        raise WarpError(
            f"destination fov {dst_cam.fov_deg} deg exceeds source fov {src_cam.fov_deg} deg"
        )
    return remap(src, *warp_map(src_cam, dst_cam))


def reduce_fov(src: Image, src_cam: FisheyeCamera, target_fov_deg: float):
    """Reproject to a narrower equidistant fov at the same resolution.

    The output camera is centered, with focal length chosen so that
    target_fov/2 reaches the inscribed image circle.
    """
    _check_source(src, src_cam)
    if target_fov_deg > src_cam.fov_deg:
        raise WarpError(f"target fov {target_fov_deg} deg exceeds source fov {src_cam.fov_deg} deg")
    dst_cam = FisheyeCamera.equidistant(src_cam.width, src_cam.height, target_fov_deg)
    return remap(src, *warp_map(src_cam, dst_cam)), dst_cam


def fisheye_gs_preprocess(src: Image, src_cam: FisheyeCamera, drop=("k1",)) -> tuple[Image, FisheyeCamera]:
    """Reproject a polynomial capture into the ideal equidistant camera with the
    same intrinsics, treating the coefficients in ``drop`` as zero."""
    modeled = src_cam.masked(*drop)
    dst_cam = src_cam.as_equidistant()
    return convert_model(src, modeled, dst_cam), dst_cam

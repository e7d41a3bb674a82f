import math

import numpy as np
import pytest

from fisheye_splat.camera import CameraModel, FisheyeCamera
from fisheye_splat.geometry import IDENTITY_POSE
from fisheye_splat.metrics import psnr
from fisheye_splat.render import Backend, RenderConfig, rasterize, render, render_depth
from fisheye_splat.splat import Gaussian3D, GaussianCloud
from fisheye_splat.synthetic import central_object_scene, sphere_scene

CAM = FisheyeCamera.equidistant(64, 64, 200.0)
ODD = FisheyeCamera(CameraModel.EQUIDISTANT, 20.0, 20.0, 32.0, 32.0, 65, 65, 200.0)


def _blob(z=2.0, opacity=0.8, color=(0.2, 0.6, 1.0), s=0.1):
    return Gaussian3D((0.0, 0.0, z), (s, s, s), opacity=opacity, color=color)


def _reference_composite(gs, cam, cfg):
    """Per-pixel loop over sorted Gaussians, EWA backend."""
    from fisheye_splat.splat import project_ewa
    proj = [project_ewa(g, IDENTITY_POSE, cam, cfg.blur) for g in gs]
    order = sorted(range(len(gs)), key=lambda i: proj[i].depth)
    out = np.zeros((cam.height, cam.width, 3))
    for v in range(cam.height):
        for u in range(cam.width):
            T = 1.0
            for i in order:
                p = proj[i]
                if not p.valid:
                    continue
                d = np.array([u, v]) - p.mean2d
                power = d @ np.linalg.inv(p.cov2d) @ d
                if power > cfg.extent_sigmas ** 2:
                    continue
                a = min(cfg.max_alpha, gs[i].opacity * math.exp(-0.5 * power))
                if a < cfg.alpha_threshold:
                    continue
                if T * (1 - a) < cfg.min_transmittance:
                    break
                out[v, u] += np.array(gs[i].color) * a * T
                T *= 1 - a
            out[v, u] += T * np.array(cfg.background)
    return out


def test_empty_scene_is_background():
    cfg = RenderConfig(background=(0.1, 0.2, 0.3))
    r = rasterize([], IDENTITY_POSE, CAM, cfg)
    assert np.allclose(r.color[r.mask], [0.1, 0.2, 0.3])
    assert np.isnan(render_depth([], IDENTITY_POSE, CAM).values).all()


def test_single_gaussian_center_value():
    g = _blob()
    img = rasterize([g], IDENTITY_POSE, ODD, RenderConfig())
    np.testing.assert_allclose(img.color[32, 32], 0.8 * np.array(g.color), atol=1e-12)
    assert np.array_equal(render([g], IDENTITY_POSE, ODD).data[32, 32], np.rint(0.8 * np.array(g.color) * 255))


def test_full_occlusion():
    near = _blob(1.0, opacity=1.0, color=(1, 0, 0))
    far = _blob(2.0, opacity=1.0, color=(0, 1, 0), s=0.2)
    r = rasterize([far, near], IDENTITY_POSE, ODD)
    # alpha clamps at 0.99, so 1% of the far Gaussian leaks through
    np.testing.assert_allclose(r.color[32, 32], [0.99, 0.01 * 0.99, 0.0], atol=1e-12)
    d = render_depth([far, near], IDENTITY_POSE, ODD).values
    assert d[32, 32] == pytest.approx((0.99 * 1.0 + 0.0099 * 2.0) / 0.9999, rel=1e-6)


def test_opaque_depth_on_axis():
    d = render_depth([_blob(5.0, opacity=1.0, s=0.3)], IDENTITY_POSE, ODD).values
    assert d[32, 32] == pytest.approx(5.0, rel=0.01)


def test_matches_per_pixel_reference(rng):
    gs = [Gaussian3D(tuple(rng.normal(size=3) * [0.6, 0.6, 0.2] + [0, 0, 2.5]), tuple(rng.uniform(0.05, 0.3, 3)),
                     tuple(_unit(rng)),
                     float(rng.uniform(0.3, 1.0)), tuple(rng.uniform(0, 1, 3))) for _ in range(12)]
    cfg = RenderConfig(background=(0.05, 0.1, 0.0))
    cam = FisheyeCamera.equidistant(24, 24, 200.0)
    ours = rasterize(gs, IDENTITY_POSE, cam, cfg)
    ref = _reference_composite(gs, cam, cfg)
    np.testing.assert_allclose(ours.color[ours.mask], ref[ours.mask], atol=1e-9)


def _unit(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def test_outside_fov_is_background_and_masked():
    cam = FisheyeCamera.equidistant(32, 32, 120.0)
    r = rasterize(sphere_scene(500), IDENTITY_POSE, cam)
    assert not r.mask[0, 0] and r.mask[16, 16]
    assert np.all(r.color[~r.mask] == 0)
    assert np.isnan(r.depth[~r.mask]).all()


@pytest.mark.parametrize("backend", list(Backend))
def test_tile_size_invisible(backend):
    scene = sphere_scene(800)
    imgs = [rasterize(scene, IDENTITY_POSE, CAM, RenderConfig(backend=backend, tile_size=t)).color
            for t in (8, 16, 32, 5)]
    for im in imgs[1:]:
        np.testing.assert_allclose(im, imgs[0], atol=1e-12)


def test_permutation_invariance(rng):
    scene = central_object_scene(60, seed=2)
    perm = rng.permutation(len(scene))
    a = rasterize(scene, IDENTITY_POSE, CAM).color
    b = rasterize(scene.subset(perm), IDENTITY_POSE, CAM).color
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_stable_sort_on_tied_depth():
    red = Gaussian3D((0.0, 0.0, 2.0), (0.1, 0.1, 0.1), opacity=0.5, color=(1, 0, 0))
    blue = Gaussian3D((0.0, 0.0, 2.0), (0.1, 0.1, 0.1), opacity=0.5, color=(0, 0, 1))
    c = rasterize([red, blue], IDENTITY_POSE, ODD).color[32, 32]
    np.testing.assert_allclose(c, [0.5, 0, 0.25])


def test_opacity_monotone():
    weights = [rasterize([_blob(opacity=o)], IDENTITY_POSE, ODD).color[32, 32, 0] for o in np.linspace(0.05, 1, 12)]
    assert all(a <= b for a, b in zip(weights, weights[1:]))


def test_backends_agree_near_axis():
    cam = FisheyeCamera.equidistant(96, 96, 120.0)
    scene = central_object_scene()
    a = render(scene, IDENTITY_POSE, cam, RenderConfig(backend="ewa"))
    b = render(scene, IDENTITY_POSE, cam, RenderConfig(backend="ut"))
    assert psnr(a, b, a.mask) >= 35.0


def test_degenerate_covariance_skipped():
    bad = GaussianCloud(np.array([[0.0, 0.0, 2.0]]), np.array([[0.1, 0.1, 0.1]]), np.array([[1.0, 0, 0, 0]]),
                        np.array([0.8]), np.array([[1.0, 1, 1]]))
    cfg = RenderConfig(blur=-1e6)  # forces a non-positive 2D covariance
    r = rasterize(bad, IDENTITY_POSE, ODD, cfg)
    assert r.n_skipped == 1 and r.n_visible == 0


def test_config_validation():
    with pytest.raises(ValueError):
        RenderConfig(tile_size=0)
    with pytest.raises(ValueError):
        RenderConfig(extent_sigmas=0)
    with pytest.raises(ValueError):
        RenderConfig(backend="raytrace")

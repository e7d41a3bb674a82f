import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisheye_splat.images import Image
from fisheye_splat.metrics import (C1, C2, MetricError, evaluate, gaussian_window, luma, psnr, ssim,
                                   ssim_map)


def _direct_ssim(a, b, mask=None):
    """Window-by-window SSIM, straight from the definition."""
    x, y = luma(a), luma(b)
    g = gaussian_window()
    w = np.outer(g, g)
    H, W = x.shape
    vals = []
    for i in range(H - 10):
        for j in range(W - 10):
            if mask is not None and not mask[i:i + 11, j:j + 11].all():
                continue
            px, py = x[i:i + 11, j:j + 11], y[i:i + 11, j:j + 11]
            mx, my = (w * px).sum(), (w * py).sum()
            vx = (w * (px - mx) ** 2).sum()
            vy = (w * (py - my) ** 2).sum()
            cxy = (w * (px - mx) * (py - my)).sum()
            vals.append((2 * mx * my + C1) * (2 * cxy + C2) / ((mx**2 + my**2 + C1) * (vx + vy + C2)))
    return float(np.mean(vals))


def _img(rng, h=24, w=26, c=3):
    return Image(rng.integers(0, 256, size=(h, w, c), dtype=np.uint8))


def test_psnr_identical_is_inf(rng):
    a = _img(rng)
    assert psnr(a, a) == math.inf


def test_psnr_one_level_offset():
    a = Image(np.full((16, 16, 3), 100, np.uint8))
    b = Image(np.full((16, 16, 3), 101, np.uint8))
    assert psnr(a, b) == pytest.approx(20 * math.log10(255), abs=1e-12)
    assert psnr(a, b) == pytest.approx(48.131, abs=1e-3)


def test_psnr_checker_inverted_is_zero():
    c = (np.indices((8, 8)).sum(axis=0) % 2 * 255).astype(np.uint8)
    assert psnr(Image(c), Image(255 - c)) == pytest.approx(0.0, abs=1e-12)


def test_psnr_decreases_with_noise(rng):
    base = rng.integers(60, 196, size=(32, 32, 3))
    noise = rng.uniform(-1, 1, size=base.shape)
    vals = [psnr(Image(base.astype(np.uint8)), Image(np.clip(base + a * noise, 0, 255).round().astype(np.uint8)))
            for a in (2, 5, 10, 20, 40)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_ssim_identical_is_exactly_one(rng):
    a = _img(rng)
    assert ssim(a, a) == 1.0


def test_ssim_constant_offset_closed_form():
    m1, c = 100.0, 7.0
    a = Image(np.full((20, 20), m1, np.uint8))
    b = Image(np.full((20, 20), m1 + c, np.uint8))
    expected = (2 * m1 * (m1 + c) + C1) / (m1**2 + (m1 + c) ** 2 + C1)
    assert ssim(a, b) == pytest.approx(expected, abs=1e-9)


def test_ssim_noise_below_point_one():
    rng = np.random.default_rng(7)
    a, b = _img(rng, 64, 64), _img(rng, 64, 64)
    s = ssim(a, b)
    assert s < 0.1
    assert s == pytest.approx(_direct_ssim(a.data, b.data), abs=1e-9)


def test_ssim_matches_direct_reference_with_mask(rng):
    a = _img(rng, 30, 30)
    b = Image(np.clip(a.data.astype(int) + rng.integers(-30, 30, a.data.shape), 0, 255).astype(np.uint8))
    yy, xx = np.mgrid[0:30, 0:30]
    mask = (yy - 15) ** 2 + (xx - 15) ** 2 < 13**2
    assert ssim(a, b, mask) == pytest.approx(_direct_ssim(a.data, b.data, mask), abs=1e-9)


def test_ssim_matches_scikit_image(rng):
    skm = pytest.importorskip("skimage.metrics")
    a, b = _img(rng, 40, 40), _img(rng, 40, 40)
    ref = skm.structural_similarity(luma(a.data), luma(b.data), gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False, data_range=255)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-9)


def test_symmetry(rng):
    a, b = _img(rng), _img(rng)
    assert psnr(a, b) == psnr(b, a)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)


@given(st.integers(0, 2**31))
def test_masked_metrics_ignore_masked_pixels(seed):
    rng = np.random.default_rng(seed)
    a, b = _img(rng), _img(rng)
    mask = np.zeros(a.data.shape[:2], bool)
    mask[2:20, 3:22] = True
    junk = b.data.copy()
    junk[~mask] = rng.integers(0, 256, size=(np.count_nonzero(~mask), 3))
    assert psnr(a, b, mask) == psnr(a, Image(junk), mask)
    assert ssim(a, b, mask) == ssim(a, Image(junk), mask)


def test_errors(rng):
    a = _img(rng)
    with pytest.raises(MetricError):
        psnr(a, _img(rng, 10, 10))
    with pytest.raises(MetricError):
        psnr(a, a, np.zeros(a.data.shape[:2], bool))
    with pytest.raises(MetricError):
        ssim(_img(rng, 8, 8), _img(rng, 8, 8))
    m = np.zeros(a.data.shape[:2], bool)
    m[:5, :5] = True
    with pytest.raises(MetricError):
        ssim(a, a, m)


def test_evaluate_uses_image_masks(rng):
    a = _img(rng)
    mask = np.ones(a.data.shape[:2], bool)
    mask[:, :4] = False
    b = Image(a.data.copy(), mask)
    b.data[:, :4] = 0
    rep = evaluate(Image(a.data, mask), b)
    assert rep.psnr == math.inf and rep.ssim == 1.0 and rep.valid_pixel_count == mask.sum()


def test_ssim_map_bounds(rng):
    smap = ssim_map(_img(rng), _img(rng))
    assert smap.shape == (14, 16)
    assert np.all(smap <= 1.0 + 1e-12) and np.all(smap >= -1.0)

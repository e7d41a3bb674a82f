"""EWA vs unscented projection accuracy, measured against a sampling oracle.

Each trial draws a random Gaussian whose mean lies at a prescribed incidence
angle, projects it with both schemes (without the 2-D blur term) and
compares the image-space covariances to a reference: the Monte-Carlo
estimate for real cameras, the exact pushforward for affine ones.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .camera import AffineCamera, FisheyeCamera
from .geometry import IDENTITY_POSE, random_rotation, rotmat_to_quat
from .splat import Gaussian3D, UTConfig, UnreliableOracleError, mc_project, project_ewa, project_ut

DEFAULT_BINS = ((0.0, 20.0), (20.0, 45.0), (45.0, 70.0), (70.0, 95.0))
SHAPES = ("generic", "isotropic", "disc", "needle")

# Per-axis standard deviation relative to the mean's distance.
SCALE_RANGE = (0.005, 0.05)


@dataclass(frozen=True)
class Trial:
    theta_deg: float
    ewa_error: float
    ut_error: float
    ewa_ut_gap: float

    @property
    def ut_wins(self) -> bool:
        return self.ut_error <= self.ewa_error


def random_gaussian(rng: np.random.Generator, theta_range_deg, shape: str = "generic") -> Gaussian3D:
    theta = math.radians(rng.uniform(*theta_range_deg))
    phi = rng.uniform(0.0, 2.0 * math.pi)
    dist = rng.uniform(1.0, 3.0)
    mu = dist * np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
    lo, hi = np.log(SCALE_RANGE[0]), np.log(SCALE_RANGE[1])
    if shape == "generic":
        rel = np.exp(rng.uniform(lo, hi, 3))
    elif shape == "isotropic":
        rel = np.full(3, np.exp(rng.uniform(lo, hi)))
    elif shape == "disc":
        big = np.exp(rng.uniform(lo, hi))
        rel = np.array([big, big, big / 20.0])
    elif shape == "needle":
        big = np.exp(rng.uniform(lo, hi))
        rel = np.array([big, big / 20.0, big / 20.0])
    else:
        raise ValueError(f"unknown Gaussian shape {shape!r}; choose from {SHAPES}")
    q = rotmat_to_quat(random_rotation(rng))
    return Gaussian3D(tuple(mu), tuple(dist * rel), tuple(q))


def _rel_frobenius(a, b) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def run_trial(g: Gaussian3D, cam, mc_samples: int, mc_seed: int, cfg: UTConfig = UTConfig()):
    """Return a Trial, or None when either projection or the oracle is invalid."""
    ewa = project_ewa(g, IDENTITY_POSE, cam, blur=0.0)
    ut = project_ut(g, IDENTITY_POSE, cam, cfg, blur=0.0)
    if not (ewa.valid and ut.valid):
        return None
    if isinstance(cam, AffineCamera):
        J = cam.A
        ref = J @ g.covariance @ J.T
    else:
        try:
            _, ref = mc_project(g, IDENTITY_POSE, cam, mc_samples, mc_seed)
        except UnreliableOracleError:
            return None
    r = np.linalg.norm(g.mu)
    theta = math.degrees(math.acos(g.mu[2] / r))
    return Trial(theta, _rel_frobenius(ewa.cov2d, ref), _rel_frobenius(ut.cov2d, ref),
                 _rel_frobenius(ut.cov2d, ewa.cov2d))


def run_bin(cam, theta_range_deg, trials: int, rng: np.random.Generator,
            mc_samples: int = 100_000, shape: str = "generic", cfg: UTConfig = UTConfig()) -> list[Trial]:
    out = []
    attempts = 0
    while len(out) < trials:
        attempts += 1
        if attempts > 20 * trials:
            raise RuntimeError(f"could not draw {trials} valid Gaussians in {theta_range_deg}")
        g = random_gaussian(rng, theta_range_deg, shape)
        t = run_trial(g, cam, mc_samples, int(rng.integers(2**63 - 1)), cfg)
        if t is not None:
            out.append(t)
    return out


def test_camera(fov_deg: float, size: int = 1024) -> FisheyeCamera:
    return FisheyeCamera.equidistant(size, size, fov_deg)


def affine_test_camera(rng: np.random.Generator) -> AffineCamera:
    return AffineCamera(rng.normal(scale=300.0, size=(2, 3)), rng.normal(scale=100.0, size=2))


def compare_projections(fov_deg: float = 200.0, trials: int = 100, seed: int = 7,
                        bins=DEFAULT_BINS, mc_samples: int = 100_000, affine: bool = False,
                        shape: str = "generic", kappa: float = 0.0):
    """Run every bin; returns ``{(lo, hi): [Trial, ...]}``."""
    rng = np.random.default_rng(seed)
    cam = affine_test_camera(rng) if affine else test_camera(fov_deg)
    cfg = UTConfig(kappa)
    return {tuple(b): run_bin(cam, b, trials, rng, mc_samples, shape, cfg) for b in bins}


CSV_FIELDS = ("theta_lo_deg", "theta_hi_deg", "trials", "reference", "ewa_err_mean", "ut_err_mean",
              "ewa_err_max", "ut_err_max", "ewa_ut_gap_mean", "ewa_ut_gap_max", "ut_wins")


def summary_rows(results, affine: bool = False) -> list[dict]:
    rows = []
    for (lo, hi), trials in results.items():
        e = np.array([t.ewa_error for t in trials])
        u = np.array([t.ut_error for t in trials])
        gap = np.array([t.ewa_ut_gap for t in trials])
        rows.append({
            "theta_lo_deg": lo, "theta_hi_deg": hi, "trials": len(trials),
            "reference": "analytic" if affine else "monte_carlo",
            "ewa_err_mean": float(e.mean()), "ut_err_mean": float(u.mean()),
            "ewa_err_max": float(e.max()), "ut_err_max": float(u.max()),
            "ewa_ut_gap_mean": float(gap.mean()), "ewa_ut_gap_max": float(gap.max()),
            "ut_wins": int(sum(t.ut_wins for t in trials)),
        })
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in CSV_FIELDS])
    return buf.getvalue()

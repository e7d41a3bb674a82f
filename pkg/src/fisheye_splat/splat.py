"""3D Gaussians and their projection into (fisheye) image space.

Two ways of pushing a Gaussian through the camera map are provided:

* ``project_ewa`` linearizes the projection at the mean (J Sigma J^T);
* ``project_ut`` propagates 2n+1 = 7 sigma points through the exact map.

``mc_project`` samples the Gaussian and is the ground truth both are
compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, quat_to_rotmat

COV2D_BLUR = 0.3


class NotPositiveDefiniteError(ValueError):
    pass


class UnreliableOracleError(RuntimeError):
    pass


def covariance_from_scale_rot(scale, rot) -> np.ndarray:
    """Sigma = R diag(scale^2) R^T; broadcasts over leading axes."""
    R = quat_to_rotmat(rot)
    M = R * np.asarray(scale, dtype=np.float64)[..., None, :]
    return M @ np.swapaxes(M, -1, -2)


@dataclass(frozen=True)
class Gaussian3D:
    mu: tuple[float, float, float]
    scale: tuple[float, float, float]
    rot: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    opacity: float = 1.0
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if any(s <= 0 for s in self.scale):
            raise ValueError("Gaussian scales must be positive")
        if abs(np.linalg.norm(self.rot) - 1.0) > 1e-9:
            raise ValueError("Gaussian rotation must be a unit quaternion")
        if not 0.0 < self.opacity <= 1.0:
            raise ValueError("opacity must lie in (0, 1]")

    @property
    def covariance(self) -> np.ndarray:
        return covariance_from_scale_rot(self.scale, self.rot)


@dataclass
class GaussianCloud:
    """Structure-of-arrays container for N Gaussians."""

    mu: np.ndarray
    scale: np.ndarray
    rot: np.ndarray
    opacity: np.ndarray
    color: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(-1, 3)
        n = len(self.mu)
        self.scale = np.asarray(self.scale, dtype=np.float64).reshape(n, 3)
        self.rot = np.asarray(self.rot, dtype=np.float64).reshape(n, 4)
        self.opacity = np.asarray(self.opacity, dtype=np.float64).reshape(n)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(n, 3)
        if np.any(self.scale <= 0):
            raise ValueError("Gaussian scales must be positive")

    def __len__(self) -> int:
        return len(self.mu)

    @classmethod
    def empty(cls) -> "GaussianCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3)))

    @classmethod
    def from_list(cls, gaussians) -> "GaussianCloud":
        gaussians = list(gaussians)
        if not gaussians:
            return cls.empty()
        return cls(
            mu=[g.mu for g in gaussians],
            scale=[g.scale for g in gaussians],
            rot=[g.rot for g in gaussians],
            opacity=[g.opacity for g in gaussians],
            color=[g.color for g in gaussians],
        )

    def to_list(self) -> list[Gaussian3D]:
        return [
            Gaussian3D(tuple(m), tuple(s), tuple(q), float(o), tuple(c))
            for m, s, q, o, c in zip(self.mu, self.scale, self.rot, self.opacity, self.color)
        ]

    def subset(self, index) -> "GaussianCloud":
        return GaussianCloud(self.mu[index], self.scale[index], self.rot[index],
                             self.opacity[index], self.color[index])

    def covariances(self) -> np.ndarray:
        return covariance_from_scale_rot(self.scale, self.rot)


@dataclass(frozen=True)
class ProjectedGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    valid: bool


@dataclass
class ProjectedBatch:
    mean2d: np.ndarray  # (N, 2)
    cov2d: np.ndarray  # (N, 2, 2)
    depth: np.ndarray  # (N,)
    valid: np.ndarray  # (N,)

    def __getitem__(self, i) -> ProjectedGaussian:
        return ProjectedGaussian(self.mean2d[i], self.cov2d[i], float(self.depth[i]), bool(self.valid[i]))


@dataclass(frozen=True)
class UTConfig:
    """Symmetric sigma-point set with alpha=1, beta=0, so lambda = kappa."""

    kappa: float = 0.0
    n: int = field(default=3, init=False)

    def __post_init__(self):
        if self.n + self.kappa <= 0:
            raise ValueError(f"n + kappa must be positive (kappa={self.kappa})")

    @property
    def lam(self) -> float:
        return self.kappa

    def weights(self) -> np.ndarray:
        c = self.n + self.lam
        w = np.full(2 * self.n + 1, 1.0 / (2.0 * c))
        w[0] = self.lam / c
        return w


def _as_cloud(gaussians) -> GaussianCloud:
    if isinstance(gaussians, GaussianCloud):
        return gaussians
    if isinstance(gaussians, Gaussian3D):
        return GaussianCloud.from_list([gaussians])
    return GaussianCloud.from_list(gaussians)


def _regularize(cov, blur):
    return cov + blur * np.eye(2)


def _cholesky(Sigma) -> np.ndarray:
    try:
        return np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("covariance is not symmetric positive definite") from None


def sigma_points(mu, Sigma, cfg: UTConfig = UTConfig()):
    """Return ``(points, weights)``; points has shape (..., 7, 3).

    Order: mean, then +sqrt(n+lambda) L[:, i] for i = 0..2, then the negatives.
    """
    mu = np.asarray(mu, dtype=np.float64)
    L = _cholesky(np.asarray(Sigma, dtype=np.float64))
    spread = np.sqrt(cfg.n + cfg.lam) * np.swapaxes(L, -1, -2)  # rows are scaled columns of L
    pts = np.concatenate([mu[..., None, :], mu[..., None, :] + spread, mu[..., None, :] - spread], axis=-2)
    return pts, cfg.weights()


def project_ewa_batch(means, covs, pose: Pose, cam, blur: float = COV2D_BLUR) -> ProjectedBatch:
    R = pose.R
    p = pose.to_camera(means)
    cov_cam = R @ covs @ R.T
    mean2d, valid = cam.project(p)
    J = cam.jacobian(p)
    cov2d = J @ cov_cam @ np.swapaxes(J, -1, -2)
    return ProjectedBatch(mean2d, _regularize(cov2d, blur), np.linalg.norm(p, axis=-1), valid)


def project_ut_batch(means, covs, pose: Pose, cam, cfg: UTConfig = UTConfig(),
                     blur: float = COV2D_BLUR) -> ProjectedBatch:
    pts, w = sigma_points(means, covs, cfg)
    p = pose.to_camera(pts)
    px, ok = cam.project(p)
    valid = np.all(ok, axis=-1)
    mean2d = np.einsum("k,...kd->...d", w, px)
    diff = px - mean2d[..., None, :]
    cov2d = np.einsum("k,...ki,...kj->...ij", w, diff, diff)
    depth = np.linalg.norm(pose.to_camera(means), axis=-1)
    return ProjectedBatch(mean2d, _regularize(cov2d, blur), depth, valid)


def project_ewa(g: Gaussian3D, pose: Pose, cam, blur: float = COV2D_BLUR) -> ProjectedGaussian:
    """Linearized (EWA) projection of one Gaussian."""
    return project_ewa_batch(np.asarray(g.mu)[None], g.covariance[None], pose, cam, blur)[0]


def project_ut(g: Gaussian3D, pose: Pose, cam, cfg: UTConfig = UTConfig(),
               blur: float = COV2D_BLUR) -> ProjectedGaussian:
    """Unscented-transform projection of one Gaussian.

    Invalid as soon as any sigma point leaves the camera's valid region.
    """
    return project_ut_batch(np.asarray(g.mu)[None], g.covariance[None], pose, cam, cfg, blur)[0]


def project_batch(cloud: GaussianCloud, pose: Pose, cam, backend: str = "ewa",
                  cfg: UTConfig = UTConfig(), blur: float = COV2D_BLUR) -> ProjectedBatch:
    covs = cloud.covariances()
    if backend == "ewa":
        return project_ewa_batch(cloud.mu, covs, pose, cam, blur)
    if backend == "ut":
        return project_ut_batch(cloud.mu, covs, pose, cam, cfg, blur)
    raise ValueError(f"unknown projection backend {backend!r} (expected 'ewa' or 'ut')")


def mc_project(g: Gaussian3D, pose: Pose, cam, samples: int = 100_000,
               seed: int = 0, mu=None, Sigma=None):
    """Monte-Carlo image-space mean and covariance of a projected Gaussian.

    Samples that the camera flags invalid are dropped; if more than half are
    dropped the estimate is considered unreliable.
    """
    if samples < 1000:
        raise ValueError("Monte-Carlo oracle needs at least 1000 samples")
    mu = np.asarray(g.mu if mu is None else mu, dtype=np.float64)
    Sigma = g.covariance if Sigma is None else np.asarray(Sigma, dtype=np.float64)
    rng = np.random.default_rng(seed)
    # eigh tolerates near-singular covariances where Cholesky would fail.
    evals, evecs = np.linalg.eigh(Sigma)
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    x = mu + rng.standard_normal((samples, 3)) @ root.T
    px, ok = cam.project(pose.to_camera(x))
    if np.count_nonzero(ok) < samples / 2:
        raise UnreliableOracleError(
            f"only {np.count_nonzero(ok)} of {samples} samples projected validly"
        )
    px = px[ok]
    mean2d = px.mean(axis=0)
    cov2d = np.cov(px, rowvar=False)
    return mean2d, cov2d

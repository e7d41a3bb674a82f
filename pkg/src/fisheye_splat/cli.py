"""Command-line entry point: ``fisheye-splat <subcommand> ...``.

Exit codes: 0 success, 2 invalid arguments or inputs, 3 I/O or file-format
error, 4 numerical failure. Inputs are validated before anything is written.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import experiments
from .camera import FisheyeCamera, read_camera_file, write_camera_file
from .depth_init import DEFAULT_BUDGET, DEFAULT_STRIDE, AlignmentError, init_from_depth
from .images import SUPPORTED_SUFFIXES, Image, read_image, read_mask, write_image, write_mask
from .metrics import evaluate
from .render import Backend, RenderConfig, rasterize
from .scene_io import (ColmapFormatError, DepthGrid, DepthGridFormatError, PlyFormatError, read_colmap_text,
                       read_depth_grid, read_gaussians_ply, read_poses_text, write_depth_grid, write_ply)
from .splat import NotPositiveDefiniteError, UnreliableOracleError, UTConfig
from .warp import reduce_fov

log = logging.getLogger("fisheye_splat")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class ValidationError(ValueError):
    pass


@dataclass
class RunConfig:
    """Parsed command plus the validated numeric overrides."""

    command: str
    args: argparse.Namespace
    threads: int = 1


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (OSError, ColmapFormatError, PlyFormatError, DepthGridFormatError)):
        return EXIT_IO
    if isinstance(exc, (NotPositiveDefiniteError, UnreliableOracleError, AlignmentError,
                        np.linalg.LinAlgError, FloatingPointError, ArithmeticError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ValueError, KeyError)):
        return EXIT_VALIDATION
    return 1


def _fail(msg: str) -> None:
    raise ValidationError(msg)


def _image_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in SUPPORTED_SUFFIXES)


def _parallel_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


# --- reduce-fov ----------------------------------------------------------------

def cmd_reduce_fov(cfg: RunConfig) -> int:
    a = cfg.args
    src_dir, out_dir = Path(a.in_dir), Path(a.out)
    cam = read_camera_file(a.cam)
    if not 0 < a.fov <= cam.fov_deg:
        _fail(f"--fov {a.fov} must be in (0, {cam.fov_deg}] for this camera")
    files = _image_files(src_dir)
    if not files:
        _fail(f"no images in {src_dir}")
    if out_dir.resolve() == src_dir.resolve():
        _fail("--out must differ from --in")

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(exist_ok=True)

    def one(path: Path) -> Optional[str]:
        try:
            img = read_image(path)
            warped, dst_cam = reduce_fov(img, cam, a.fov)
            write_image(warped, out_dir / path.name)
            write_mask(warped.mask, out_dir / "masks" / (path.stem + ".png"))
            return None
        except Exception as exc:  # per-file failures are reported, the batch continues
            return f"{path.name}: {exc}"

    failures = [f for f in _parallel_map(one, files, cfg.threads) if f]
    write_camera_file(FisheyeCamera.equidistant(cam.width, cam.height, a.fov), out_dir / "camera.txt")
    for f in failures:
        print(f"error: {f}", file=sys.stderr)
    print(f"reduced {len(files) - len(failures)}/{len(files)} images to {a.fov} deg")
    return EXIT_IO if failures else EXIT_OK


# --- init-from-depth -----------------------------------------------------------

def cmd_init_from_depth(cfg: RunConfig) -> int:
    a = cfg.args
    if len(a.depth) != len(a.images):
        _fail(f"{len(a.depth)} depth grids but {len(a.images)} image names")
    if a.budget < 1:
        _fail("--budget must be >= 1")
    if a.stride < 1:
        _fail("--stride must be >= 1")
    model = read_colmap_text(a.colmap)
    colmap_poses = [model.pose_by_name(name) for name in a.images]
    if a.pred_poses:
        pred_all = {p.image_name: p for p in read_poses_text(a.pred_poses)}
        missing = [n for n in a.images if n not in pred_all]
        if missing:
            _fail(f"predicted poses lack {missing}; available: {sorted(pred_all)}")
        pred_poses = [pred_all[n] for n in a.images]
    else:
        pred_poses = colmap_poses
    if a.cam:
        cam = read_camera_file(a.cam)
        cameras = [cam] * len(a.images)
    else:
        cameras = [model.camera_for(p) for p in colmap_poses]
    grids = _parallel_map(read_depth_grid, a.depth, cfg.threads)
    images = None
    if a.image_dir:
        images = [read_image(Path(a.image_dir) / name) for name in a.images]

    result = init_from_depth(grids, cameras, pred_poses, colmap_poses, images,
                             budget=a.budget, stride=a.stride, seed=a.seed, z_depth=a.z_depth)
    write_ply(result.cloud, a.out, binary=not a.ascii)
    T = result.transform
    print(f"per-view points: {', '.join(str(n) for n in result.per_view_counts)}")
    print(f"fused points: {result.fused_count}")
    print(f"final points: {len(result.cloud)} (budget {a.budget})")
    print(f"similarity: s={T.s!r} residual={result.residual!r}")
    return EXIT_OK


# --- render --------------------------------------------------------------------

def _parse_rgb(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        vals = ()
    if len(vals) != 3 or not all(0.0 <= v <= 1.0 for v in vals):
        _fail(f"--background expects three comma-separated values in [0,1], got {text!r}")
    return vals


def cmd_render(cfg: RunConfig) -> int:
    a = cfg.args
    background = _parse_rgb(a.background)
    rcfg = RenderConfig(backend=Backend(a.backend), tile_size=a.tile_size, background=background,
                        ut=UTConfig(a.kappa))
    model = read_colmap_text(a.colmap)
    pose = model.pose_by_name(a.image_name)
    cam = model.camera_for(pose)
    scene = read_gaussians_ply(a.scene)
    out = Path(a.out)
    mask_out = Path(a.mask_out) if a.mask_out else out.with_name(out.stem + "_mask.png")

    r = rasterize(scene, pose, cam, rcfg)
    write_image(Image.from_float(r.color, r.mask), out)
    write_mask(r.mask, mask_out)
    if a.depth_out:
        write_depth_grid(DepthGrid(r.depth.astype(np.float32)), a.depth_out)
    print(f"rendered {a.image_name} with {a.backend}: {r.n_visible} visible, {r.n_skipped} skipped")
    return EXIT_OK


# --- compare-projections -------------------------------------------------------

def cmd_compare(cfg: RunConfig) -> int:
    a = cfg.args
    if a.trials < 1:
        _fail("--trials must be >= 1")
    if a.mc_samples < 1000:
        _fail("--mc-samples must be >= 1000")
    if not 0 < a.fov < 360:
        _fail("--fov must be in (0, 360)")
    if 3 + a.kappa <= 0:
        _fail("--kappa must satisfy 3 + kappa > 0")
    results = experiments.compare_projections(a.fov, a.trials, a.seed, mc_samples=a.mc_samples,
                                              affine=a.affine, shape=a.shape, kappa=a.kappa)
    rows = experiments.summary_rows(results, a.affine)
    Path(a.out).write_text(experiments.rows_to_csv(rows))
    for row in rows:
        print(f"theta [{row['theta_lo_deg']:g}, {row['theta_hi_deg']:g}) deg: "
              f"EWA {row['ewa_err_mean']:.3e}  UT {row['ut_err_mean']:.3e}  "
              f"UT better in {row['ut_wins']}/{row['trials']}")
    return EXIT_OK


# --- metrics -------------------------------------------------------------------

METRIC_FIELDS = ("name", "psnr", "ssim", "valid_pixels")


def _find_mask(mask_dir: Path, name: str) -> Path:
    for cand in (mask_dir / name, mask_dir / (Path(name).stem + ".png")):
        if cand.is_file():
            return cand
    raise FileNotFoundError(f"no mask for {name} in {mask_dir}")


def cmd_metrics(cfg: RunConfig) -> int:
    a = cfg.args
    da, db = Path(a.a), Path(a.b)
    names_a = {p.name for p in _image_files(da)}
    names_b = {p.name for p in _image_files(db)}
    if names_a != names_b:
        only_a = sorted(names_a - names_b)
        only_b = sorted(names_b - names_a)
        _fail(f"unpaired files; only in {da}: {only_a}; only in {db}: {only_b}")
    if not names_a:
        _fail("no images to compare")
    mask_dir = Path(a.mask) if a.mask and not a.full_frame else None
    names = sorted(names_a)
    if mask_dir is not None:
        for n in names:
            _find_mask(mask_dir, n)

    def one(name: str) -> dict:
        ia, ib = read_image(da / name), read_image(db / name)
        mask = read_mask(_find_mask(mask_dir, name)) if mask_dir is not None else None
        rep = evaluate(ia, ib, mask)
        return {"name": name, "psnr": rep.psnr, "ssim": rep.ssim, "valid_pixels": rep.valid_pixel_count}

    rows = _parallel_map(one, names, cfg.threads)
    mean = {
        "name": "mean",
        "psnr": float(np.mean([r["psnr"] for r in rows])),
        "ssim": float(np.mean([r["ssim"] for r in rows])),
        "valid_pixels": int(round(np.mean([r["valid_pixels"] for r in rows]))),
    }
    lines = [",".join(METRIC_FIELDS)]
    lines += [",".join(_fmt(r[k]) for k in METRIC_FIELDS) for r in rows + [mean]]
    Path(a.out).write_text("\n".join(lines) + "\n")
    for r in rows:
        print(json.dumps({"name": r["name"], "psnr": r["psnr"], "ssim": r["ssim"],
                          "valid_pixels": r["valid_pixels"]}))
    return EXIT_OK


# --- split ---------------------------------------------------------------------

def parse_ratio(text: str) -> tuple[int, int]:
    try:
        train, test = (int(v) for v in text.split("/"))
    except ValueError:
        raise ValidationError(f"--ratio expects TRAIN/TEST like 90/10, got {text!r}") from None
    if train < 0 or test < 0 or train + test == 0:
        _fail(f"--ratio parts must be non-negative and not both zero, got {text!r}")
    return train, test


def split_names(names, train: int, test: int, seed: int = 0) -> tuple[list[str], list[str]]:
    """Deterministic split: names ordered by a seeded SHA-256 and the first share goes to test."""
    names = sorted(names)
    keyed = sorted(names, key=lambda n: hashlib.sha256(f"{seed}:{n}".encode()).hexdigest())
    n_test = int(round(len(names) * test / (train + test)))
    test_set = set(keyed[:n_test])
    return [n for n in names if n not in test_set], [n for n in names if n in test_set]


def cmd_split(cfg: RunConfig) -> int:
    a = cfg.args
    train, test = parse_ratio(a.ratio)
    names = [p.name for p in _image_files(Path(a.in_dir))]
    if not names:
        _fail(f"no images in {a.in_dir}")
    tr, te = split_names(names, train, test, a.seed)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "train.txt").write_text("".join(n + "\n" for n in tr))
    (out / "test.txt").write_text("".join(n + "\n" for n in te))
    print(f"train {len(tr)}, test {len(te)}")
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fisheye-splat", description="Fisheye Gaussian splatting toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    threads = argparse.ArgumentParser(add_help=False)
    threads.add_argument("--threads", type=int, default=1, help="worker threads for batch work")

    s = sub.add_parser("reduce-fov", parents=[threads], help="reproject images to a narrower field of view")
    s.add_argument("--in", dest="in_dir", required=True)
    s.add_argument("--cam", required=True, help="camera text file of the source images")
    s.add_argument("--fov", type=float, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_reduce_fov)

    s = sub.add_parser("init-from-depth", parents=[threads], help="dense point cloud from fisheye depth grids")
    s.add_argument("--depth", nargs="+", required=True, help="FDG1 depth grids, one per view")
    s.add_argument("--images", nargs="+", required=True, help="image names of the views in the COLMAP model")
    s.add_argument("--colmap", required=True, help="COLMAP text model directory")
    s.add_argument("--cam", help="camera text file; defaults to each image's COLMAP camera")
    s.add_argument("--pred-poses", help="images.txt with the depth estimator's poses; defaults to COLMAP's")
    s.add_argument("--image-dir", help="directory holding the images, used for point colors")
    s.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    s.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--z-depth", action="store_true", help="depth values are z, not distance along the ray")
    s.add_argument("--ascii", action="store_true", help="write ASCII PLY")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_init_from_depth)

    s = sub.add_parser("render", help="render one COLMAP view of a Gaussian scene")
    s.add_argument("--scene", required=True, help="Gaussian PLY")
    s.add_argument("--colmap", required=True)
    s.add_argument("--image-name", required=True)
    s.add_argument("--backend", choices=[b.value for b in Backend], default="ut")
    s.add_argument("--kappa", type=float, default=0.0)
    s.add_argument("--tile-size", type=int, default=16)
    s.add_argument("--background", default="0,0,0")
    s.add_argument("--out", required=True)
    s.add_argument("--mask-out", help="defaults to <out>_mask.png")
    s.add_argument("--depth-out", help="optional FDG1 expected-depth output")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("compare-projections", help="EWA vs UT covariance accuracy per incidence-angle bin")
    s.add_argument("--fov", type=float, default=200.0)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--mc-samples", type=int, default=100_000)
    s.add_argument("--kappa", type=float, default=0.0)
    s.add_argument("--shape", choices=experiments.SHAPES, default="generic")
    s.add_argument("--affine", action="store_true", help="use an affine test camera with an exact reference")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("metrics", parents=[threads], help="masked PSNR/SSIM between two image directories")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--mask", help="directory of validity masks (same names or <stem>.png)")
    s.add_argument("--full-frame", action="store_true", help="ignore masks and score the whole frame")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("split", help="reproducible train/test split of an image directory")
    s.add_argument("--in", dest="in_dir", required=True)
    s.add_argument("--ratio", default="90/10")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    threads = getattr(args, "threads", 1)
    if threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    cfg = RunConfig(args.command, args, threads)
    try:
        return args.func(cfg)
    except Exception as exc:
        code = _exit_code(exc)
        if code == 1:
            raise
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())

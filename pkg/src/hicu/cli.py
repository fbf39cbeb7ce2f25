"""Command-line front end: phantom / mask / recon / metrics.

Every command is deterministic given its config file; ``--seed`` overrides
every seed inside the config at once.  ``--workers`` caps the BLAS thread
pool for the duration of the command (internal data parallelism only).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .arrayio import read_array, write_array
from .arrays import ifft_image, mask_apply, ssos_combine
from .config import RunConfig, load_config
from .errors import ConfigError, ShapeError
from .metrics import hfen, ser, ssim_coil_avg
from .simdata import gen_mask, gen_phantom
from .solver import hicu_reconstruct

__all__ = ["main"]


def _fmt_db(value: float) -> str:
    if np.isinf(value):
        return "+inf dB" if value > 0 else "-inf dB"
    return f"{value:.2f} dB"


def _resolve(cfg: RunConfig, key: str, out_dir, default: str) -> Path:
    p = cfg.path(key, out_dir)
    if p is None:
        p = (Path(out_dir) if out_dir else Path(".")) / default
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _override_seeds(cfg: RunConfig, seed: int | None) -> None:
    if seed is None:
        return
    cfg.seed = seed
    if cfg.phantom is not None:
        cfg.phantom.seed = seed
    if cfg.mask is not None:
        cfg.mask.seed = seed
    if cfg.schedule is not None:
        cfg.schedule.seed = seed


def _phantom_dims(cfg: RunConfig) -> tuple[int, ...]:
    if cfg.phantom is None:
        raise ConfigError("config has no phantom section")
    return cfg.phantom.dims()


def cmd_phantom(cfg: RunConfig, out_dir) -> int:
    if cfg.phantom is None:
        raise ConfigError("config has no phantom section")
    kspace, coil_images = gen_phantom(cfg.phantom)
    ksp_path = _resolve(cfg, "kspace", out_dir, "kspace.hicu")
    img_path = _resolve(cfg, "coil_images", out_dir, "coil_images.hicu")
    write_array(ksp_path, kspace)
    write_array(img_path, coil_images)
    resolved = _resolve(cfg, "resolved", out_dir, "phantom_spec.json")
    doc = dataclasses.asdict(cfg.phantom)
    doc["ellipses"] = [dataclasses.asdict(e) for e in cfg.phantom.ellipses]
    resolved.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"wrote {ksp_path} dims={list(kspace.shape)}")
    print(f"wrote {img_path} dims={list(coil_images.shape)}")
    return 0


def cmd_mask(cfg: RunConfig, out_dir) -> int:
    if cfg.mask is None:
        raise ConfigError("config has no mask section")
    dims = _phantom_dims(cfg)
    mask = gen_mask(dims, cfg.mask)
    path = _resolve(cfg, "mask", out_dir, "mask.hicu")
    write_array(path, mask)
    achieved = mask.size / int(mask.sum())
    print(f"wrote {path} dims={list(mask.shape)}")
    print(f"achieved R: {achieved:.3f} (target {cfg.mask.r})")
    return 0


def cmd_recon(cfg: RunConfig, out_dir) -> int:
    if cfg.schedule is None or cfg.kernel is None:
        raise ConfigError("config needs kernel and schedule sections")
    ksp_path = cfg.path("kspace", out_dir)
    mask_path = cfg.path("mask", out_dir)
    if ksp_path is None or mask_path is None:
        raise ConfigError("paths.kspace and paths.mask are required for recon")
    for p in (ksp_path, mask_path):
        if not Path(p).exists():
            raise ConfigError(f"input file does not exist: {p}")
    kspace = read_array(ksp_path)
    mask = read_array(mask_path)
    if kspace.shape != mask.shape:
        raise ShapeError(f"kspace dims {kspace.shape} do not match mask dims {mask.shape}")
    reference = None
    ref_path = cfg.path("reference", out_dir)
    if ref_path is not None:
        reference = read_array(ref_path)
        if reference.shape != kspace.shape:
            raise ShapeError("reference dims do not match kspace dims")
    x0 = mask_apply(kspace, mask)
    xhat, report = hicu_reconstruct(
        x0, mask, cfg.kernel, cfg.schedule, reference=reference
    )
    out_path = _resolve(cfg, "recon", out_dir, "recon.hicu")
    write_array(out_path, xhat)
    rep_path = _resolve(cfg, "report", out_dir, "report.json")
    doc = report.to_dict()
    doc["dims"] = list(xhat.shape)
    doc["rank"] = cfg.schedule.rank
    doc["seed"] = cfg.schedule.seed
    rep_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out_path}")
    print(f"wrote {rep_path}")
    print(f"iterations: {len(report.iterations)}  forward convs: {report.counters['forward']}")
    return 0


def cmd_metrics(args, cfg: RunConfig | None) -> int:
    ref = read_array(args.ref)
    est = read_array(args.est)
    if ref.shape != est.shape:
        raise ShapeError(f"dims mismatch: {ref.shape} vs {est.shape}")
    axes = tuple(int(a) for a in args.spatial_axes.split(","))
    toggles = cfg.metrics if cfg is not None else {"ssim": True, "hfen": True, "ssos": False}
    print(f"SER: {_fmt_db(ser(ref, est))}")
    if args.assume_images:
        ref_img, est_img = ref, est
    else:
        ref_img = ifft_image(ref, axes)
        est_img = ifft_image(est, axes)
    if toggles.get("ssim", True):
        print(f"SSIM: {ssim_coil_avg(ref_img, est_img):.4f}")
    if toggles.get("hfen", True):
        ref_ssos = ssos_combine(ref_img)
        est_ssos = ssos_combine(est_img)
        slice_axes = (0, 1) if ref_ssos.ndim > 2 else None
        print(f"HFEN: {_fmt_db(hfen(ref_ssos, est_ssos, slice_axes=slice_axes))}")
    if args.ssos or (toggles.get("ssos", False)):
        print(f"SSoS SER: {_fmt_db(ser(ssos_combine(ref_img), ssos_combine(est_img)))}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hicu", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override every config seed")
        p.add_argument("--workers", type=int, default=None, help="BLAS thread cap")
        p.add_argument("--out", type=Path, default=None, help="output directory")

    common(sub.add_parser("phantom", help="generate synthetic multi-coil k-space"))
    common(sub.add_parser("mask", help="generate a sampling mask"))
    common(sub.add_parser("recon", help="run the completion solver"))
    pm = sub.add_parser("metrics", help="compare two tensor files")
    common(pm)
    pm.add_argument("ref", type=Path)
    pm.add_argument("est", type=Path)
    pm.add_argument("--assume-images", action="store_true",
                    help="inputs are already images (skip the inverse DFT)")
    pm.add_argument("--spatial-axes", default="0,1",
                    help="comma-separated image axes for the inverse DFT")
    pm.add_argument("--ssos", action="store_true", help="also report SER of SSoS images")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else None
        if cfg is not None:
            _override_seeds(cfg, args.seed)

        def run() -> int:
            if args.command == "phantom":
                if cfg is None:
                    raise ConfigError("phantom requires --config")
                return cmd_phantom(cfg, args.out)
            if args.command == "mask":
                if cfg is None:
                    raise ConfigError("mask requires --config")
                return cmd_mask(cfg, args.out)
            if args.command == "recon":
                if cfg is None:
                    raise ConfigError("recon requires --config")
                return cmd_recon(cfg, args.out)
            return cmd_metrics(args, cfg)

        if args.workers is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=max(1, args.workers)):
                return run()
        return run()
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

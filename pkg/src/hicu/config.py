"""Strict JSON run configuration.

Unknown keys are rejected at every level so that typos fail loudly instead
of silently running with defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .hankel import KernelMask
from .simdata import Ellipse, MaskSpec, PhantomSpec
from .solver import SolverSchedule, StageSpec

__all__ = ["RunConfig", "load_config", "parse_config"]


def _take(d: dict, ctx: str, required=(), optional=()):
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{ctx}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ConfigError(f"{ctx}: missing keys {missing}")


def _parse_ellipses(items, ctx: str):
    out = []
    for i, e in enumerate(items):
        _take(e, f"{ctx}[{i}]", required=("center", "axes", "intensity"), optional=("angle_deg",))
        out.append(
            Ellipse(
                center=tuple(float(v) for v in e["center"]),
                axes=tuple(float(v) for v in e["axes"]),
                angle_deg=float(e.get("angle_deg", 0.0)),
                intensity=float(e["intensity"]),
            )
        )
    return tuple(out)


def _parse_phantom(d: dict) -> PhantomSpec:
    _take(
        d, "phantom",
        required=("nx", "ny", "ncoils"),
        optional=("nt", "nz", "sens_kspace_order", "ellipses", "seed"),
    )
    kwargs = dict(
        nx=int(d["nx"]), ny=int(d["ny"]), ncoils=int(d["ncoils"]),
        sens_kspace_order=int(d.get("sens_kspace_order", 1)),
        nt=None if d.get("nt") is None else int(d["nt"]),
        nz=None if d.get("nz") is None else int(d["nz"]),
        seed=int(d.get("seed", 0)),
    )
    if "ellipses" in d:
        kwargs["ellipses"] = _parse_ellipses(d["ellipses"], "phantom.ellipses")
    spec = PhantomSpec(**kwargs)
    spec.validate()
    return spec


def _parse_mask(d: dict) -> MaskSpec:
    _take(
        d, "mask",
        required=("pattern", "r"),
        optional=("acs", "seed", "vd_decay", "vd_sigma_frac"),
    )
    spec = MaskSpec(
        pattern=str(d["pattern"]),
        r=float(d["r"]),
        acs=tuple(int(v) for v in d.get("acs", ())),
        seed=int(d.get("seed", 0)),
        vd_decay=float(d.get("vd_decay", 2.0)),
        vd_sigma_frac=float(d.get("vd_sigma_frac", 0.125)),
    )
    spec.validate()
    return spec


def _parse_kernel(d: dict) -> KernelMask:
    _take(d, "kernel", required=("extents",), optional=("shape",))
    shape = d.get("shape", "rect")
    extents = tuple(int(v) for v in d["extents"])
    if shape == "rect":
        return KernelMask.full(extents)
    if shape == "ellipsoid":
        return KernelMask.ellipsoid(extents)
    raise ConfigError(f"kernel.shape must be 'rect' or 'ellipsoid', got {shape!r}")


def _parse_region_entry(v, ctx: str):
    if v == "full":
        return "full"
    if isinstance(v, bool):
        raise ConfigError(f"{ctx}: bad region entry {v!r}")
    if isinstance(v, int):
        return v
    if isinstance(v, float):
        return v
    raise ConfigError(f"{ctx}: bad region entry {v!r}")


def _parse_schedule(d: dict) -> SolverSchedule:
    _take(
        d, "schedule",
        required=("rank", "stages"),
        optional=("circular_axes", "dc_mode", "dc_lambda", "seed"),
    )
    stages = []
    for i, s in enumerate(d["stages"]):
        _take(
            s, f"schedule.stages[{i}]",
            required=("region", "p", "gradient_steps", "iterations"),
        )
        region = s["region"]
        if region != "full":
            if not isinstance(region, list):
                raise ConfigError(f"schedule.stages[{i}].region must be 'full' or a list")
            region = [
                _parse_region_entry(v, f"schedule.stages[{i}].region") for v in region
            ]
        stages.append(
            StageSpec(
                region=region,
                p=int(s["p"]),
                gradient_steps=int(s["gradient_steps"]),
                iterations=int(s["iterations"]),
            )
        )
    return SolverSchedule(
        rank=int(d["rank"]),
        stages=stages,
        circular_axes=tuple(int(a) for a in d.get("circular_axes", ())),
        dc_mode=str(d.get("dc_mode", "hard")),
        dc_lambda=float(d.get("dc_lambda", 0.0)),
        seed=int(d.get("seed", 0)),
    )


_PATH_KEYS = ("kspace", "coil_images", "mask", "recon", "report", "reference", "resolved")


@dataclass
class RunConfig:
    """Parsed run configuration for the command-line front end."""

    seed: int = 0
    phantom: PhantomSpec | None = None
    mask: MaskSpec | None = None
    kernel: KernelMask | None = None
    schedule: SolverSchedule | None = None
    metrics: dict = field(default_factory=lambda: {"ssim": True, "hfen": True, "ssos": False})
    paths: dict = field(default_factory=dict)

    def path(self, key: str, out_dir: Path | None = None) -> Path | None:
        raw = self.paths.get(key)
        if raw is None:
            return None
        p = Path(raw)
        if out_dir is not None and not p.is_absolute():
            p = Path(out_dir) / p
        return p


def parse_config(doc: dict) -> RunConfig:
    _take(
        doc, "config",
        optional=("seed", "phantom", "mask", "kernel", "schedule", "metrics", "paths"),
    )
    cfg = RunConfig(seed=int(doc.get("seed", 0)))
    if "phantom" in doc:
        cfg.phantom = _parse_phantom(doc["phantom"])
    if "mask" in doc:
        cfg.mask = _parse_mask(doc["mask"])
    if "kernel" in doc:
        cfg.kernel = _parse_kernel(doc["kernel"])
    if "schedule" in doc:
        cfg.schedule = _parse_schedule(doc["schedule"])
    if "metrics" in doc:
        _take(doc["metrics"], "metrics", optional=("ssim", "hfen", "ssos"))
        cfg.metrics.update({k: bool(v) for k, v in doc["metrics"].items()})
    if "paths" in doc:
        _take(doc["paths"], "paths", optional=_PATH_KEYS)
        cfg.paths = {k: (None if v is None else str(v)) for k, v in doc["paths"].items()}
    return cfg


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(doc)

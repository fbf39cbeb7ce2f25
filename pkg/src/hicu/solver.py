"""Staged alternating minimization for calibrationless k-space completion.

Each iteration re-estimates the principal right subspace of the lifted
matrix on the current stage's region (randomized SVD), completes it to an
orthonormal nullspace (Householder reflections), then takes a fixed number
of gradient steps on the k-space samples, each with a fresh random
compression of the nullspace and an exact line-search step size.  Early
stages restrict the convolution region to a small centered block of k-space
where SNR is highest; later stages widen to the full grid.

Observed samples are pinned bit-exactly in hard data-consistency mode: the
gradient is zeroed at observed locations, so no update can move them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .arrays import mask_apply
from .errors import ConfigError, ParameterError
from .hankel import (
    Counters,
    DataConsistency,
    KernelMask,
    MemoryMeter,
    Region,
    full_region,
    hankel_apply,
    kspace_adjoint_scatter,
)
from .subspace import RngStream, householder_nullspace, jl_compress, rsvd_right_vectors

__all__ = [
    "StageSpec",
    "SolverSchedule",
    "stage_region",
    "StepRecord",
    "IterationRecord",
    "ReconReport",
    "hicu_reconstruct",
]

_RSVD_STREAM = 1
_JL_STREAM = 2


@dataclass
class StageSpec:
    """One stage of the schedule.

    ``region`` is ``"full"`` or a per-axis list of ``"full"``, a fraction in
    (0, 1], or an explicit integer window extent; trailing axes default to
    full.  ``p`` is the nullspace compression dimension and
    ``gradient_steps`` the number of descent steps per nullspace update.
    """

    region: object
    p: int
    gradient_steps: int
    iterations: int

    def validate(self) -> None:
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.gradient_steps < 1:
            raise ConfigError("gradient_steps must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")


@dataclass
class SolverSchedule:
    """Full solver configuration: rank, stages, wrap axes, data consistency."""

    rank: int
    stages: list[StageSpec]
    circular_axes: tuple[int, ...] = ()
    dc_mode: str = "hard"
    dc_lambda: float = 0.0
    seed: int = 0

    def validate(self, kernel: KernelMask, dims) -> list[Region]:
        if self.rank < 1:
            raise ConfigError("rank must be >= 1")
        if self.rank >= kernel.n:
            raise ConfigError(f"rank {self.rank} must be below the kernel support size {kernel.n}")
        if not self.stages:
            raise ConfigError("schedule needs at least one stage")
        if self.dc_mode not in ("hard", "soft"):
            raise ConfigError(f"unknown dc_mode {self.dc_mode!r}")
        if self.dc_mode == "soft" and self.dc_lambda <= 0:
            raise ConfigError("soft data consistency needs dc_lambda > 0")
        regions = []
        for stage in self.stages:
            stage.validate()
            regions.append(stage_region(dims, kernel, stage.region, self.circular_axes))
        return regions


def _window_extent(entry, n_d: int, k_d: int, axis: int) -> int:
    if entry == "full":
        return n_d
    if isinstance(entry, bool):
        raise ConfigError(f"invalid region entry {entry!r} on axis {axis}")
    if isinstance(entry, int):
        w = entry
    elif isinstance(entry, (float, Fraction)):
        f = float(entry)
        if not (0.0 < f <= 1.0):
            raise ConfigError(f"region fraction on axis {axis} must be in (0, 1], got {f}")
        w = int(round(f * n_d))
    else:
        raise ConfigError(f"invalid region entry {entry!r} on axis {axis}")
    if w < k_d:
        raise ConfigError(
            f"stage window {w} on axis {axis} is smaller than the kernel extent {k_d}"
        )
    if w > n_d:
        raise ConfigError(f"stage window {w} on axis {axis} exceeds the array extent {n_d}")
    return w


def stage_region(dims, kernel: KernelMask, fraction, circular_axes=()) -> Region:
    """Centered convolution-output region for one stage.

    ``fraction`` is ``"full"`` or a per-axis list (see :class:`StageSpec`).
    The coil axis (last) and circular axes always span their full extent.
    """
    dims = tuple(int(d) for d in dims)
    circ = frozenset(int(a) % len(dims) for a in circular_axes)
    nd = len(dims)
    if fraction == "full":
        entries = ["full"] * nd
    else:
        entries = list(fraction)
        if len(entries) > nd:
            raise ConfigError(f"region spec has {len(entries)} entries for {nd} axes")
        entries += ["full"] * (nd - len(entries))
    offsets, extents = [], []
    for d, (n_d, k_d) in enumerate(zip(dims, kernel.extents)):
        if k_d > n_d:
            raise ConfigError(f"kernel extent {k_d} exceeds array extent {n_d} on axis {d}")
        if d in circ:
            offsets.append(0)
            extents.append(n_d)
            continue
        entry = "full" if d == nd - 1 else entries[d]  # coil axis always full
        w = _window_extent(entry, n_d, k_d, d)
        off = (n_d - w) // 2
        offsets.append(off)
        extents.append(w - k_d + 1)
    region = Region(tuple(offsets), tuple(extents), circ)
    region.validate(kernel, dims)
    return region


@dataclass
class StepRecord:
    stage: int
    iteration: int
    step: int
    eta: float
    objective_before: float
    objective_after: float
    seconds: float
    ser_db: float | None = None


@dataclass
class IterationRecord:
    stage: int
    iteration: int
    objective: float | None
    seconds: float
    ser_db: float | None = None
    tail_energy: float | None = None


@dataclass
class ReconReport:
    """Per-run trace: step/iteration records, operator counters, memory peak."""

    steps: list[StepRecord] = field(default_factory=list)
    iterations: list[IterationRecord] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    peak_aux_complex: int = 0
    total_seconds: float = 0.0

    def to_dict(self) -> dict:
        def _num(v):
            if v is None:
                return None
            if isinstance(v, float) and not np.isfinite(v):
                return "+inf" if v > 0 else "-inf"
            return v

        return {
            "steps": [
                {
                    "stage": s.stage,
                    "iteration": s.iteration,
                    "step": s.step,
                    "eta": s.eta,
                    "objective_before": s.objective_before,
                    "objective_after": s.objective_after,
                    "seconds": s.seconds,
                    "ser_db": _num(s.ser_db),
                }
                for s in self.steps
            ],
            "iterations": [
                {
                    "stage": i.stage,
                    "iteration": i.iteration,
                    "objective": i.objective,
                    "seconds": i.seconds,
                    "ser_db": _num(i.ser_db),
                    "tail_energy": i.tail_energy,
                }
                for i in self.iterations
            ],
            "events": list(self.events),
            "counters": dict(self.counters),
            "peak_aux_complex": self.peak_aux_complex,
            "total_seconds": self.total_seconds,
        }


class _Stopwatch:
    """Wall clock that can be paused while instrumentation runs."""

    def __init__(self):
        self.total = 0.0
        self._t0 = time.perf_counter()

    def pause(self) -> float:
        now = time.perf_counter()
        self.total += now - self._t0
        self._t0 = None
        return self.total

    def resume(self) -> None:
        self._t0 = time.perf_counter()


def _ser_db(reference: np.ndarray, est: np.ndarray) -> float:
    err = float(np.linalg.norm(est - reference))
    if err == 0.0:
        return float("inf")
    return 20.0 * float(np.log10(np.linalg.norm(reference) / err))


def hicu_reconstruct(
    x0: np.ndarray,
    mask: np.ndarray,
    kernel: KernelMask,
    schedule: SolverSchedule,
    reference: np.ndarray | None = None,
    tail_energy_threshold: int = 2**24,
    iterate_callback=None,
    counters: Counters | None = None,
    meter: MemoryMeter | None = None,
) -> tuple[np.ndarray, ReconReport]:
    """Run the staged completion on zero-filled observed k-space.

    Parameters
    ----------
    x0 : ndarray
        Observed k-space, zero elsewhere (enforced on entry by masking).
    mask : ndarray
        {0,1} sampling mask, same shape.
    reference : ndarray, optional
        Fully sampled k-space; when given, a signal-to-error trace is
        recorded after every gradient step (clock paused while measuring).
    tail_energy_threshold : int
        Per-iteration exact tail energy is logged only while
        ``s * n`` of the full region stays at or below this; pass 0 to
        disable.
    iterate_callback : callable, optional
        ``callback(stage, iteration, x)`` after each iteration (clock
        paused).

    Returns
    -------
    (xhat, report)
    """
    x0 = np.ascontiguousarray(x0, dtype=np.complex128)
    mask = np.asarray(mask)
    if x0.shape != mask.shape:
        raise ConfigError(f"mask shape {mask.shape} does not match k-space shape {x0.shape}")
    regions = schedule.validate(kernel, x0.shape)
    for region in regions:
        ell = int(np.ceil(1.5 * schedule.rank))
        if ell > region.s:
            raise ConfigError(
                f"sketch width {ell} exceeds region size {region.s}; enlarge the stage region"
            )

    counters = counters if counters is not None else Counters()
    meter = meter if meter is not None else MemoryMeter()
    report = ReconReport()
    x = mask_apply(x0, mask)
    dc = DataConsistency(
        mode=schedule.dc_mode,
        mask=mask,
        x0=x if schedule.dc_mode == "soft" else None,
        lam=schedule.dc_lambda,
    )
    observed = mask == 1
    root = RngStream(schedule.seed)
    reference_arr = None if reference is None else np.asarray(reference, dtype=np.complex128)

    tail_region = full_region(x0.shape, kernel, schedule.circular_axes)
    log_tail = 0 < tail_energy_threshold and tail_region.s * kernel.n <= tail_energy_threshold

    watch = _Stopwatch()
    for si, stage in enumerate(schedule.stages):
        region = regions[si]
        for it in range(stage.iterations):
            v = rsvd_right_vectors(
                x, kernel, region, schedule.rank,
                root.child(_RSVD_STREAM, si, it), counters=counters, meter=meter,
            )
            basis = householder_nullspace(v)
            y = x
            last_obj: float | None = None
            for j in range(stage.gradient_steps):
                qt = jl_compress(basis.q, stage.p, root.child(_JL_STREAM, si, it, j))
                u = hankel_apply(y, qt, kernel, region, counters=counters, meter=meter)
                obj = float(np.vdot(u, u).real)
                if schedule.dc_mode == "soft":
                    res = np.where(observed, y - dc.x0, 0.0 + 0.0j)
                    obj += schedule.dc_lambda * float(np.vdot(res, res).real)
                g = kspace_adjoint_scatter(
                    qt, u, kernel, region, y.shape, counters=counters, meter=meter
                )
                if schedule.dc_mode == "soft":
                    g += schedule.dc_lambda * res
                else:
                    g[observed] = 0.0
                num = 0.0
                den = 0.0
                if np.any(g):
                    w = hankel_apply(g, qt, kernel, region, counters=counters, meter=meter)
                    num = float(np.vdot(w, u).real)
                    den = float(np.vdot(w, w).real)
                    if schedule.dc_mode == "soft":
                        mg = np.where(observed, g, 0.0 + 0.0j)
                        num += schedule.dc_lambda * float(np.vdot(mg, res).real)
                        den += schedule.dc_lambda * float(np.vdot(mg, mg).real)
                if den <= 0.0:
                    last_obj = obj
                    seconds = watch.pause()
                    report.events.append(
                        {"stage": si, "iteration": it, "step": j, "reason": "degenerate-direction"}
                    )
                    report.steps.append(
                        StepRecord(si, it, j, 0.0, obj, obj, seconds,
                                   None if reference_arr is None else _ser_db(reference_arr, y))
                    )
                    watch.resume()
                    continue
                eta = num / den
                y = y - eta * g
                last_obj = obj - num * num / den
                seconds = watch.pause()
                report.steps.append(
                    StepRecord(si, it, j, eta, obj, last_obj, seconds,
                               None if reference_arr is None else _ser_db(reference_arr, y))
                )
                watch.resume()
            x = y
            seconds = watch.pause()
            tail = None
            if log_tail:
                from .oracle import tail_energy_dense

                tail = tail_energy_dense(x, kernel, tail_region, schedule.rank)
            report.iterations.append(
                IterationRecord(
                    si, it, last_obj, seconds,
                    None if reference_arr is None else _ser_db(reference_arr, x),
                    tail,
                )
            )
            if iterate_callback is not None:
                iterate_callback(si, it, x)
            watch.resume()

    report.total_seconds = watch.pause()
    report.counters = counters.snapshot()
    report.peak_aux_complex = meter.peak
    return x, report

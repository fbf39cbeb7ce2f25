import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from hicu import (
    Counters,
    KernelMask,
    MaskSpec,
    MemoryMeter,
    PhantomSpec,
    SolverSchedule,
    StageSpec,
    cadzow_complete,
    full_region,
    gen_mask,
    gen_phantom,
    hicu_reconstruct,
    mask_apply,
    numerical_rank,
    ser,
)


@pytest.fixture(scope="session")
def recovery_bundle():
    """Shared end-to-end run: 64x64x8 noiseless phantom, screened R=2 line mask.

    Used by the end-to-end, data-consistency, memory, and determinism
    acceptance criteria so the expensive reference computations run once.
    """
    t_start = time.perf_counter()
    spec = PhantomSpec(nx=64, ny=64, ncoils=8, sens_kspace_order=1, seed=11)
    kspace, _ = gen_phantom(spec)
    kernel = KernelMask.full((5, 5, 8))
    circular = (0, 1)
    region = full_region(kspace.shape, kernel, circular)
    # mask realization screened so no cyclic run of >= 3 lines is missing
    # (ghost images on longer runs are invisible to a 3-wide sensitivity
    # spectrum, making the completion non-unique)
    mask = gen_mask(
        kspace.shape,
        MaskSpec("vd_1d", 2.0, acs=(8,), seed=17342, vd_decay=1.0, vd_sigma_frac=0.5),
    )
    x0 = mask_apply(kspace, mask)
    rank = numerical_rank(kspace, kernel, region)

    observed = mask == 1
    dc_flags: list[bool] = []

    with threadpool_limits(1):
        cadzow_trace = []
        t0 = time.perf_counter()

        def cadzow_cb(it, x):
            dc_flags.append(bool(np.array_equal(x[observed], x0[observed])))
            cadzow_trace.append((time.perf_counter() - t0, ser(kspace, x)))

        x_cadzow = cadzow_complete(
            x0, mask, kernel, rank, 500, circular_axes=circular, callback=cadzow_cb
        )

        schedule = SolverSchedule(
            rank=rank,
            stages=[
                StageSpec("full", p=8, gradient_steps=5, iterations=30),
                StageSpec("full", p=32, gradient_steps=10, iterations=60),
            ],
            circular_axes=circular,
            seed=0,
        )
        counters = Counters()
        meter = MemoryMeter()

        def solver_cb(stage, it, x):
            dc_flags.append(bool(np.array_equal(x[observed], x0[observed])))

        t0 = time.perf_counter()
        x_hicu, report = hicu_reconstruct(
            x0, mask, kernel, schedule,
            reference=kspace, tail_energy_threshold=0,
            iterate_callback=solver_cb, counters=counters, meter=meter,
        )
        hicu_seconds = time.perf_counter() - t0

    return {
        "kspace": kspace,
        "kernel": kernel,
        "circular": circular,
        "region": region,
        "mask": mask,
        "x0": x0,
        "rank": rank,
        "x_cadzow": x_cadzow,
        "cadzow_trace": cadzow_trace,
        "x_hicu": x_hicu,
        "report": report,
        "schedule": schedule,
        "meter": meter,
        "counters": counters,
        "dc_flags": dc_flags,
        "hicu_seconds": hicu_seconds,
        "build_seconds": time.perf_counter() - t_start,
    }

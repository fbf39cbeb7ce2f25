import numpy as np
import pytest

from hicu import (
    ConfigError,
    Counters,
    KernelMask,
    MaskSpec,
    MemoryMeter,
    PhantomSpec,
    SolverSchedule,
    StageSpec,
    full_region,
    gen_mask,
    gen_phantom,
    hicu_reconstruct,
    mask_apply,
    numerical_rank,
    ser,
    stage_region,
)


def _small_problem(seed=7, nx=24, nc=3, r_target=None):
    spec = PhantomSpec(nx=nx, ny=nx, ncoils=nc, sens_kspace_order=1, seed=seed)
    ksp, _ = gen_phantom(spec)
    kern = KernelMask.full((5, 5, nc))
    # mask seed 15: realization has no run of 3+ missing lines (cyclically),
    # so the completion is well posed for the 5-wide kernel
    mask = gen_mask(
        ksp.shape, MaskSpec("vd_1d", 1.6, acs=(4,), seed=15, vd_decay=1.0, vd_sigma_frac=0.5)
    )
    x0 = mask_apply(ksp, mask)
    rank = r_target or numerical_rank(ksp, kern, full_region(ksp.shape, kern, (0, 1)))
    return ksp, kern, mask, x0, rank


class TestStageRegion:
    def test_full(self):
        k = KernelMask.full((5, 5, 8))
        reg = stage_region((384, 384, 8), k, "full")
        assert reg.offsets == (0, 0, 0)
        assert reg.extents == (380, 380, 1)

    def test_quarter_centered(self):
        k = KernelMask.full((5, 5, 8))
        reg = stage_region((384, 384, 8), k, [0.25, 0.25])
        assert reg.extents == (92, 92, 1)
        assert reg.offsets == (144, 144, 0)

    def test_circular_axis_spans_full(self):
        k = KernelMask.full((5, 5, 3, 8))
        reg = stage_region((64, 64, 16, 8), k, [0.25, 0.25, 0.25], circular_axes=(2,))
        assert reg.extents[2] == 16 and reg.offsets[2] == 0

    def test_coil_axis_forced_full(self):
        k = KernelMask.full((5, 5, 4))
        reg = stage_region((32, 32, 4), k, [0.5, 0.5, 0.5])
        assert reg.extents[2] == 1

    def test_window_below_kernel_rejected(self):
        k = KernelMask.full((5, 5, 2))
        with pytest.raises(ConfigError):
            stage_region((16, 16, 2), k, [0.125, 0.5])

    def test_explicit_window_extent(self):
        k = KernelMask.full((3, 3, 2))
        reg = stage_region((20, 20, 2), k, [8, "full"])
        assert reg.extents == (6, 18, 1)
        assert reg.offsets == (6, 0, 0)


class TestSolverBasics:
    def test_fully_sampled_identity(self):
        ksp, kern, _, _, rank = _small_problem()
        ones = np.ones(ksp.shape, np.uint8)
        sched = SolverSchedule(
            rank=rank, stages=[StageSpec("full", p=2, gradient_steps=2, iterations=2)], seed=1
        )
        xhat, report = hicu_reconstruct(ksp, ones, kern, sched, tail_energy_threshold=0)
        assert np.array_equal(xhat, ksp)
        assert len(report.events) == 4  # every step skipped: nothing unobserved

    def test_hard_dc_bit_exact_every_iterate(self):
        ksp, kern, mask, x0, rank = _small_problem()
        observed = mask == 1
        flags = []

        def cb(stage, it, x):
            flags.append(np.array_equal(x[observed], x0[observed]))

        sched = SolverSchedule(
            rank=rank,
            stages=[StageSpec("full", p=3, gradient_steps=3, iterations=4)],
            circular_axes=(0, 1),
            seed=2,
        )
        hicu_reconstruct(x0, mask, kern, sched, iterate_callback=cb, tail_energy_threshold=0)
        assert len(flags) == 4 and all(flags)

    def test_deterministic_same_seed(self):
        ksp, kern, mask, x0, rank = _small_problem()
        sched = SolverSchedule(
            rank=rank,
            stages=[StageSpec("full", p=3, gradient_steps=2, iterations=3)],
            circular_axes=(0, 1),
            seed=11,
        )
        a, _ = hicu_reconstruct(x0, mask, kern, sched, tail_energy_threshold=0)
        b, _ = hicu_reconstruct(x0, mask, kern, sched, tail_energy_threshold=0)
        assert np.array_equal(a, b)

    def test_seed_changes_result(self):
        ksp, kern, mask, x0, rank = _small_problem()
        stages = [StageSpec("full", p=3, gradient_steps=2, iterations=3)]
        a, _ = hicu_reconstruct(
            x0, mask, kern,
            SolverSchedule(rank=rank, stages=stages, circular_axes=(0, 1), seed=1),
            tail_energy_threshold=0,
        )
        b, _ = hicu_reconstruct(
            x0, mask, kern,
            SolverSchedule(rank=rank, stages=stages, circular_axes=(0, 1), seed=2),
            tail_energy_threshold=0,
        )
        assert not np.array_equal(a, b)

    def test_recovery_improves_ser(self):
        ksp, kern, mask, x0, rank = _small_problem()
        sched = SolverSchedule(
            rank=rank,
            stages=[
                StageSpec("full", p=3, gradient_steps=5, iterations=10),
                StageSpec("full", p=12, gradient_steps=10, iterations=15),
            ],
            circular_axes=(0, 1),
            seed=4,
        )
        xhat, report = hicu_reconstruct(x0, mask, kern, sched, reference=ksp, tail_energy_threshold=0)
        assert ser(ksp, xhat) >= ser(ksp, x0) + 10.0
        assert len(report.iterations) == 25

    def test_counter_audit(self):
        ksp, kern, mask, x0, rank = _small_problem()
        p, g_steps, iters = 3, 4, 5
        cnt = Counters()
        sched = SolverSchedule(
            rank=rank,
            stages=[StageSpec("full", p=p, gradient_steps=g_steps, iterations=iters)],
            circular_axes=(0, 1),
            seed=5,
        )
        _, report = hicu_reconstruct(
            x0, mask, kern, sched, counters=cnt, tail_energy_threshold=0
        )
        assert not report.events  # no skipped steps on this instance
        ell = int(np.ceil(1.5 * rank))
        assert cnt.forward == iters * (ell + 2 * p * g_steps)
        assert cnt.kernel_adjoint == iters * ell
        assert cnt.kspace_scatter == iters * p * g_steps

    def test_objective_non_increasing_within_step(self):
        ksp, kern, mask, x0, rank = _small_problem()
        sched = SolverSchedule(
            rank=rank,
            stages=[StageSpec("full", p=4, gradient_steps=6, iterations=4)],
            circular_axes=(0, 1),
            seed=6,
        )
        _, report = hicu_reconstruct(x0, mask, kern, sched, tail_energy_threshold=0)
        for rec in report.steps:
            assert rec.objective_after <= rec.objective_before * (1 + 1e-12)

    def test_tail_energy_logged_and_decreasing(self):
        ksp, kern, mask, x0, rank = _small_problem()
        sched = SolverSchedule(
            rank=rank,
            stages=[StageSpec("full", p=4, gradient_steps=5, iterations=6)],
            circular_axes=(0, 1),
            seed=7,
        )
        _, report = hicu_reconstruct(x0, mask, kern, sched)
        tails = [rec.tail_energy for rec in report.iterations]
        assert all(t is not None for t in tails)
        assert tails[-1] < tails[0]

    def test_soft_mode_runs_and_returns_near_data(self):
        ksp, kern, mask, x0, rank = _small_problem()
        sched = SolverSchedule(
            rank=rank,
            stages=[StageSpec("full", p=3, gradient_steps=4, iterations=6)],
            circular_axes=(0, 1),
            dc_mode="soft",
            dc_lambda=50.0,
            seed=8,
        )
        xhat, _ = hicu_reconstruct(x0, mask, kern, sched, tail_energy_threshold=0)
        obs = mask == 1
        rel = np.linalg.norm(xhat[obs] - x0[obs]) / np.linalg.norm(x0[obs])
        assert rel < 0.05  # strongly penalized, close to the data

    def test_time_axis_circular_schedule(self):
        spec = PhantomSpec(nx=12, ny=12, ncoils=2, nt=5, seed=9)
        ksp, _ = gen_phantom(spec)
        kern = KernelMask.full((3, 3, 2, 2))
        mask = gen_mask(ksp.shape, MaskSpec("vd_t", 1.5, acs=(3,), seed=10))
        x0 = mask_apply(ksp, mask)
        sched = SolverSchedule(
            rank=20,
            stages=[StageSpec([0.8, 0.8], p=2, gradient_steps=2, iterations=3)],
            circular_axes=(2,),
            seed=11,
        )
        xhat, report = hicu_reconstruct(
            x0, mask, kern, sched, reference=ksp, tail_energy_threshold=0
        )
        assert len(report.iterations) == 3
        assert np.array_equal(xhat[mask == 1], x0[mask == 1])

    def test_config_errors(self):
        ksp, kern, mask, x0, rank = _small_problem()
        with pytest.raises(ConfigError):
            hicu_reconstruct(
                x0, mask[:-1], kern,
                SolverSchedule(rank=rank, stages=[StageSpec("full", 1, 1, 1)]),
            )
        with pytest.raises(ConfigError):
            hicu_reconstruct(
                x0, mask, kern,
                SolverSchedule(rank=kern.n, stages=[StageSpec("full", 1, 1, 1)]),
            )
        with pytest.raises(ConfigError):
            hicu_reconstruct(
                x0, mask, kern,
                SolverSchedule(rank=rank, stages=[]),
            )

    def test_report_serializable(self):
        import json

        ksp, kern, mask, x0, rank = _small_problem()
        sched = SolverSchedule(
            rank=rank,
            stages=[StageSpec("full", p=2, gradient_steps=2, iterations=2)],
            circular_axes=(0, 1),
            seed=12,
        )
        _, report = hicu_reconstruct(
            x0, mask, kern, sched, reference=ksp, tail_energy_threshold=0
        )
        doc = json.dumps(report.to_dict())
        assert "iterations" in doc and "counters" in doc

    def test_memory_meter_reported(self):
        ksp, kern, mask, x0, rank = _small_problem()
        meter = MemoryMeter()
        sched = SolverSchedule(
            rank=rank,
            stages=[StageSpec("full", p=2, gradient_steps=2, iterations=2)],
            circular_axes=(0, 1),
            seed=13,
        )
        _, report = hicu_reconstruct(
            x0, mask, kern, sched, meter=meter, tail_energy_threshold=0
        )
        ell = int(np.ceil(1.5 * rank))
        s = full_region(ksp.shape, kern, (0, 1)).s
        assert report.peak_aux_complex >= s * ell
        assert meter.current == 0

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hicu import (
    Counters,
    DataConsistency,
    DegenerateDirectionError,
    KernelMask,
    Region,
    ShapeError,
    build_hankel_dense,
    exact_line_search,
    full_region,
    gen_phantom,
    hankel_adjoint_apply,
    hankel_apply,
    kspace_adjoint_scatter,
    mask_apply,
    numerical_rank,
    objective_and_gradient,
    PhantomSpec,
)
from hicu.subspace import householder_nullspace, jl_compress, RngStream
import scipy.linalg


def _rand(g, shape):
    return g.standard_normal(shape) + 1j * g.standard_normal(shape)


def _rand_instance(g, max_dims=(10, 10, 4), max_kern=(4, 4, 4), circular=False):
    dims = tuple(int(g.integers(min(4, m), m + 1)) for m in max_dims)
    kern = tuple(int(g.integers(1, min(mk, d) + 1)) for mk, d in zip(max_kern, dims))
    circ = (1,) if circular else ()
    x = _rand(g, dims)
    k = KernelMask.full(kern)
    return x, k, full_region(dims, k, circ)


class TestForward:
    def test_1d_no_flip_convention(self):
        x = np.array([1.0, 2.0, 3.0], complex)
        k = KernelMask.full((2,))
        out = hankel_apply(x, np.array([1.0, -1.0]), k, full_region((3,), k))
        assert np.allclose(out, [-1.0, -1.0])

    def test_impulse_kernel_is_window_slice(self):
        g = np.random.default_rng(0)
        x = _rand(g, (6, 5))
        k = KernelMask.full((3, 2))
        reg = full_region(x.shape, k)
        for row, (i, j) in enumerate(k.positions):
            v = np.zeros(k.n, complex)
            v[row] = 1.0
            out = hankel_apply(x, v, k, reg).reshape(reg.extents)
            assert np.array_equal(out, x[i : i + 4, j : j + 4])

    def test_1d_circular_wraparound(self):
        x = np.array([1.0, 2.0, 3.0], complex)
        k = KernelMask.full((2,))
        reg = full_region((3,), k, circular_axes=(0,))
        out = hankel_apply(x, np.array([1.0, 1.0]), k, reg)
        assert np.allclose(out, [3.0, 5.0, 4.0])

    def test_matches_dense_oracle(self):
        g = np.random.default_rng(1)
        x, k, reg = _rand_instance(g, (8, 8, 2), (3, 3, 2))
        v = _rand(g, (k.n, 4))
        dense = build_hankel_dense(x, k, reg).matrix @ v
        fast = hankel_apply(x, v, k, reg)
        assert np.abs(fast - dense).max() <= 1e-12 * np.abs(dense).max()

    def test_kernel_larger_than_array(self):
        k = KernelMask.full((5,))
        with pytest.raises(ShapeError):
            full_region((3,), k)

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, seed):
        g = np.random.default_rng(seed)
        x, k, reg = _rand_instance(g, (8, 6, 3), (3, 2, 3), circular=bool(seed % 2))
        z = _rand(g, x.shape)
        v = _rand(g, (k.n, 2))
        a, b = complex(*g.standard_normal(2)), complex(*g.standard_normal(2))
        lhs = hankel_apply(a * x + b * z, v, k, reg)
        rhs = a * hankel_apply(x, v, k, reg) + b * hankel_apply(z, v, k, reg)
        assert np.abs(lhs - rhs).max() <= 1e-12 * max(np.abs(rhs).max(), 1.0)

    def test_region_restriction_rows(self):
        g = np.random.default_rng(3)
        x = _rand(g, (9, 9, 3))
        k = KernelMask.full((3, 3, 3))
        reg_full = full_region(x.shape, k)
        sub = Region((2, 1, 0), (3, 4, reg_full.extents[2]))
        v = _rand(g, (k.n, 2))
        out_full = hankel_apply(x, v, k, reg_full).reshape(reg_full.extents + (2,))
        out_sub = hankel_apply(x, v, k, sub).reshape(sub.extents + (2,))
        window = out_full[2:5, 1:5, :, :]
        assert np.array_equal(window, out_sub)

    def test_circular_equals_wrap_padded_valid(self):
        g = np.random.default_rng(4)
        x = _rand(g, (6, 5))
        k = KernelMask.full((2, 3))
        circ = full_region(x.shape, k, circular_axes=(0,))
        v = _rand(g, (k.n,))
        out_circ = hankel_apply(x, v, k, circ)
        padded = np.concatenate([x, x[: 2 - 1, :]], axis=0)  # wrap-pad axis 0
        reg_pad = full_region(padded.shape, k)
        out_pad = hankel_apply(padded, v, k, reg_pad)
        assert np.allclose(out_circ.reshape(6, 3), out_pad.reshape(6, 3), rtol=0, atol=1e-13)

    def test_chunked_paths_agree(self):
        g = np.random.default_rng(5)
        x, k, reg = _rand_instance(g, (8, 8, 3), (3, 3, 3), circular=True)
        v = _rand(g, (k.n, 3))
        ref = hankel_apply(x, v, k, reg, pos_chunk=16)
        for chunk in (0, 1, 2, 7):
            out = hankel_apply(x, v, k, reg, pos_chunk=chunk)
            assert np.abs(out - ref).max() <= 1e-12 * np.abs(ref).max()


class TestAdjoints:
    def test_adjoint_zero(self):
        k = KernelMask.full((2, 2))
        reg = full_region((4, 4), k)
        out = hankel_adjoint_apply(np.ones((4, 4), complex), np.zeros((reg.s, 3)), k, reg)
        assert not np.any(out)

    def test_all_ones_sum(self):
        x = np.ones(3, complex)
        k = KernelMask.full((2,))
        reg = full_region((3,), k)
        u = np.array([2.0 + 1j, -1.0])
        out = hankel_adjoint_apply(x, u, k, reg)
        assert np.allclose(out, [u.sum(), u.sum()])

    def test_scatter_impulse(self):
        k = KernelMask.full((2,))
        reg = full_region((3,), k)
        q = np.array([1.0, 0.0], complex)
        u = np.array([2.0 + 1j, 3.0], complex)
        out = kspace_adjoint_scatter(q, u, k, reg, (3,))
        assert np.allclose(out, [2.0 + 1j, 3.0, 0.0])

    def test_scatter_zero(self):
        k = KernelMask.full((2, 2))
        reg = full_region((4, 5), k)
        out = kspace_adjoint_scatter(
            np.ones((k.n, 2), complex), np.zeros((reg.s, 2)), k, reg, (4, 5)
        )
        assert not np.any(out)

    def test_three_way_adjoint_identities_100_trials(self):
        g = np.random.default_rng(6)
        for trial in range(100):
            x, k, reg = _rand_instance(
                g, (10, 8, 4), (4, 3, 4), circular=bool(trial % 3 == 0)
            )
            v = _rand(g, (k.n, 2))
            u = _rand(g, (reg.s, 2))
            scale = np.linalg.norm(v) * np.linalg.norm(u) * np.linalg.norm(x)
            # kernel-slot pair
            lhs = np.vdot(u, hankel_apply(x, v, k, reg))
            rhs = np.vdot(hankel_adjoint_apply(x, u, k, reg), v)
            assert abs(lhs - rhs) <= 1e-10 * scale
            # k-space-slot pair
            q = v[:, 0]
            w = u[:, 0]
            lhs2 = np.vdot(w, hankel_apply(x, q, k, reg))
            rhs2 = np.vdot(kspace_adjoint_scatter(q, w, k, reg, x.shape), x)
            assert abs(lhs2 - rhs2) <= 1e-10 * scale
            # cross identity through the adjoint in the kernel slot
            lhs3 = np.vdot(hankel_adjoint_apply(x, w, k, reg), q)
            assert abs(lhs3 - lhs2) <= 1e-10 * scale

    def test_adjoint_matches_dense(self):
        g = np.random.default_rng(7)
        x, k, reg = _rand_instance(g, (8, 8, 2), (3, 3, 2))
        u = _rand(g, (reg.s, 3))
        dense = build_hankel_dense(x, k, reg).matrix.conj().T @ u
        for chunk in (16, 0):
            fast = hankel_adjoint_apply(x, u, k, reg, pos_chunk=chunk)
            assert np.abs(fast - dense).max() <= 1e-12 * np.abs(dense).max()

    def test_einsum_path_restores_u(self):
        g = np.random.default_rng(8)
        x, k, reg = _rand_instance(g, (6, 6, 2), (2, 2, 2))
        u = np.asfortranarray(_rand(g, (reg.s, 2)))
        u_copy = u.copy()
        hankel_adjoint_apply(x, u, k, reg, pos_chunk=0)
        assert np.array_equal(u, u_copy)


def _phantom_nullspace(nx=16, ncoils=3, kernel=(5, 5, 3), seed=5):
    spec = PhantomSpec(nx=nx, ny=nx, ncoils=ncoils, sens_kspace_order=1, seed=seed)
    ksp, _ = gen_phantom(spec)
    k = KernelMask.full(kernel)
    reg = full_region(ksp.shape, k)
    rank = numerical_rank(ksp, k, reg)
    h = build_hankel_dense(ksp, k, reg).matrix
    _, _, vh = scipy.linalg.svd(h, full_matrices=True)
    v = vh[:rank, :].conj().T
    return ksp, k, reg, rank, v


class TestObjectiveGradient:
    def test_zero_kernels(self):
        g = np.random.default_rng(9)
        x, k, reg = _rand_instance(g, (6, 6, 2), (2, 2, 2))
        dc = DataConsistency("hard", np.zeros(x.shape, np.uint8))
        grad, obj = objective_and_gradient(x, np.zeros((k.n, 2)), k, reg, dc)
        assert obj == 0.0 and not np.any(grad)

    def test_exact_annihilation(self):
        ksp, k, reg, rank, v = _phantom_nullspace()
        q = householder_nullspace(v).q
        qt = jl_compress(q, 4, RngStream(3))
        dc = DataConsistency("hard", np.zeros(ksp.shape, np.uint8))
        grad, obj = objective_and_gradient(ksp, qt, k, reg, dc)
        ynorm2 = float(np.vdot(ksp, ksp).real)
        assert obj <= 1e-20 * ynorm2
        assert np.linalg.norm(grad) <= 1e-10 * np.linalg.norm(ksp)

    def test_directional_derivative_20_components(self):
        g = np.random.default_rng(10)
        x, k, reg = _rand_instance(g, (6, 5, 2), (2, 2, 2))
        qt = _rand(g, (k.n, 3))
        mask = (g.random(x.shape) < 0.4).astype(np.uint8)
        x0 = mask_apply(_rand(g, x.shape), mask)
        for dc in (
            DataConsistency("hard", mask),
            DataConsistency("soft", mask, x0=x0, lam=0.7),
        ):
            grad, obj = objective_and_gradient(x, qt, k, reg, dc)

            def cost(arr):
                u = hankel_apply(arr, qt, k, reg)
                val = float(np.vdot(u, u).real)
                if dc.mode == "soft":
                    res = mask_apply(arr, mask) - x0
                    val += dc.lam * float(np.vdot(res, res).real)
                return val

            h = 1e-6
            flat = x.reshape(-1)
            idxs = g.choice(flat.size, size=20, replace=False)
            for idx in idxs:
                if dc.mode == "hard" and mask.reshape(-1)[idx] == 1:
                    continue
                for direction in (1.0, 1.0j):
                    e = np.zeros_like(flat)
                    e[idx] = direction
                    e = e.reshape(x.shape)
                    num = (cost(x + h * e) - cost(x - h * e)) / (2 * h)
                    analytic = 2.0 * np.vdot(grad, e).real
                    assert abs(num - analytic) <= 1e-5 * max(abs(analytic), 1e-3)

    def test_hard_mode_zeroes_observed(self):
        g = np.random.default_rng(11)
        x, k, reg = _rand_instance(g, (6, 6, 2), (2, 2, 2))
        mask = (g.random(x.shape) < 0.5).astype(np.uint8)
        dc = DataConsistency("hard", mask)
        grad, _ = objective_and_gradient(x, _rand(g, (k.n, 2)), k, reg, dc)
        assert not np.any(grad[mask == 1])

    def test_operation_counts(self):
        g = np.random.default_rng(12)
        x, k, reg = _rand_instance(g, (6, 6, 2), (2, 2, 2))
        dc = DataConsistency("hard", np.zeros(x.shape, np.uint8))
        qt = _rand(g, (k.n, 5))
        cnt = Counters()
        grad, obj, u = objective_and_gradient(
            x, qt, k, reg, dc, counters=cnt, return_products=True
        )
        assert cnt.forward == 5 and cnt.kspace_scatter == 5 and cnt.kernel_adjoint == 0
        exact_line_search(x, grad, qt, k, reg, dc, u=u, counters=cnt)
        assert cnt.forward == 10 and cnt.kspace_scatter == 5


class TestExactLineSearch:
    def test_scalar_hand_solved(self):
        # one active kernel position over a length-2 axis: s = 1 output
        k = KernelMask((2,), np.array([1, 0], np.uint8))
        reg = full_region((2,), k)
        y = np.array([2.0 + 1j, 0.0])
        qt = np.array([[1.0 + 0j]])
        dc = DataConsistency("hard", np.zeros(2, np.uint8))
        grad, _ = objective_and_gradient(y, qt, k, reg, dc)
        assert np.allclose(grad, [2.0 + 1j, 0.0])
        eta = exact_line_search(y, grad, qt, k, reg, dc)
        assert abs(eta - 1.0) <= 1e-14
        after = y - eta * grad
        assert np.allclose(hankel_apply(after, qt[:, 0], k, reg), 0.0)

    def test_annihilated_start_gives_zero_step(self):
        ksp, k, reg, rank, v = _phantom_nullspace()
        q = householder_nullspace(v).q
        qt = jl_compress(q, 3, RngStream(4))
        dc = DataConsistency("hard", np.zeros(ksp.shape, np.uint8))
        direction = np.ones_like(ksp)
        eta = exact_line_search(ksp, direction, qt, k, reg, dc)
        # numerator is an inner product against numerically-zero products
        assert abs(eta) <= 1e-8

    def test_grid_optimality_20_instances(self):
        g = np.random.default_rng(13)
        for _ in range(20):
            x, k, reg = _rand_instance(g, (6, 6, 2), (3, 2, 2))
            qt = _rand(g, (k.n, 3))
            mask = (g.random(x.shape) < 0.3).astype(np.uint8)
            dc = DataConsistency("hard", mask)
            grad, obj, u = objective_and_gradient(
                x, qt, k, reg, dc, return_products=True
            )
            if not np.any(grad):
                continue
            eta = exact_line_search(x, grad, qt, k, reg, dc, u=u)

            def cost(arr):
                uu = hankel_apply(arr, qt, k, reg)
                return float(np.vdot(uu, uu).real)

            best = cost(x - eta * grad)
            for t in np.linspace(0.0, 2 * eta, 101):
                assert best <= cost(x - t * grad) + 1e-9 * max(obj, 1.0)

    def test_descent_never_increases(self):
        g = np.random.default_rng(14)
        for _ in range(10):
            x, k, reg = _rand_instance(g, (6, 6, 2), (2, 2, 2))
            qt = _rand(g, (k.n, 2))
            dc = DataConsistency("hard", np.zeros(x.shape, np.uint8))
            grad, obj, u = objective_and_gradient(x, qt, k, reg, dc, return_products=True)
            eta, decrease = exact_line_search(
                x, grad, qt, k, reg, dc, u=u, return_decrease=True
            )
            after = x - eta * grad
            _, obj_after = objective_and_gradient(after, qt, k, reg, dc)
            assert obj_after <= obj * (1 + 1e-12)
            assert abs((obj - decrease) - obj_after) <= 1e-8 * max(obj, 1.0)

    def test_degenerate_direction_raises(self):
        g = np.random.default_rng(15)
        x, k, reg = _rand_instance(g, (5, 5, 2), (2, 2, 2))
        qt = np.zeros((k.n, 2), complex)
        dc = DataConsistency("hard", np.zeros(x.shape, np.uint8))
        with pytest.raises(DegenerateDirectionError):
            exact_line_search(x, np.ones_like(x), qt, k, reg, dc)


class TestKernelMask:
    def test_ellipsoid_subset_of_box(self):
        k = KernelMask.ellipsoid((5, 5))
        assert k.n < 25
        assert k.support[2, 2] == 1
        assert k.support[0, 0] == 0

    def test_empty_support_rejected(self):
        with pytest.raises(ShapeError):
            KernelMask((2, 2), np.zeros((2, 2), np.uint8))

    def test_region_validation(self):
        k = KernelMask.full((3, 3))
        with pytest.raises(ShapeError):
            Region((0, 0), (5, 5), frozenset((0,))).validate(k, (5, 5))
        with pytest.raises(ShapeError):
            Region((2, 0), (2, 3)).validate(k, (5, 5))

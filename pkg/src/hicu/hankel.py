"""Matrix-free multi-level Hankel operators.

The central object is the linear map taking a k-space array ``X`` and a
kernel-coefficient matrix ``V`` (one column per kernel) to the batched
sliding inner products

    out[i, j] = sum_{kappa in support} X[i + kappa] * V[kappa, j]

over a rectangular block ``S`` of valid-convolution output positions.  No
kernel flip and no conjugation is applied in the forward map; on axes marked
circular the index arithmetic wraps modulo the array extent and the output
block spans the full extent.  Row ``i`` enumerates ``S`` in row-major order
and row ``kappa`` enumerates the kernel support in row-major order of the
kernel box; every function in the package uses these two orderings.

The three operators here (forward, adjoint in the kernel argument, adjoint
in the k-space argument) never materialize the lifted matrix.  Scratch
buffers are limited to a configurable number of kernel-position columns, so
peak auxiliary memory stays far below the lifted matrix size; callers that
need a hard memory ceiling pass ``pos_chunk=0`` to run entirely on strided
views.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import blas as _blas

from .errors import DegenerateDirectionError, ShapeError

__all__ = [
    "KernelMask",
    "Region",
    "full_region",
    "Counters",
    "MemoryMeter",
    "DataConsistency",
    "hankel_apply",
    "hankel_adjoint_apply",
    "kspace_adjoint_scatter",
    "objective_and_gradient",
    "exact_line_search",
]

_zgemm = _blas.get_blas_funcs("gemm", dtype=np.complex128)


@dataclass(eq=False)
class KernelMask:
    """Binary support of an annihilating kernel inside a rectangular box.

    Parameters
    ----------
    extents : tuple of int
        Kernel box size per dimension, e.g. ``(5, 5, ncoils)``.
    support : ndarray, optional
        {0,1} array over the box; defaults to the full rectangle.
    """

    extents: tuple[int, ...]
    support: np.ndarray | None = None

    def __post_init__(self):
        self.extents = tuple(int(e) for e in self.extents)
        if any(e < 1 for e in self.extents):
            raise ShapeError(f"kernel extents must be >= 1, got {self.extents}")
        if self.support is None:
            self.support = np.ones(self.extents, dtype=np.uint8)
        else:
            self.support = np.ascontiguousarray(self.support).astype(np.uint8)
            if self.support.shape != self.extents:
                raise ShapeError("support shape does not match kernel extents")
            if not np.all((self.support == 0) | (self.support == 1)):
                raise ShapeError("kernel support must be {0,1}-valued")
        # positions of the ones, row-major over the box; fixes the row order
        # of every kernel-coefficient vector in the package
        self.positions = np.argwhere(self.support == 1)
        self.n = int(self.positions.shape[0])
        if self.n < 1:
            raise ShapeError("kernel support is empty")

    @classmethod
    def full(cls, extents) -> "KernelMask":
        return cls(tuple(extents))

    @classmethod
    def ellipsoid(cls, extents) -> "KernelMask":
        """Inscribed-ellipsoid support (all defaults elsewhere are rectangular)."""
        extents = tuple(int(e) for e in extents)
        grids = np.meshgrid(*[np.arange(e) for e in extents], indexing="ij")
        rho = np.zeros(extents)
        for g, e in zip(grids, extents):
            c = (e - 1) / 2.0
            half = max(e / 2.0, 0.5)
            rho += ((g - c) / half) ** 2
        return cls(extents, (rho <= 1.0 + 1e-12).astype(np.uint8))


@dataclass(eq=False)
class Region:
    """Contiguous block of valid-convolution output positions.

    ``offsets``/``extents`` select the block per dimension.  Axes in
    ``circular_axes`` wrap modulo the k-space extent and must span the full
    extent with offset 0.
    """

    offsets: tuple[int, ...]
    extents: tuple[int, ...]
    circular_axes: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        self.offsets = tuple(int(o) for o in self.offsets)
        self.extents = tuple(int(e) for e in self.extents)
        self.circular_axes = frozenset(int(a) for a in self.circular_axes)
        if len(self.offsets) != len(self.extents):
            raise ShapeError("region offsets/extents rank mismatch")
        if any(e < 1 for e in self.extents) or any(o < 0 for o in self.offsets):
            raise ShapeError(f"invalid region block {self.offsets}/{self.extents}")

    @property
    def s(self) -> int:
        return int(np.prod(self.extents))

    def validate(self, kernel: KernelMask, dims: tuple[int, ...]) -> None:
        if len(dims) != len(self.extents) or len(dims) != len(kernel.extents):
            raise ShapeError(
                f"rank mismatch: dims {dims}, kernel {kernel.extents}, region {self.extents}"
            )
        for d, (n_d, k_d) in enumerate(zip(dims, kernel.extents)):
            if k_d > n_d:
                raise ShapeError(f"kernel extent {k_d} exceeds array extent {n_d} on axis {d}")
            if d in self.circular_axes:
                if self.offsets[d] != 0 or self.extents[d] != n_d:
                    raise ShapeError(f"circular axis {d} must span the full extent with offset 0")
            else:
                if self.offsets[d] + self.extents[d] > n_d - k_d + 1:
                    raise ShapeError(
                        f"region exceeds valid outputs on axis {d}: "
                        f"{self.offsets[d]}+{self.extents[d]} > {n_d - k_d + 1}"
                    )


def full_region(dims, kernel: KernelMask, circular_axes=()) -> Region:
    """All valid output positions (full extent on circular axes)."""
    circ = frozenset(int(a) for a in circular_axes)
    extents = tuple(
        n_d if d in circ else n_d - k_d + 1
        for d, (n_d, k_d) in enumerate(zip(dims, kernel.extents))
    )
    region = Region((0,) * len(extents), extents, circ)
    region.validate(kernel, tuple(dims))
    return region


class Counters:
    """Running totals of operator applications (one per kernel column)."""

    __slots__ = ("forward", "kernel_adjoint", "kspace_scatter")

    def __init__(self):
        self.forward = 0
        self.kernel_adjoint = 0
        self.kspace_scatter = 0

    @property
    def adjoint_total(self) -> int:
        return self.kernel_adjoint + self.kspace_scatter

    def snapshot(self) -> dict:
        return {
            "forward": self.forward,
            "kernel_adjoint": self.kernel_adjoint,
            "kspace_scatter": self.kspace_scatter,
        }


class MemoryMeter:
    """Tracks live auxiliary buffer sizes in units of one complex value.

    Only deliberately managed buffers are registered (sketches, window
    slabs, small factors); sub-window numpy scratch is a lower-order term
    and is excluded by design.
    """

    __slots__ = ("current", "peak")

    def __init__(self):
        self.current = 0
        self.peak = 0

    def alloc(self, n_complex: int) -> int:
        self.current += int(n_complex)
        if self.current > self.peak:
            self.peak = self.current
        return int(n_complex)

    def free(self, n_complex: int) -> None:
        self.current -= int(n_complex)


def _noop_meter() -> MemoryMeter:
    return MemoryMeter()


def _axis_pieces(kappa_d: int, n_d: int, region: Region, d: int):
    """Per-axis (dst, src) slice pairs for kernel offset ``kappa_d``."""
    if d in region.circular_axes:
        if kappa_d == 0:
            return [(slice(0, n_d), slice(0, n_d))]
        head = n_d - kappa_d
        return [
            (slice(0, head), slice(kappa_d, n_d)),
            (slice(head, n_d), slice(0, kappa_d)),
        ]
    start = region.offsets[d] + kappa_d
    return [(slice(0, region.extents[d]), slice(start, start + region.extents[d]))]


def _window_pieces(kappa, dims, region: Region):
    """Decompose the region window at kernel offset ``kappa`` into view pairs.

    Yields ``(dst, src)`` slice tuples such that ``window[dst] = X[src]``
    covers the whole region block, with at most two pieces per circular axis.
    """
    per_axis = [
        _axis_pieces(int(kappa[d]), dims[d], region, d) for d in range(len(dims))
    ]
    for combo in itertools.product(*per_axis):
        yield tuple(c[0] for c in combo), tuple(c[1] for c in combo)


def _check_operands(x, kernel: KernelMask, region: Region):
    x = np.asarray(x)
    if x.dtype != np.complex128:
        x = x.astype(np.complex128)
    region.validate(kernel, x.shape)
    return x


def _gather_slab(x, kernel, region, block, slab):
    """Fill slab columns with window values for the kernel positions in block."""
    # slab is (s, c) Fortran-ordered; slab.T reshaped exposes one C-ordered
    # window grid per column, so the strided copies below need no scratch
    slab3 = slab.T.reshape((len(block),) + region.extents)
    for i, kappa in enumerate(block):
        for dst, src in _window_pieces(kappa, x.shape, region):
            slab3[i][dst] = x[src]


def hankel_apply(
    x: np.ndarray,
    v: np.ndarray,
    kernel: KernelMask,
    region: Region,
    pos_chunk: int = 16,
    counters: Counters | None = None,
    meter: MemoryMeter | None = None,
) -> np.ndarray:
    """Batched sliding inner products of ``x`` with the kernel columns of ``v``.

    Parameters
    ----------
    x : ndarray
        k-space array.
    v : ndarray
        Kernel coefficients, shape ``(n,)`` or ``(n, k)`` with ``n`` the
        support size; rows follow the row-major support order.
    pos_chunk : int
        Number of kernel positions gathered per BLAS call.  ``0`` runs a
        per-column accumulation on strided views (scratch is one window).

    Returns
    -------
    ndarray of shape ``(s, k)`` (or ``(s,)`` for a vector ``v``), rows
    enumerating the region block in row-major order.
    """
    x = _check_operands(x, kernel, region)
    v = np.asarray(v, dtype=np.complex128)
    squeeze = v.ndim == 1
    vmat = v[:, None] if squeeze else v
    if vmat.shape[0] != kernel.n:
        raise ShapeError(f"kernel matrix has {vmat.shape[0]} rows, support size is {kernel.n}")
    k = vmat.shape[1]
    s = region.s
    meter = meter or _noop_meter()
    if counters is not None:
        counters.forward += k

    positions = kernel.positions
    out = np.zeros((s, k), dtype=np.complex128, order="F")
    held = meter.alloc(s * k)
    if pos_chunk > 0:
        c = min(pos_chunk, kernel.n)
        slab = np.empty((s, c), dtype=np.complex128, order="F")
        held_slab = meter.alloc(s * c)
        for start in range(0, kernel.n, c):
            block = positions[start : start + c]
            _gather_slab(x, kernel, region, block, slab[:, : len(block)])
            out = _zgemm(
                1.0,
                slab[:, : len(block)],
                vmat[start : start + len(block), :],
                beta=1.0,
                c=out,
                overwrite_c=True,
            )
        del slab
        meter.free(held_slab)
    else:
        out3 = out.T.reshape((k,) + region.extents)
        for row, kappa in enumerate(positions):
            for dst, src in _window_pieces(kappa, x.shape, region):
                win = x[src]
                for j in range(k):
                    out3[j][dst] += win * vmat[row, j]
    meter.free(held)
    return out[:, 0] if squeeze else out


def hankel_adjoint_apply(
    x: np.ndarray,
    u: np.ndarray,
    kernel: KernelMask,
    region: Region,
    pos_chunk: int = 16,
    counters: Counters | None = None,
    meter: MemoryMeter | None = None,
) -> np.ndarray:
    """Adjoint of :func:`hankel_apply` in the kernel argument.

    Computes ``out[kappa, j] = sum_{i in S} conj(X[i + kappa]) * u[i, j]``.
    With ``pos_chunk=0`` the loop runs on strided views; ``u`` is then
    conjugated in place for the duration of the call and restored.
    """
    x = _check_operands(x, kernel, region)
    u = np.asarray(u, dtype=np.complex128)
    squeeze = u.ndim == 1
    umat = u[:, None] if squeeze else u
    s = region.s
    if umat.shape[0] != s:
        raise ShapeError(f"u has {umat.shape[0]} rows, region size is {s}")
    k = umat.shape[1]
    meter = meter or _noop_meter()
    if counters is not None:
        counters.kernel_adjoint += k

    positions = kernel.positions
    out = np.empty((kernel.n, k), dtype=np.complex128)
    held = meter.alloc(kernel.n * k)
    if pos_chunk > 0:
        c = min(pos_chunk, kernel.n)
        slab = np.empty((s, c), dtype=np.complex128, order="F")
        held_slab = meter.alloc(s * c)
        for start in range(0, kernel.n, c):
            block = positions[start : start + c]
            _gather_slab(x, kernel, region, block, slab[:, : len(block)])
            out[start : start + len(block), :] = _zgemm(
                1.0, slab[:, : len(block)], umat, trans_a=2
            )
        del slab
        meter.free(held_slab)
    else:
        # zero-slab path: conj(u) in place, contract on strided views
        # (einsum never copies an operand), conj back when done
        if not (umat.flags.f_contiguous or umat.flags.c_contiguous) or not umat.flags.writeable:
            umat = np.ascontiguousarray(umat)
        letters = "abcdefgh"[: len(region.extents)]
        if umat.flags.f_contiguous:
            u3 = umat.T.reshape((k,) + region.extents)
            formula = f"{letters},j{letters}->j"
            uslice = lambda dst: u3[(slice(None),) + dst]  # noqa: E731
        else:
            u3 = umat.reshape(region.extents + (k,))
            formula = f"{letters},{letters}j->j"
            uslice = lambda dst: u3[dst + (slice(None),)]  # noqa: E731
        np.conjugate(umat, out=umat)
        try:
            for row, kappa in enumerate(positions):
                acc = np.zeros(k, dtype=np.complex128)
                for dst, src in _window_pieces(kappa, x.shape, region):
                    acc += np.einsum(formula, x[src], uslice(dst))
                np.conjugate(acc, out=out[row, :])
        finally:
            np.conjugate(umat, out=umat)
    meter.free(held)
    return out[:, 0] if squeeze else out


def kspace_adjoint_scatter(
    q: np.ndarray,
    u: np.ndarray,
    kernel: KernelMask,
    region: Region,
    dims,
    counters: Counters | None = None,
    meter: MemoryMeter | None = None,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Adjoint of ``X -> hankel_apply(X, q)``: scatter region values back to k-space.

    ``out[m] = sum_k sum_{i in S, kappa: i+kappa = m} conj(q[kappa, k]) * u[i, k]``
    (index arithmetic modulo the extent on circular axes).  Matrix-valued
    ``q``/``u`` accumulate the scatter over matching columns, which is the
    gradient assembly used by :func:`objective_and_gradient`.
    """
    dims = tuple(int(d) for d in dims)
    q = np.asarray(q, dtype=np.complex128)
    u = np.asarray(u, dtype=np.complex128)
    qmat = q[:, None] if q.ndim == 1 else q
    umat = u[:, None] if u.ndim == 1 else u
    if qmat.shape[0] != kernel.n:
        raise ShapeError(f"q has {qmat.shape[0]} rows, support size is {kernel.n}")
    if umat.shape[0] != region.s:
        raise ShapeError(f"u has {umat.shape[0]} rows, region size is {region.s}")
    if qmat.shape[1] != umat.shape[1]:
        raise ShapeError("q and u must have the same number of columns")
    region.validate(kernel, dims)
    meter = meter or _noop_meter()
    k = qmat.shape[1]
    if counters is not None:
        counters.kspace_scatter += k

    if out is None:
        out = np.zeros(dims, dtype=np.complex128)
    elif out.shape != dims:
        raise ShapeError("out has wrong shape")
    held = meter.alloc(region.s)
    t = np.empty(region.s, dtype=np.complex128)
    for row, kappa in enumerate(kernel.positions):
        np.matmul(umat, np.conj(qmat[row, :]), out=t)
        t3 = t.reshape(region.extents)
        for dst, src in _window_pieces(kappa, dims, region):
            out[src] += t3[dst]
    meter.free(held)
    return out


@dataclass
class DataConsistency:
    """Data-consistency handling for the gradient and line search.

    ``mode="hard"`` pins observed samples: the gradient is zeroed wherever
    ``mask == 1`` so iterates never move there.  ``mode="soft"`` instead adds
    ``lam * ||mask*(y) - x0||_F^2`` to the objective.
    """

    mode: str
    mask: np.ndarray
    x0: np.ndarray | None = None
    lam: float = 0.0

    def __post_init__(self):
        if self.mode not in ("hard", "soft"):
            raise ShapeError(f"unknown data-consistency mode {self.mode!r}")
        if self.mode == "soft":
            if self.x0 is None:
                raise ShapeError("soft data consistency requires x0")
            if self.lam <= 0:
                raise ShapeError("soft data consistency requires lam > 0")


def _soft_residual(y, dc: DataConsistency):
    res = np.where(dc.mask == 1, y, 0.0 + 0.0j)
    res -= np.where(dc.mask == 1, dc.x0, 0.0 + 0.0j)
    return res


def objective_and_gradient(
    y: np.ndarray,
    qt: np.ndarray,
    kernel: KernelMask,
    region: Region,
    dc: DataConsistency,
    counters: Counters | None = None,
    meter: MemoryMeter | None = None,
    return_products: bool = False,
):
    """Compressed annihilation objective and its conjugate-coordinate gradient.

    The objective is ``sum_k ||hankel_apply(y, qt[:, k])||^2`` plus the soft
    data-consistency penalty when enabled.  The gradient follows the
    derivative-in-conjugate convention without the factor 2 (an exact line
    search absorbs the scale).  In hard mode the gradient is zeroed at
    observed locations.

    Returns ``(g, obj)``; with ``return_products=True`` also returns the
    forward products ``u`` so a subsequent line search can reuse them.
    """
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != dc.mask.shape:
        raise ShapeError("mask shape does not match iterate shape")
    u = hankel_apply(y, qt, kernel, region, counters=counters, meter=meter)
    umat = u[:, None] if u.ndim == 1 else u
    obj = float(np.vdot(umat, umat).real)
    g = kspace_adjoint_scatter(qt, umat, kernel, region, y.shape, counters=counters, meter=meter)
    if dc.mode == "soft":
        res = _soft_residual(y, dc)
        obj += dc.lam * float(np.vdot(res, res).real)
        g += dc.lam * res
    else:
        g[dc.mask == 1] = 0.0
    if return_products:
        return g, obj, umat
    return g, obj


def exact_line_search(
    y: np.ndarray,
    g: np.ndarray,
    qt: np.ndarray,
    kernel: KernelMask,
    region: Region,
    dc: DataConsistency,
    u: np.ndarray | None = None,
    counters: Counters | None = None,
    meter: MemoryMeter | None = None,
    return_decrease: bool = False,
):
    """Optimal step size for the update ``y - eta * g``.

    The objective is an exact quadratic in ``eta``; the minimizer is

        eta* = (sum_k Re<w_k, u_k> + soft term) / (sum_k ||w_k||^2 + soft term)

    with ``u_k = hankel_apply(y, qt_k)`` and ``w_k = hankel_apply(g, qt_k)``.
    Pass ``u`` to reuse forward products already computed for the gradient;
    the search then costs exactly one forward application per column.

    Raises
    ------
    DegenerateDirectionError
        If the curvature term is zero (direction annihilated by every
        kernel and, in soft mode, unobserved-only).
    """
    y = np.asarray(y, dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    if u is None:
        u = hankel_apply(y, qt, kernel, region, counters=counters, meter=meter)
    w = hankel_apply(g, qt, kernel, region, counters=counters, meter=meter)
    num = float(np.vdot(w, u).real)
    den = float(np.vdot(w, w).real)
    if dc.mode == "soft":
        mg = np.where(dc.mask == 1, g, 0.0 + 0.0j)
        res = _soft_residual(y, dc)
        num += dc.lam * float(np.vdot(mg, res).real)
        den += dc.lam * float(np.vdot(mg, mg).real)
    if den <= 0.0 or not math.isfinite(den):
        raise DegenerateDirectionError("line-search curvature is zero; direction is annihilated")
    eta = num / den
    if return_decrease:
        # phi(eta*) = phi(0) - num^2/den for the exact quadratic
        return eta, num * num / den
    return eta

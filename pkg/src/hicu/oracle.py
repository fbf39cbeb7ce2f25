"""Dense small-instance ground truth for the matrix-free operators.

Everything here materializes the lifted matrix and is intentionally
single-threaded and simple: it exists so the fast paths can be checked
against unambiguous reference computations, and to provide the dense
completion baseline used in the speed comparisons.  Instance sizes are
capped at ``s * n <= HICU_DENSE_THRESHOLD`` (default ``2**24``) entries.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .arrays import mask_apply
from .errors import ShapeError, SizeError
from .hankel import DataConsistency, KernelMask, Region, _window_pieces, full_region

__all__ = [
    "dense_threshold",
    "DenseHankel",
    "build_hankel_dense",
    "tail_energy_dense",
    "numerical_rank",
    "structure_project",
    "cadzow_complete",
    "gradient_bruteforce",
]

_DEFAULT_THRESHOLD = 2**24


def dense_threshold() -> int:
    """Size cap on ``s * n``; the HICU_DENSE_THRESHOLD env var overrides it."""
    raw = os.environ.get("HICU_DENSE_THRESHOLD")
    if raw is None:
        return _DEFAULT_THRESHOLD
    try:
        value = int(raw)
        if value < 1:
            raise ValueError
    except ValueError:
        raise SizeError(f"HICU_DENSE_THRESHOLD must be a positive integer, got {raw!r}") from None
    return value


def _check_size(kernel: KernelMask, region: Region) -> None:
    cap = dense_threshold()
    if region.s * kernel.n > cap:
        raise SizeError(
            f"dense instance {region.s} x {kernel.n} exceeds threshold {cap}; "
            "raise HICU_DENSE_THRESHOLD to override"
        )


@dataclass(eq=False)
class DenseHankel:
    """Explicit lifted matrix with its index maps.

    ``matrix[i, kappa] = X[row_index[i] + col_index[kappa]]`` with wrapping on
    circular axes.
    """

    matrix: np.ndarray
    row_index: np.ndarray  # (s, ndim) region positions, row-major
    col_index: np.ndarray  # (n, ndim) kernel support positions, row-major


def _region_positions(region: Region) -> np.ndarray:
    grids = np.meshgrid(
        *[np.arange(o, o + e) for o, e in zip(region.offsets, region.extents)], indexing="ij"
    )
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def build_hankel_dense(x: np.ndarray, kernel: KernelMask, region: Region) -> DenseHankel:
    """Materialize the lifted matrix column by column."""
    x = np.asarray(x, dtype=np.complex128)
    region.validate(kernel, x.shape)
    _check_size(kernel, region)
    s, n = region.s, kernel.n
    mat = np.empty((s, n), dtype=np.complex128)
    col3 = mat.T.reshape((n,) + region.extents)
    for j, kappa in enumerate(kernel.positions):
        for dst, src in _window_pieces(kappa, x.shape, region):
            col3[j][dst] = x[src]
    return DenseHankel(matrix=mat, row_index=_region_positions(region), col_index=kernel.positions.copy())


def tail_energy_dense(x: np.ndarray, kernel: KernelMask, region: Region, r: int) -> float:
    """Sum of the squared singular values beyond the first ``r``."""
    h = build_hankel_dense(x, kernel, region).matrix
    if r < 0:
        raise ShapeError("rank must be nonnegative")
    if r >= min(h.shape):
        return 0.0
    sv = scipy.linalg.svdvals(h)
    return float(np.sum(sv[r:] ** 2))


def numerical_rank(
    x: np.ndarray, kernel: KernelMask, region: Region, rel_tol: float = 1e-8
) -> int:
    """Number of singular values above ``rel_tol`` times the largest."""
    h = build_hankel_dense(x, kernel, region).matrix
    sv = scipy.linalg.svdvals(h)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > rel_tol * sv[0]))


def structure_project(h: np.ndarray, kernel: KernelMask, region: Region, dims) -> np.ndarray:
    """De-lift a matrix back to k-space, averaging entries that share a location.

    All matrix entries mapping to the same k-space sample are averaged with
    equal weight; locations touched by no entry are zero.  Applying
    lift-then-project twice equals applying it once.
    """
    dims = tuple(int(d) for d in dims)
    region.validate(kernel, dims)
    if h.shape != (region.s, kernel.n):
        raise ShapeError(f"matrix shape {h.shape} does not match {(region.s, kernel.n)}")
    acc = np.zeros(dims, dtype=np.complex128)
    count = np.zeros(dims, dtype=np.int64)
    col3 = np.ascontiguousarray(h.T).reshape((kernel.n,) + region.extents)
    ones = np.ones(region.extents, dtype=np.int64)
    for j, kappa in enumerate(kernel.positions):
        for dst, src in _window_pieces(kappa, dims, region):
            acc[src] += col3[j][dst]
            count[src] += ones[dst]
    np.divide(acc, count, out=acc, where=count > 0)
    return acc


def _svd_truncate(h: np.ndarray, r: int) -> np.ndarray:
    u, sv, vh = scipy.linalg.svd(h, full_matrices=False, lapack_driver="gesdd")
    k = min(r, sv.size)
    return (u[:, :k] * sv[:k]) @ vh[:k, :]


def cadzow_complete(
    x0: np.ndarray,
    mask: np.ndarray,
    kernel: KernelMask,
    r: int,
    iterations: int,
    circular_axes=(),
    callback=None,
) -> np.ndarray:
    """Dense completion baseline: truncate, re-structure, re-impose data.

    Each sweep lifts the current k-space over the full output region,
    truncates the matrix to rank ``r`` by SVD, de-lifts by structure
    projection, and resets observed samples to their measured values
    exactly.  ``callback(it, x)`` is invoked after every sweep.
    """
    x = np.asarray(x0, dtype=np.complex128).copy()
    if x.shape != np.asarray(mask).shape:
        raise ShapeError("mask shape does not match k-space shape")
    region = full_region(x.shape, kernel, circular_axes)
    _check_size(kernel, region)
    observed = np.asarray(mask) == 1
    data = x[observed].copy()
    for it in range(iterations):
        h = build_hankel_dense(x, kernel, region).matrix
        h = _svd_truncate(h, r)
        x = structure_project(h, kernel, region, x.shape)
        x[observed] = data
        if callback is not None:
            callback(it, x)
    return x


def gradient_bruteforce(
    y: np.ndarray,
    qt: np.ndarray,
    kernel: KernelMask,
    region: Region,
    dc: DataConsistency,
    h: float = 1e-6,
    max_unknowns: int = 4096,
) -> np.ndarray:
    """Central-difference reference for :func:`hicu.objective_and_gradient`.

    Perturbs the real and imaginary part of every element independently and
    assembles ``(d/da + i d/db)/2``, matching the analytic convention.  In
    hard mode observed entries are skipped and reported as exactly zero.
    """
    y = np.array(y, dtype=np.complex128, copy=True)
    if y.size > max_unknowns:
        raise SizeError(f"instance has {y.size} unknowns, cap is {max_unknowns}")

    from .hankel import hankel_apply  # local import to keep module load light

    def cost(arr: np.ndarray) -> float:
        u = hankel_apply(arr, qt, kernel, region)
        val = float(np.vdot(u, u).real)
        if dc.mode == "soft":
            res = mask_apply(arr, dc.mask) - mask_apply(dc.x0, dc.mask)
            val += dc.lam * float(np.vdot(res, res).real)
        return val

    grad = np.zeros_like(y)
    flat = y.reshape(-1)
    gflat = grad.reshape(-1)
    observed = (np.asarray(dc.mask).reshape(-1) == 1) if dc.mode == "hard" else None
    for idx in range(flat.size):
        if observed is not None and observed[idx]:
            continue
        base = flat[idx]
        flat[idx] = base + h
        fp = cost(y)
        flat[idx] = base - h
        fm = cost(y)
        da = (fp - fm) / (2 * h)
        flat[idx] = base + 1j * h
        fp = cost(y)
        flat[idx] = base - 1j * h
        fm = cost(y)
        db = (fp - fm) / (2 * h)
        flat[idx] = base
        gflat[idx] = 0.5 * (da + 1j * db)
    return grad

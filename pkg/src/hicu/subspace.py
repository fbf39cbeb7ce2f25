"""Nullspace estimation: randomized SVD, Householder complement, JL compression.

The randomized SVD here is single pass: with sketch width ``l = ceil(1.5 r)``
it spends exactly ``l`` forward and ``l`` adjoint convolution applications
and never forms the lifted matrix.  Its dominant scratch buffer is the
``s x l`` sketch, i.e. 1.5 r s complex values plus lower-order terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack as _lapack

from .errors import DegenerateInputError, ParameterError
from .hankel import Counters, KernelMask, MemoryMeter, Region, hankel_adjoint_apply, hankel_apply

__all__ = [
    "RngStream",
    "NullspaceBasis",
    "rsvd_right_vectors",
    "householder_nullspace",
    "jl_compress",
]


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream addressed by a seed and integer ids.

    Identical ``(seed, ids)`` reproduce identical draws bit-exactly; child
    streams extend the id tuple, so e.g. per-(stage, iteration, step) draws
    are independent yet reproducible.
    """

    seed: int
    ids: tuple[int, ...] = ()

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.ids + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.ids)
        return np.random.Generator(np.random.PCG64(ss))


def complex_normal(rng: np.random.Generator, shape, scale: float = 1.0) -> np.ndarray:
    """i.i.d. complex Gaussian with per-entry variance ``scale`` (split re/im)."""
    block = rng.standard_normal(tuple(shape) + (2,))
    return (block[..., 0] + 1j * block[..., 1]) * math.sqrt(scale / 2.0)


@dataclass(eq=False)
class NullspaceBasis:
    """Orthonormal complement ``q`` of the retained right singular subspace."""

    q: np.ndarray  # (n, n - r)
    r: int

    @property
    def n(self) -> int:
        return self.q.shape[0]


def rsvd_right_vectors(
    x: np.ndarray,
    kernel: KernelMask,
    region: Region,
    r: int,
    rng: RngStream,
    counters: Counters | None = None,
    meter: MemoryMeter | None = None,
) -> np.ndarray:
    """Principal ``r`` right singular vectors of the lifted matrix, sketched.

    Single-pass range finder: draw a complex Gaussian test matrix of width
    ``l = ceil(1.5 r)``, push it through the forward operator, orthonormalize
    the range in place, pull back through the adjoint, and take the leading
    left singular vectors of the small factor.

    Scratch is budgeted against ``1.6 r s`` complex values: the window-slab
    width adapts to what the budget leaves after the sketch, falling back to
    the view-based operator paths when nothing is left.
    """
    n = kernel.n
    s = region.s
    if not (1 <= r < n):
        raise ParameterError(f"rank must satisfy 1 <= r < n={n}, got {r}")
    ell = math.ceil(1.5 * r)
    if ell > s:
        raise ParameterError(f"sketch width {ell} exceeds region size {s}")
    meter = meter or MemoryMeter()
    gen = rng.generator()

    budget = int(1.6 * r * s)
    # forward pass: sketch rows are drawn per slab block, so live scratch is
    # the sketch itself plus one (s + l)-per-position slab block
    slack_fwd = budget - s * ell
    chunk_fwd = max(0, min(64, slack_fwd // (s + ell), n))

    if chunk_fwd >= 1:
        # sketch rows are drawn one slab block at a time, in support order,
        # so the full test matrix is never resident
        from .hankel import _gather_slab, _zgemm  # shared package internals

        z = np.zeros((s, ell), dtype=np.complex128, order="F")
        held_z = meter.alloc(s * ell)
        slab = np.empty((s, chunk_fwd), dtype=np.complex128, order="F")
        held_slab = meter.alloc(s * chunk_fwd + chunk_fwd * ell)
        for start in range(0, n, chunk_fwd):
            block = kernel.positions[start : start + chunk_fwd]
            omega_block = complex_normal(gen, (len(block), ell), 1.0)
            _gather_slab(x, kernel, region, block, slab[:, : len(block)])
            z = _zgemm(1.0, slab[:, : len(block)], omega_block, beta=1.0, c=z, overwrite_c=True)
        del slab
        meter.free(held_slab)
        if counters is not None:
            counters.forward += ell
    else:
        omega = complex_normal(gen, (n, ell), 1.0)
        held_omega = meter.alloc(n * ell)
        z = np.asfortranarray(
            hankel_apply(x, omega, kernel, region, pos_chunk=0, counters=counters, meter=meter)
        )
        held_z = meter.alloc(s * ell)
        del omega
        meter.free(held_omega)

    # orthonormalize the range in place (LAPACK works inside the z buffer)
    qr, tau, _, info = _lapack.zgeqrf(z, overwrite_a=1)
    if info != 0:
        raise DegenerateInputError(f"range factorization failed (info={info})")
    u_range, _, info = _lapack.zungqr(qr, tau, overwrite_a=1)
    if info != 0:
        raise DegenerateInputError(f"range extraction failed (info={info})")

    # adjoint pass: pick the slab width the remaining budget allows, else
    # run the zero-slab operator path
    slack_adj = budget - s * ell - n * ell
    chunk_adj = max(0, min(64, slack_adj // s, n))
    w = hankel_adjoint_apply(
        x, u_range, kernel, region, pos_chunk=chunk_adj, counters=counters, meter=meter
    )
    held_w = meter.alloc(n * ell)
    del u_range, z, qr
    meter.free(held_z)

    left, _, _, info = _lapack.zgesdd(w, compute_uv=1, full_matrices=0)
    if info != 0:
        raise DegenerateInputError(f"small SVD failed (info={info})")
    v = np.ascontiguousarray(left[:, :r])
    meter.free(held_w)
    return v


def householder_nullspace(v: np.ndarray, tol: float = 1e-12) -> NullspaceBasis:
    """Orthonormal basis of the complement of ``span(v)`` via r reflections.

    ``v`` must have (numerically) orthonormal columns.  Each reflection is an
    elementary unitary ``I - tau w w^H`` chosen so the pivot maps to a
    nonnegative real multiple of the unit vector, which makes the output
    deterministic.  The basis is the product of the reflections applied to
    the trailing ``n - r`` identity columns.
    """
    v = np.array(v, dtype=np.complex128, order="C", copy=True)
    if v.ndim != 2:
        raise DegenerateInputError("v must be a 2-D matrix")
    n, r = v.shape
    if r > n:
        raise DegenerateInputError(f"cannot have {r} orthonormal columns in dimension {n}")
    reflectors: list[tuple[np.ndarray | None, complex]] = []
    for col in range(r):
        xvec = v[col:, col]
        x0 = complex(xvec[0])
        tail_sq = float(np.real(np.vdot(xvec[1:], xvec[1:])))
        beta = np.sqrt(tail_sq + x0.real * x0.real + x0.imag * x0.imag)
        if beta < tol:
            raise DegenerateInputError(f"column {col} is numerically dependent on its predecessors")
        if tail_sq == 0.0 and x0.imag == 0.0 and x0.real >= 0.0:
            # pivot already a nonnegative real multiple of e0
            reflectors.append((None, 0.0 + 0.0j))
            continue
        if x0.real > 0.0:
            # cancellation-free form of x0 - beta
            u0 = (-tail_sq + 2j * beta * x0.imag) / (np.conj(x0) + beta)
        else:
            u0 = x0 - beta
        w = xvec.copy()
        w[0] = u0
        w /= u0
        tau = (beta - np.conj(x0)) / beta
        # apply to the remaining columns to expose the next pivot
        if col + 1 < r:
            rest = v[col:, col + 1 :]
            rest -= np.outer(tau * w, w.conj() @ rest)
        reflectors.append((w, tau))

    # the triangularization gives H_r ... H_1 V = [R; 0], so the unitary whose
    # leading columns span V is the product of the ADJOINT reflectors; its
    # trailing columns are the complement
    m = n - r
    q = np.zeros((n, m), dtype=np.complex128)
    q[r:, :] = np.eye(m, dtype=np.complex128)
    for col in range(r - 1, -1, -1):
        w, tau = reflectors[col]
        if w is None:
            continue
        block = q[col:, :]
        block -= np.outer(np.conj(tau) * w, w.conj() @ block)
    return NullspaceBasis(q=q, r=r)


def jl_compress(q: np.ndarray, p: int, rng: RngStream) -> np.ndarray:
    """Random Gaussian compression of the nullspace to ``p`` columns.

    The projection matrix has i.i.d. complex zero-mean entries with total
    variance ``1/p`` per entry, so the compressed annihilation energy is an
    unbiased estimate of the full one.  Callers wanting a fresh projection
    per gradient step pass a per-step child stream.
    """
    if p < 1:
        raise ParameterError(f"compression dimension must be >= 1, got {p}")
    q = np.asarray(q, dtype=np.complex128)
    if q.ndim != 2 or q.shape[1] < 1:
        raise ParameterError("nullspace must have at least one column")
    proj = complex_normal(rng.generator(), (q.shape[1], p), 1.0 / p)
    return q @ proj

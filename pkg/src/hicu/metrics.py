"""Reconstruction quality metrics: SER, high-frequency error, structural similarity.

All three follow a higher-is-better convention.  SER operates on raw
(complex) arrays; the other two on magnitude images.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage, signal

from .errors import DegenerateInputError, ShapeError

__all__ = ["ser", "hfen", "ssim_coil_avg", "log_kernel"]


def ser(ref: np.ndarray, est: np.ndarray) -> float:
    """Signal-to-error ratio ``20 log10(||ref|| / ||est - ref||)`` in dB.

    Returns ``+inf`` when the arrays are identical.  SER is invariant under
    any joint unitary transform of both arguments, so it reads the same in
    k-space and in the image domain.
    """
    ref = np.asarray(ref)
    est = np.asarray(est)
    if ref.shape != est.shape:
        raise ShapeError(f"shape mismatch: {ref.shape} vs {est.shape}")
    nref = float(np.linalg.norm(ref))
    if nref == 0.0:
        raise DegenerateInputError("reference is identically zero")
    nerr = float(np.linalg.norm(est - ref))
    if nerr == 0.0:
        return float("inf")
    return 20.0 * float(np.log10(nref / nerr))


def log_kernel(size: int = 15, sigma: float = 1.5) -> np.ndarray:
    """Zero-sum Laplacian-of-Gaussian filter tap matrix."""
    half = (size - 1) / 2.0
    y, x = np.mgrid[-half : half + 1, -half : half + 1]
    rsq = x * x + y * y
    g = np.exp(-rsq / (2.0 * sigma**2))
    h = (rsq - 2.0 * sigma**2) * g / (sigma**4 * g.sum())
    return h - h.mean()


def _log_filter(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # symmetric boundary: edge samples are mirrored including themselves
    return ndimage.convolve(img, taps, mode="reflect")


def hfen(ref_img: np.ndarray, est_img: np.ndarray, slice_axes: tuple[int, int] | None = None) -> float:
    """High-frequency error in dB, higher is better.

    ``20 log10(||LoG(ref)|| / ||LoG(est - ref)||)`` with a 15x15
    Laplacian-of-Gaussian (sigma 1.5).  The zero-sum filter annihilates
    constants, so a pure offset scores ``+inf``.  Inputs must be real 2-D
    images, or higher-rank with ``slice_axes`` naming the image plane; the
    norms then aggregate over all slices.
    """
    ref_img = np.asarray(ref_img, dtype=np.float64)
    est_img = np.asarray(est_img, dtype=np.float64)
    if ref_img.shape != est_img.shape:
        raise ShapeError(f"shape mismatch: {ref_img.shape} vs {est_img.shape}")
    if ref_img.ndim != 2 and slice_axes is None:
        raise ShapeError("non-2D input needs slice_axes=(row_axis, col_axis)")
    taps = log_kernel()

    def filtered(a: np.ndarray) -> np.ndarray:
        if a.ndim == 2:
            return _log_filter(a, taps)
        ax = tuple(s % a.ndim for s in slice_axes)
        moved = np.moveaxis(a, ax, (0, 1))
        out = np.empty_like(moved)
        for idx in np.ndindex(moved.shape[2:]):
            out[(slice(None), slice(None)) + idx] = _log_filter(
                moved[(slice(None), slice(None)) + idx], taps
            )
        return out

    num = float(np.linalg.norm(filtered(ref_img)))
    if num == 0.0:
        raise DegenerateInputError("reference has no high-frequency content")
    den = float(np.linalg.norm(filtered(est_img - ref_img)))
    # the zero-sum filter annihilates constants up to rounding; report the
    # sentinel when the filtered error is negligible at double precision
    if den <= 1e-12 * num:
        return float("inf")
    return 20.0 * float(np.log10(num / den))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    y, x = np.mgrid[-half : half + 1, -half : half + 1]
    w = np.exp(-(x * x + y * y) / (2.0 * sigma**2))
    return w / w.sum()


def _ssim_2d(x: np.ndarray, y: np.ndarray, drange: float, k1: float, k2: float) -> float:
    win = _gaussian_window()
    if x.shape[0] < win.shape[0] or x.shape[1] < win.shape[1]:
        raise ShapeError("image smaller than the 11x11 similarity window")
    c1 = (k1 * drange) ** 2
    c2 = (k2 * drange) ** 2

    def f(a):
        return signal.convolve(a, win, mode="valid", method="direct")

    mx = f(x)
    my = f(y)
    vx = f(x * x) - mx * mx
    vy = f(y * y) - my * my
    cxy = f(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def ssim_coil_avg(
    ref: np.ndarray,
    est: np.ndarray,
    coil_axis: int = -1,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean structural similarity of coil magnitude images.

    Per coil: SSIM of ``|ref_c|`` vs ``|est_c|`` with an 11x11 Gaussian
    window (sigma 1.5), dynamic range taken from the reference coil image.
    Extra leading axes (e.g. time) are averaged as independent slices.
    Being magnitude-based, the score ignores per-coil global phase.
    """
    ref = np.asarray(ref)
    est = np.asarray(est)
    if ref.shape != est.shape:
        raise ShapeError(f"shape mismatch: {ref.shape} vs {est.shape}")
    if ref.ndim < 2:
        raise ShapeError("ssim needs at least a 2-D image")
    if ref.ndim == 2:
        # plain image pair: single implicit coil
        ref_m = np.abs(ref)[..., None]
        est_m = np.abs(est)[..., None]
    else:
        axis = coil_axis % ref.ndim
        ref_m = np.moveaxis(np.abs(ref), axis, -1)
        est_m = np.moveaxis(np.abs(est), axis, -1)
    lead = ref_m.shape[2:-1]
    scores = []
    for coil in range(ref_m.shape[-1]):
        for idx in np.ndindex(lead):
            sl = (slice(None), slice(None)) + idx + (coil,)
            a = np.ascontiguousarray(ref_m[sl], dtype=np.float64)
            b = np.ascontiguousarray(est_m[sl], dtype=np.float64)
            drange = float(a.max())
            if drange == 0.0:
                drange = 1.0
            scores.append(_ssim_2d(a, b, drange, k1, k2))
    return float(np.mean(scores))

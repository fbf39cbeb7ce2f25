"""Core array operations on complex k-space tensors.

Conventions used throughout the package:

* tensors are C-ordered ``complex128`` numpy arrays, dimension order
  ``[spatial..., time (optional), coil]``,
* sampling masks are ``{0,1}``-valued ``uint8`` arrays of the same shape,
* discrete Fourier transforms are unitary with the DC sample at index
  ``floor(N/2)`` along every transformed axis.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import ShapeError

__all__ = [
    "as_ctensor",
    "as_mask",
    "mask_apply",
    "crop_center",
    "embed_center",
    "ifft_image",
    "fft_kspace",
    "ssos_combine",
]


def as_ctensor(x) -> np.ndarray:
    """Coerce ``x`` to a C-ordered complex128 ndarray."""
    arr = np.ascontiguousarray(x, dtype=np.complex128)
    if arr.ndim == 0:
        raise ShapeError("tensor must have at least one dimension")
    return arr


def as_mask(m) -> np.ndarray:
    """Coerce ``m`` to a {0,1}-valued uint8 ndarray, validating the values."""
    arr = np.ascontiguousarray(m)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    else:
        arr = arr.astype(np.uint8, casting="unsafe")
        if not np.array_equal(arr, np.asarray(m)):
            raise ShapeError("mask values must be exactly 0 or 1")
    if not np.all((arr == 0) | (arr == 1)):
        raise ShapeError("mask values must be exactly 0 or 1")
    return arr


def mask_apply(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero the entries of ``x`` where ``mask`` is 0.

    Entries with ``mask == 1`` are copied bit-exactly; the operation is
    idempotent.
    """
    x = np.asarray(x)
    mask = np.asarray(mask)
    if x.shape != mask.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match tensor shape {x.shape}")
    out = np.zeros_like(x)
    on = mask == 1
    out[on] = x[on]
    return out


def _center_offsets(dims: Sequence[int], sub_dims: Sequence[int]) -> tuple[int, ...]:
    if len(dims) != len(sub_dims):
        raise ShapeError(f"rank mismatch: {len(dims)} vs {len(sub_dims)}")
    offs = []
    for n, s in zip(dims, sub_dims):
        if not (1 <= s <= n):
            raise ShapeError(f"sub-extent {s} not in [1, {n}]")
        offs.append((n - s) // 2)
    return tuple(offs)


def crop_center(x: np.ndarray, sub_dims: Sequence[int]) -> np.ndarray:
    """Centered sub-array with per-axis offset ``floor((N - S)/2)``."""
    x = np.asarray(x)
    offs = _center_offsets(x.shape, sub_dims)
    sl = tuple(slice(o, o + s) for o, s in zip(offs, sub_dims))
    return x[sl].copy()


def embed_center(x: np.ndarray, full_dims: Sequence[int]) -> np.ndarray:
    """Zero-pad ``x`` into an array of shape ``full_dims`` at the centered offset.

    Inverse of :func:`crop_center` on the cropped window: cropping the result
    with ``x.shape`` returns ``x`` exactly.
    """
    x = np.asarray(x)
    offs = _center_offsets(full_dims, x.shape)
    out = np.zeros(tuple(full_dims), dtype=x.dtype)
    sl = tuple(slice(o, o + s) for o, s in zip(offs, x.shape))
    out[sl] = x
    return out


def _check_axes(ndim: int, axes: Sequence[int]) -> tuple[int, ...]:
    axes = tuple(int(a) for a in axes)
    norm = tuple(a % ndim if -ndim <= a < ndim else a for a in axes)
    if any(not (0 <= a < ndim) for a in norm):
        raise ShapeError(f"axis out of range for ndim={ndim}: {axes}")
    if len(set(norm)) != len(norm):
        raise ShapeError(f"duplicate axes: {axes}")
    return norm


def ifft_image(kspace: np.ndarray, spatial_axes: Sequence[int]) -> np.ndarray:
    """Centered unitary inverse DFT along ``spatial_axes``.

    DC is taken at index ``floor(N/2)`` of the input; the output is shifted
    back to the same convention.  Preserves the Frobenius norm.
    """
    kspace = np.asarray(kspace)
    axes = _check_axes(kspace.ndim, spatial_axes)
    shifted = np.fft.ifftshift(kspace, axes=axes)
    img = np.fft.ifftn(shifted, axes=axes, norm="ortho")
    return np.fft.fftshift(img, axes=axes)


def fft_kspace(image: np.ndarray, spatial_axes: Sequence[int]) -> np.ndarray:
    """Centered unitary forward DFT along ``spatial_axes`` (inverse of ifft_image)."""
    image = np.asarray(image)
    axes = _check_axes(image.ndim, spatial_axes)
    shifted = np.fft.ifftshift(image, axes=axes)
    ksp = np.fft.fftn(shifted, axes=axes, norm="ortho")
    return np.fft.fftshift(ksp, axes=axes)


def ssos_combine(images: np.ndarray, coil_axis: int = -1) -> np.ndarray:
    """Square-root sum-of-squares combination over the coil axis.

    Returns a real nonnegative array with the coil axis dropped.  Invariant
    to a global phase applied to any single coil.
    """
    images = np.asarray(images)
    axis = coil_axis % images.ndim
    if images.shape[axis] < 1:
        raise ShapeError("coil axis must have extent >= 1")
    return np.sqrt(np.sum(np.abs(images) ** 2, axis=axis))

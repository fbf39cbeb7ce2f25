"""Synthetic multi-coil k-space with provable annihilation structure.

The phantoms pair a piecewise-ellipse magnitude image with coil sensitivity
maps that are truncated Fourier series: each map's spectrum lives on a small
centered box of half-width ``sens_kspace_order``.  Products of two such
coils' spectra commute, so every coil pair yields an exact annihilating
kernel of extent ``2*order + 1`` per spatial axis, which makes the lifted
matrix of the noiseless k-space provably rank deficient — a desk-scale
stand-in for the structure of real multi-coil acquisitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arrays import embed_center, fft_kspace, ifft_image
from .errors import ConfigError, DegenerateInputError
from .subspace import RngStream, complex_normal

__all__ = [
    "Ellipse",
    "PhantomSpec",
    "MaskSpec",
    "DEFAULT_ELLIPSES",
    "gen_phantom",
    "gen_mask",
    "add_noise",
]

_STREAM_SENS = 3
_STREAM_MASK = 4
_STREAM_NOISE = 5


@dataclass(frozen=True)
class Ellipse:
    """One additive ellipse: normalized center/axes in [-1, 1] coordinates."""

    center: tuple[float, ...]
    axes: tuple[float, ...]
    angle_deg: float
    intensity: float


# the leading entry covers the whole grid (axes > sqrt(2)): a nonzero base
# intensity keeps the magnitude bounded away from zero over the field of
# view, which keeps the lifted matrix's retained spectrum well conditioned
DEFAULT_ELLIPSES: tuple[Ellipse, ...] = (
    Ellipse((0.0, 0.0), (1.45, 1.45), 0.0, 0.35),
    Ellipse((0.0, 0.0), (0.72, 0.92), 0.0, 1.0),
    Ellipse((0.0, 0.0), (0.64, 0.84), 0.0, -0.4),
    Ellipse((-0.22, 0.0), (0.14, 0.36), 18.0, 0.25),
    Ellipse((0.22, 0.0), (0.14, 0.36), -18.0, 0.25),
    Ellipse((0.0, 0.38), (0.16, 0.19), 0.0, 0.35),
    Ellipse((0.0, -0.3), (0.2, 0.16), 0.0, 0.2),
    Ellipse((0.0, -0.02), (0.05, 0.05), 0.0, 0.3),
)


@dataclass
class PhantomSpec:
    """Configuration of the synthetic multi-coil dataset.

    ``sens_kspace_order`` is the half-width of the sensitivity spectra; exact
    annihilating kernels need spatial kernel extents of at least
    ``2*sens_kspace_order + 1``.
    """

    nx: int
    ny: int
    ncoils: int
    sens_kspace_order: int = 1
    nt: int | None = None
    nz: int | None = None
    ellipses: tuple[Ellipse, ...] = field(default_factory=lambda: DEFAULT_ELLIPSES)
    seed: int = 0

    def spatial_dims(self) -> tuple[int, ...]:
        dims = [self.nx, self.ny]
        if self.nz is not None:
            dims.append(self.nz)
        return tuple(dims)

    def dims(self) -> tuple[int, ...]:
        dims = list(self.spatial_dims())
        if self.nt is not None:
            dims.append(self.nt)
        dims.append(self.ncoils)
        return tuple(dims)

    def validate(self) -> None:
        if self.nx < 2 or self.ny < 2 or self.ncoils < 1:
            raise ConfigError("phantom needs nx, ny >= 2 and ncoils >= 1")
        if self.nt is not None and self.nt < 1:
            raise ConfigError("nt must be >= 1")
        if self.nz is not None and self.nz < 2:
            raise ConfigError("nz must be >= 2")
        if self.sens_kspace_order < 0:
            raise ConfigError("sens_kspace_order must be >= 0")
        box = 2 * self.sens_kspace_order + 1
        if any(box > d for d in self.spatial_dims()):
            raise ConfigError(f"sensitivity box {box} exceeds a spatial extent")
        for e in self.ellipses:
            if len(e.center) != len(self.spatial_dims()) or len(e.axes) != len(self.spatial_dims()):
                raise ConfigError("ellipse center/axes rank must match the spatial rank")


def _ellipse_image(spec: PhantomSpec) -> np.ndarray:
    dims = spec.spatial_dims()
    coords = np.meshgrid(
        *[(np.arange(d) - d // 2) / (d / 2.0) for d in dims], indexing="ij"
    )
    img = np.zeros(dims)
    for e in spec.ellipses:
        th = math.radians(e.angle_deg)
        c, s = math.cos(th), math.sin(th)
        u = c * (coords[0] - e.center[0]) + s * (coords[1] - e.center[1])
        v = -s * (coords[0] - e.center[0]) + c * (coords[1] - e.center[1])
        rho = (u / e.axes[0]) ** 2 + (v / e.axes[1]) ** 2
        for d in range(2, len(dims)):
            rho = rho + ((coords[d] - e.center[d]) / e.axes[d]) ** 2
        img += np.where(rho <= 1.0, e.intensity, 0.0)
    return img


def _sensitivities(spec: PhantomSpec) -> np.ndarray:
    """(spatial..., ncoils) smooth maps with compact k-space support."""
    dims = spec.spatial_dims()
    box = (2 * spec.sens_kspace_order + 1,) * len(dims)
    axes = tuple(range(len(dims)))
    npix = float(np.prod(dims))
    nmodes = int(np.prod(box))
    maps = np.empty(dims + (spec.ncoils,), dtype=np.complex128)
    for c in range(spec.ncoils):
        if spec.ncoils == 1 and spec.sens_kspace_order == 0:
            maps[..., 0] = 1.0  # single DC coil: unit sensitivity
            break
        rng = RngStream(spec.seed, (_STREAM_SENS, c)).generator()
        # unit DC part plus random modes with pointwise std ~ 0.5, so maps
        # differ O(1) across the field of view but rarely vanish
        coeffs = complex_normal(rng, box, 1.0)
        if nmodes > 1:
            coeffs *= 0.5 * math.sqrt(npix / (nmodes - 1))
        ksp = embed_center(coeffs, dims)
        ksp[tuple(d // 2 for d in dims)] = math.sqrt(npix)
        maps[..., c] = ifft_image(ksp, axes)
    return maps


def gen_phantom(spec: PhantomSpec) -> tuple[np.ndarray, np.ndarray]:
    """Generate (kspace, coil_images) for the configured phantom.

    Coil image ``c`` is the ellipse image times sensitivity map ``c``; the
    k-space is its centered unitary DFT over the spatial axes.  With ``nt``
    set, ellipse intensities are modulated per frame and the time axis sits
    between space and coils; the time axis is not transformed.
    """
    spec.validate()
    sdims = spec.spatial_dims()
    nsp = len(sdims)
    axes = tuple(range(nsp))
    sens = _sensitivities(spec)
    base = _ellipse_image(spec)

    if spec.nt is None:
        coil_images = base[..., None] * sens
    else:
        frames = []
        for t in range(spec.nt):
            mod = np.zeros(sdims)
            for idx, e in enumerate(spec.ellipses):
                phase = 2.0 * math.pi * (t / spec.nt) + idx * 2.0 * math.pi / max(
                    len(spec.ellipses), 1
                )
                scale = 1.0 + 0.3 * math.sin(phase)
                mod += _ellipse_image(
                    PhantomSpec(
                        nx=spec.nx,
                        ny=spec.ny,
                        ncoils=spec.ncoils,
                        sens_kspace_order=spec.sens_kspace_order,
                        nz=spec.nz,
                        ellipses=(Ellipse(e.center, e.axes, e.angle_deg, e.intensity * scale),),
                        seed=spec.seed,
                    )
                )
            frames.append(mod)
        movie = np.stack(frames, axis=nsp)  # (spatial..., nt)
        coil_images = movie[..., None] * sens[..., None, :].reshape(
            sdims + (1, spec.ncoils)
        )
    kspace = fft_kspace(coil_images, axes)
    return np.ascontiguousarray(kspace), np.ascontiguousarray(coil_images)


@dataclass
class MaskSpec:
    """Sampling pattern configuration.

    Patterns: ``vd_1d`` draws phase-encode lines without replacement with
    density ``(1 + |dk|/sigma)**-decay``; ``random_2d`` samples the last two
    spatial axes uniformly (exact count) with an always-on centered block;
    ``vd_t`` draws an independent ``vd_1d`` per time frame.
    """

    pattern: str
    r: float
    acs: tuple[int, ...] = ()
    seed: int = 0
    vd_decay: float = 2.0
    vd_sigma_frac: float = 0.125

    def validate(self) -> None:
        if self.pattern not in ("vd_1d", "random_2d", "vd_t"):
            raise ConfigError(f"unknown mask pattern {self.pattern!r}")
        if self.r < 1.0:
            raise ConfigError("acceleration must be >= 1")
        if any(a < 0 for a in self.acs):
            raise ConfigError("acs extents must be nonnegative")


def _acs_extent(spec: MaskSpec, idx: int) -> int:
    return int(spec.acs[idx]) if idx < len(spec.acs) else 0


def _vd_line_mask(n: int, target_lines: int, acs: int, spec: MaskSpec, rng) -> np.ndarray:
    if acs > n:
        raise ConfigError(f"ACS extent {acs} exceeds axis extent {n}")
    if target_lines < acs:
        raise ConfigError(f"ACS alone ({acs} lines) exceeds the sampling budget ({target_lines})")
    line = np.zeros(n, dtype=np.uint8)
    lo = (n - acs) // 2
    line[lo : lo + acs] = 1
    remaining = target_lines - acs
    pool = np.flatnonzero(line == 0)
    if remaining > 0:
        center = n // 2
        sigma = max(spec.vd_sigma_frac * n, 1.0)
        weights = (1.0 + np.abs(pool - center) / sigma) ** (-spec.vd_decay)
        weights /= weights.sum()
        chosen = rng.choice(pool, size=remaining, replace=False, p=weights)
        line[chosen] = 1
    return line


def _check_rate(total: int, sampled: int, target: float) -> float:
    achieved = total / sampled
    if abs(achieved - target) > 0.05 * target:
        raise ConfigError(
            f"achieved acceleration {achieved:.3f} deviates more than 5% from target {target}"
        )
    return achieved


def gen_mask(dims, spec: MaskSpec) -> np.ndarray:
    """Binary sampling mask for a tensor of shape ``dims`` (coil axis last).

    The mask is replicated exactly along the readout and coil axes
    (and, except for ``vd_t``, along time).  Raises if the achieved
    acceleration misses the target by more than 5%.
    """
    spec.validate()
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ConfigError("mask needs at least a phase-encode axis and a coil axis")
    mask = np.zeros(dims, dtype=np.uint8)

    if spec.pattern == "vd_1d":
        # [readout, phase, (time,) coil]: line pattern on axis 1
        n = dims[1]
        target_lines = max(1, round(n / spec.r))
        rng = RngStream(spec.seed, (_STREAM_MASK, 0)).generator()
        line = _vd_line_mask(n, target_lines, _acs_extent(spec, 0), spec, rng)
        _check_rate(n, int(line.sum()), spec.r)
        shape = [1] * len(dims)
        shape[1] = n
        mask[...] = line.reshape(shape)
    elif spec.pattern == "random_2d":
        # sample over the last two spatial axes, replicate elsewhere
        sp_axes = (0, 1) if len(dims) == 3 or len(dims) == 2 else (1, 2)
        a0, a1 = dims[sp_axes[0]], dims[sp_axes[1]]
        acs0, acs1 = _acs_extent(spec, 0), _acs_extent(spec, 1)
        if acs0 > a0 or acs1 > a1:
            raise ConfigError("ACS block exceeds the plane extents")
        plane = np.zeros((a0, a1), dtype=np.uint8)
        lo0, lo1 = (a0 - acs0) // 2, (a1 - acs1) // 2
        plane[lo0 : lo0 + acs0, lo1 : lo1 + acs1] = 1
        total = a0 * a1
        budget = max(1, round(total / spec.r))
        forced = int(plane.sum())
        if budget < forced:
            raise ConfigError(f"ACS block ({forced}) exceeds the sampling budget ({budget})")
        pool = np.flatnonzero(plane.reshape(-1) == 0)
        rng = RngStream(spec.seed, (_STREAM_MASK, 0)).generator()
        chosen = rng.choice(pool, size=budget - forced, replace=False)
        flat = plane.reshape(-1)
        flat[chosen] = 1
        _check_rate(total, int(plane.sum()), spec.r)
        shape = [1] * len(dims)
        shape[sp_axes[0]], shape[sp_axes[1]] = a0, a1
        mask[...] = plane.reshape(shape)
    else:  # vd_t
        if len(dims) < 3:
            raise ConfigError("vd_t needs [readout, phase, time, coil] dims")
        n, nt = dims[1], dims[-2]
        target_lines = max(1, round(n / spec.r))
        for t in range(nt):
            rng = RngStream(spec.seed, (_STREAM_MASK, t)).generator()
            line = _vd_line_mask(n, target_lines, _acs_extent(spec, 0), spec, rng)
            _check_rate(n, int(line.sum()), spec.r)
            shape = [1] * len(dims)
            shape[1] = n
            mask[..., t, :] = line.reshape(shape)[..., 0, :]
    return mask


def add_noise(x: np.ndarray, snr_db: float, rng: RngStream) -> np.ndarray:
    """Add complex Gaussian noise at an exact signal-to-noise ratio in dB.

    ``snr_db=inf`` returns the input unchanged.  The drawn noise is rescaled
    so ``20*log10(||x|| / ||noise||)`` equals ``snr_db`` exactly.
    """
    x = np.asarray(x, dtype=np.complex128)
    if math.isinf(snr_db) and snr_db > 0:
        return x.copy()
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        raise DegenerateInputError("cannot set an SNR against a zero signal")
    gen = rng.child(_STREAM_NOISE).generator()
    noise = complex_normal(gen, x.shape, 1.0)
    noise *= (norm * 10.0 ** (-snr_db / 20.0)) / np.linalg.norm(noise)
    return x + noise

"""Calibrationless k-space recovery via structured low-rank completion.

The lifted multi-level Hankel matrix of multi-coil k-space is approximately
rank deficient; this package completes unobserved samples by alternating
between estimating an annihilating nullspace (randomized SVD plus
Householder completion) and taking exact-line-search gradient steps on the
samples, with random nullspace compression and center-out region scheduling
keeping both the arithmetic and the memory footprint proportional to a few
convolutions.
"""

from .arrays import (
    crop_center,
    embed_center,
    fft_kspace,
    ifft_image,
    mask_apply,
    ssos_combine,
)
from .errors import (
    ArrayFormatError,
    ConfigError,
    DegenerateDirectionError,
    DegenerateInputError,
    ParameterError,
    ShapeError,
    SizeError,
)
from .hankel import (
    Counters,
    DataConsistency,
    KernelMask,
    MemoryMeter,
    Region,
    exact_line_search,
    full_region,
    hankel_adjoint_apply,
    hankel_apply,
    kspace_adjoint_scatter,
    objective_and_gradient,
)
from .metrics import hfen, ser, ssim_coil_avg
from .oracle import (
    build_hankel_dense,
    cadzow_complete,
    dense_threshold,
    gradient_bruteforce,
    numerical_rank,
    structure_project,
    tail_energy_dense,
)
from .simdata import Ellipse, MaskSpec, PhantomSpec, add_noise, gen_mask, gen_phantom
from .solver import (
    ReconReport,
    SolverSchedule,
    StageSpec,
    hicu_reconstruct,
    stage_region,
)
from .subspace import (
    NullspaceBasis,
    RngStream,
    householder_nullspace,
    jl_compress,
    rsvd_right_vectors,
)
from .arrayio import read_array, write_array

__version__ = "0.1.0"

__all__ = [
    "ArrayFormatError",
    "ConfigError",
    "Counters",
    "DataConsistency",
    "DegenerateDirectionError",
    "DegenerateInputError",
    "Ellipse",
    "KernelMask",
    "MaskSpec",
    "MemoryMeter",
    "NullspaceBasis",
    "ParameterError",
    "PhantomSpec",
    "ReconReport",
    "Region",
    "RngStream",
    "ShapeError",
    "SizeError",
    "SolverSchedule",
    "StageSpec",
    "add_noise",
    "build_hankel_dense",
    "cadzow_complete",
    "crop_center",
    "dense_threshold",
    "embed_center",
    "exact_line_search",
    "fft_kspace",
    "full_region",
    "gen_mask",
    "gen_phantom",
    "gradient_bruteforce",
    "hankel_adjoint_apply",
    "hankel_apply",
    "hfen",
    "hicu_reconstruct",
    "householder_nullspace",
    "ifft_image",
    "jl_compress",
    "kspace_adjoint_scatter",
    "mask_apply",
    "numerical_rank",
    "objective_and_gradient",
    "read_array",
    "rsvd_right_vectors",
    "ser",
    "ssim_coil_avg",
    "ssos_combine",
    "stage_region",
    "structure_project",
    "tail_energy_dense",
    "write_array",
]

"""Simulation toolkit for all-optical CNN inference with interferometer meshes and delay-line repatching."""

from .errors import (
    BadMagic,
    ConvergenceFailure,
    DimensionMismatch,
    DimensionOverflow,
    GeometryMismatch,
    IdxError,
    NonConvergence,
    NotOrthogonal,
    OptoCNNError,
    TruncatedPayload,
)
from .reck import PhaseNoiseModel, PhaseSchedule, extract_phases, perturb_phases, reconstruct_orthogonal
from .photonic import KernelFactors, Nonlinearity, apply_layer, factor_kernel, realize_kernel

__version__ = "0.1.0"

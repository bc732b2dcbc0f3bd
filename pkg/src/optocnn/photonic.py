"""Kernel matrices realized as mesh / attenuator / mesh (U, Sigma, V) and applied to patch streams."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch
from .reck import (
    PhaseNoiseModel,
    PhaseSchedule,
    check_orthogonal,
    extract_phases,
    leading_rows,
    perturb_phases,
    reconstruct_orthogonal,
)
from .svd import embed_sigma, jacobi_svd

FACTORS_VERSION = 1
RESIDUAL_TOL = 1e-9


class Nonlinearity(str, Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    IDENTITY = "identity"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self is Nonlinearity.RELU:
            return np.maximum(x, 0.0)
        if self is Nonlinearity.SIGMOID:
            return 1.0 / (1.0 + np.exp(-x))
        if self is Nonlinearity.TANH:
            return np.tanh(x)
        return x


def as_kernel_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or min(m.shape) < 1:
        raise DimensionMismatch(f"kernel matrix must be 2-D and non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionMismatch("kernel matrix has non-finite entries")
    return m


@dataclass(frozen=True, eq=False)
class KernelFactors:
    """``M = u @ Sigma @ v`` with ``Sigma`` the rows x cols diagonal of ``sigma``."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    u_schedule: PhaseSchedule
    v_schedule: PhaseSchedule

    @property
    def rows(self) -> int:
        return self.u.shape[0]

    @property
    def cols(self) -> int:
        return self.v.shape[0]

    def matrix(self) -> np.ndarray:
        r = self.sigma.size
        return (self.u[:, :r] * self.sigma) @ self.v[:r]

    def to_dict(self) -> dict:
        return {
            "version": FACTORS_VERSION,
            "rows": self.rows,
            "cols": self.cols,
            "sigma": [float(s) for s in self.sigma],
            "u_schedule": self.u_schedule.to_dict(),
            "v_schedule": self.v_schedule.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "KernelFactors":
        if doc.get("version") != FACTORS_VERSION:
            raise ValueError(f"unsupported kernel factors version {doc.get('version')!r}")
        us = PhaseSchedule.from_dict(doc["u_schedule"])
        vs = PhaseSchedule.from_dict(doc["v_schedule"])
        sigma = np.asarray(doc["sigma"], dtype=np.float64)
        if (us.n, vs.n) != (doc["rows"], doc["cols"]) or sigma.size != min(us.n, vs.n):
            raise DimensionMismatch("kernel factor dimensions are inconsistent")
        return cls(reconstruct_orthogonal(us), sigma, reconstruct_orthogonal(vs), us, vs)


def factor_kernel(m) -> KernelFactors:
    """SVD the kernel matrix and extract mesh phases for both orthogonal factors."""
    m = as_kernel_matrix(m)
    u, sigma, v = jacobi_svd(m)
    residual = np.max(np.abs(u @ embed_sigma(sigma, *m.shape) @ v - m))
    scale = max(1.0, float(np.max(np.abs(m))))
    if residual >= RESIDUAL_TOL * scale:
        raise ConvergenceFailure(f"SVD residual {residual:.3e} exceeds {RESIDUAL_TOL * scale:.3e}")
    u = check_orthogonal(u)
    v = check_orthogonal(v)
    return KernelFactors(u, sigma, v, extract_phases(u), extract_phases(v))


def realize_kernel(f: KernelFactors, noise: PhaseNoiseModel) -> np.ndarray:
    """Rebuild ``M' = U' Sigma V'`` from phase schedules perturbed by ``noise``.

    U and V receive independent draws from child seeds of ``noise.seed``.
    Sigma is reused exactly.
    """
    u_seed, v_seed = (
        int(child.generate_state(1)[0]) for child in np.random.SeedSequence(noise.seed).spawn(2)
    )
    us = perturb_phases(f.u_schedule, PhaseNoiseModel(noise.sigma, u_seed))
    vs = perturb_phases(f.v_schedule, PhaseNoiseModel(noise.sigma, v_seed))
    r = f.sigma.size
    u_cols = reconstruct_orthogonal(us)[:, :r]
    # only the first r rows of V' meet a non-zero singular value
    return (u_cols * f.sigma) @ leading_rows(vs, r)


def apply_layer(m, stream, nl: Nonlinearity | str = Nonlinearity.IDENTITY) -> np.ndarray:
    """Interference-unit output for each patch: ``nl(m @ stream[t])``.

    ``stream`` is ``(T, cols)``; extra leading axes (e.g. a batch of images)
    pass through unchanged.
    """
    m = as_kernel_matrix(m)
    stream = np.asarray(stream, dtype=np.float64)
    if stream.ndim < 1 or stream.shape[-1] != m.shape[1]:
        raise DimensionMismatch(
            f"patch length {stream.shape[-1] if stream.ndim else None} != kernel columns {m.shape[1]}"
        )
    return Nonlinearity(nl)(stream @ m.T)

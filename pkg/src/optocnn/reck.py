"""Planar-rotation (Reck) phase schedules for real orthogonal matrices.

A schedule stores one angle per Givens rotation acting on adjacent rows
``(p, p + 1)``. Extraction nulls the strictly upper triangle column by column,
starting at the far-right column and moving down each column towards the
diagonal; the remaining diagonal is kept as a vector of signs::

    G U = D,   G = T_L ... T_2 T_1   =>   U = T_1^T T_2^T ... T_L^T D

where ``T_r`` rotates rows ``(p, p + 1)`` by ``[[c, s], [-s, c]]``. The order of
``angles`` is the application order of ``T_1 ... T_L`` and is part of the file
format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numba import njit

from .errors import NotOrthogonal

SCHEDULE_VERSION = 1
ORTHO_TOL = 1e-9
DEGENERATE_TOL = 1e-14


def check_orthogonal(u, tol: float = ORTHO_TOL) -> np.ndarray:
    """Return ``u`` as a float64 square array, raising NotOrthogonal otherwise."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] < 1:
        raise NotOrthogonal(f"expected a square matrix, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise NotOrthogonal("matrix has non-finite entries")
    dev = np.max(np.abs(u.T @ u - np.eye(u.shape[0])))
    if dev >= tol:
        raise NotOrthogonal(f"max |U^T U - I| = {dev:.3e} exceeds {tol:g}")
    return u


def rotation_pairs(n: int) -> np.ndarray:
    """Upper row index ``p`` of every rotation, in application order."""
    return np.array([p for col in range(n - 1, 0, -1) for p in range(col)], dtype=np.int64)


@njit(cache=True, nogil=True)
def _null_column(work, col, angles, offset):
    n = work.shape[1]
    for p in range(col):
        a = work[p, col]
        b = work[p + 1, col]
        if abs(a) < DEGENERATE_TOL and abs(b) < DEGENERATE_TOL:
            theta = 0.0
        else:
            theta = np.arctan2(-a, b)
        angles[offset + p] = theta
        c = np.cos(theta)
        s = np.sin(theta)
        for k in range(n):
            x = work[p, k]
            y = work[p + 1, k]
            work[p, k] = c * x + s * y
            work[p + 1, k] = -s * x + c * y


@njit(cache=True, nogil=True)
def _undo_rotations(x, pairs, angles):
    # x <- T_1^T ... T_L^T x, applied right to left
    n = x.shape[1]
    for r in range(angles.shape[0] - 1, -1, -1):
        p = pairs[r]
        c = np.cos(angles[r])
        s = np.sin(angles[r])
        for k in range(n):
            a = x[p, k]
            b = x[p + 1, k]
            x[p, k] = c * a - s * b
            x[p + 1, k] = s * a + c * b


@njit(cache=True, nogil=True)
def _undo_rotations_right(y, pairs, angles):
    # y <- y T_1^T ... T_L^T, applied left to right
    m = y.shape[0]
    for r in range(angles.shape[0]):
        p = pairs[r]
        c = np.cos(angles[r])
        s = np.sin(angles[r])
        for k in range(m):
            a = y[k, p]
            b = y[k, p + 1]
            y[k, p] = c * a + s * b
            y[k, p + 1] = -s * a + c * b


@dataclass(frozen=True, eq=False)
class PhaseSchedule:
    """Rotation angles (radians, application order) plus the diagonal signs."""

    n: int
    angles: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        angles = np.array(self.angles, dtype=np.float64).reshape(-1)
        signs = np.array(self.signs, dtype=np.float64).reshape(-1)
        if self.n < 1:
            raise ValueError(f"dimension must be >= 1, got {self.n}")
        if angles.size != self.n * (self.n - 1) // 2:
            raise ValueError(
                f"{self.n}x{self.n} schedule needs {self.n * (self.n - 1) // 2} angles, got {angles.size}"
            )
        if not np.all(np.isfinite(angles)):
            raise ValueError("angles must be finite")
        if signs.size != self.n or not np.all(np.abs(signs) == 1.0):
            raise ValueError("signs must be an n-vector of +1/-1")
        angles.flags.writeable = False
        signs.flags.writeable = False
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "signs", signs)

    @property
    def pairs(self) -> np.ndarray:
        return rotation_pairs(self.n)

    @property
    def thetas(self) -> list[tuple[int, int, float]]:
        """``(i, j, theta)`` triples with 0-based mixed rows ``i, j = p, p + 1``."""
        return [(int(p), int(p) + 1, float(t)) for p, t in zip(self.pairs, self.angles)]

    def __eq__(self, other):
        if not isinstance(other, PhaseSchedule):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.angles, other.angles)
            and np.array_equal(self.signs, other.signs)
        )

    def to_json(self) -> str:
        thetas = ",\n    ".join(f"[{i}, {j}, {t:.17g}]" for i, j, t in self.thetas)
        signs = ", ".join(str(int(s)) for s in self.signs)
        body = f"\n    {thetas}\n  " if thetas else ""
        return (
            f'{{\n  "version": {SCHEDULE_VERSION},\n  "n": {self.n},\n'
            f'  "thetas": [{body}],\n  "signs": [{signs}]\n}}\n'
        )

    def to_dict(self) -> dict:
        return json.loads(self.to_json())

    @classmethod
    def from_dict(cls, doc: dict) -> "PhaseSchedule":
        if doc.get("version") != SCHEDULE_VERSION:
            raise ValueError(f"unsupported schedule version {doc.get('version')!r}")
        n = int(doc["n"])
        thetas = doc["thetas"]
        expected = rotation_pairs(n)
        if len(thetas) != expected.size:
            raise ValueError(f"expected {expected.size} thetas, got {len(thetas)}")
        for k, (entry, p) in enumerate(zip(thetas, expected)):
            if int(entry[0]) != p or int(entry[1]) != p + 1:
                raise ValueError(f"theta #{k} mixes rows {entry[:2]}, expected [{p}, {p + 1}]")
        return cls(n, [float(t[2]) for t in thetas], doc["signs"])

    @classmethod
    def from_json(cls, text: str) -> "PhaseSchedule":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PhaseNoiseModel:
    """Zero-mean Gaussian phase error with standard deviation ``sigma`` (radians)."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


def _sweeps(u: np.ndarray) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    n = u.shape[0]
    work = np.array(u, dtype=np.float64, order="C")
    angles = np.zeros(n * (n - 1) // 2)
    offset = 0
    for col in range(n - 1, 0, -1):
        _null_column(work, col, angles, offset)
        offset += col
        yield col, work, angles


def nulling_sweeps(u) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(column, state)`` after each column of the extraction is nulled."""
    u = check_orthogonal(u)
    for col, work, _ in _sweeps(u):
        yield col, work.copy()


def extract_phases(u) -> PhaseSchedule:
    """Find the rotation angles and signs with ``reconstruct_orthogonal(s) == u``."""
    u = check_orthogonal(u)
    n = u.shape[0]
    work, angles = u.copy(), np.zeros(0)
    for _, work, angles in _sweeps(u):
        pass
    diag = np.diag(work).copy()
    off = work - np.diag(diag)
    # both guaranteed by orthogonality; a failure here means the input check is too lax
    assert n == 1 or np.max(np.abs(off)) < ORTHO_TOL
    assert np.max(np.abs(np.abs(diag) - 1.0)) < ORTHO_TOL
    return PhaseSchedule(n, angles, np.where(diag < 0, -1.0, 1.0))


def reconstruct_orthogonal(s: PhaseSchedule) -> np.ndarray:
    x = np.diag(s.signs).astype(np.float64)
    _undo_rotations(x, s.pairs, np.ascontiguousarray(s.angles))
    return x


def leading_rows(s: PhaseSchedule, count: int) -> np.ndarray:
    """First ``count`` rows of ``reconstruct_orthogonal(s)``, at O(count) cost per rotation."""
    if not 0 <= count <= s.n:
        raise ValueError(f"count must lie in [0, {s.n}], got {count}")
    y = np.eye(count, s.n)
    _undo_rotations_right(y, s.pairs, np.ascontiguousarray(s.angles))
    return y * s.signs


def perturb_phases(s: PhaseSchedule, noise: PhaseNoiseModel) -> PhaseSchedule:
    """Add independent N(0, sigma^2) errors to every angle. Angles are not wrapped."""
    if noise.sigma == 0:
        return s
    rng = np.random.default_rng(noise.seed)
    delta = rng.normal(0.0, noise.sigma, size=s.angles.size)
    return PhaseSchedule(s.n, s.angles + delta, s.signs)

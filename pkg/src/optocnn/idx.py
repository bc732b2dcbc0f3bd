"""IDX (MNIST) binary files: big-endian header, unsigned-byte payload."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, DimensionOverflow, IdxError, TruncatedPayload

UBYTE = 0x08
IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
MAX_PAYLOAD = 2**32

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True, eq=False)
class IdxFile:
    magic: int
    dims: tuple[int, ...]
    payload: np.ndarray  # uint8, shaped by dims

    def __eq__(self, other):
        if not isinstance(other, IdxFile):
            return NotImplemented
        return self.magic == other.magic and self.dims == other.dims and np.array_equal(self.payload, other.payload)


def parse_idx(data: bytes) -> IdxFile:
    if len(data) < 4:
        raise TruncatedPayload(f"header needs 4 bytes, file has {len(data)}", len(data))
    (magic,) = struct.unpack_from(">I", data, 0)
    ndim = magic & 0xFF
    if magic >> 16 != 0 or (magic >> 8) & 0xFF != UBYTE or ndim == 0:
        raise BadMagic(f"bad magic 0x{magic:08X}, expected 0x000008NN (unsigned bytes)", 0)
    dims = []
    size = 1
    for i in range(ndim):
        offset = 4 + 4 * i
        if len(data) < offset + 4:
            raise TruncatedPayload(f"header ends before dimension {i}", len(data))
        (n,) = struct.unpack_from(">I", data, offset)
        size *= n
        if size > MAX_PAYLOAD:
            raise DimensionOverflow(f"payload size exceeds {MAX_PAYLOAD} bytes at dimension {i}", offset)
        dims.append(n)
    start = 4 + 4 * ndim
    end = start + size
    if len(data) < end:
        raise TruncatedPayload(f"payload needs {size} bytes, only {len(data) - start} present", len(data))
    if len(data) > end:
        raise IdxError(f"{len(data) - end} unexpected bytes after payload", end)
    payload = np.frombuffer(data, dtype=np.uint8, count=size, offset=start).reshape(dims)
    return IdxFile(magic, tuple(dims), payload)


def encode_idx(array) -> bytes:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError(f"only uint8 payloads are supported, got {array.dtype}")
    if not 1 <= array.ndim <= 255:
        raise ValueError("IDX needs 1..255 dimensions")
    header = struct.pack(">I", (UBYTE << 8) | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array).tobytes()


def read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        return gzip.decompress(raw)
    return raw


def load_idx(path) -> IdxFile:
    return parse_idx(read_bytes(path))


def load_images(path) -> np.ndarray:
    """Images as float64 in [0, 1], shape (N, rows, cols)."""
    f = load_idx(path)
    if f.magic != IMAGES_MAGIC:
        raise BadMagic(f"{path}: magic 0x{f.magic:08X} is not an image file (0x{IMAGES_MAGIC:08X})", 0)
    return f.payload.astype(np.float64) / 255.0


def load_labels(path) -> np.ndarray:
    f = load_idx(path)
    if f.magic != LABELS_MAGIC:
        raise BadMagic(f"{path}: magic 0x{f.magic:08X} is not a label file (0x{LABELS_MAGIC:08X})", 0)
    return f.payload.astype(np.int64)


def find_mnist(directory, split: str) -> tuple[Path, Path] | None:
    """Locate the standard MNIST file pair (optionally gzipped) for ``split``."""
    directory = Path(directory)
    found = []
    for stem in MNIST_FILES[split]:
        hits = [directory / name for name in (stem, stem + ".gz") if (directory / name).is_file()]
        if not hits:
            return None
        found.append(hits[0])
    return found[0], found[1]

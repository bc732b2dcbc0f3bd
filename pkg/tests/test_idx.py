import gzip
import struct

import numpy as np
import pytest

from conftest import SUBSET_DIR
from optocnn import idx
from optocnn.errors import BadMagic, DimensionOverflow, IdxError, TruncatedPayload

LABELS_7_2 = bytes.fromhex("00000801") + struct.pack(">I", 2) + bytes([7, 2])


def test_minimal_labels():
    f = idx.parse_idx(LABELS_7_2)
    assert f.magic == idx.LABELS_MAGIC
    assert f.dims == (2,)
    assert f.payload.tolist() == [7, 2]


def test_minimal_images_round_trip():
    arr = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
    data = idx.encode_idx(arr)
    assert data[:4] == bytes.fromhex("00000803")
    assert len(data) == 4 + 12 + 24
    f = idx.parse_idx(data)
    assert f.dims == (2, 3, 4)
    assert np.array_equal(f.payload, arr)
    assert idx.parse_idx(idx.encode_idx(f.payload)) == f


def test_bad_magic():
    with pytest.raises(BadMagic) as exc:
        idx.parse_idx(bytes.fromhex("DEADBEEF") + bytes(8))
    assert exc.value.offset == 0
    assert "offset 0" in str(exc.value)


def test_float_payload_rejected():
    with pytest.raises(BadMagic):
        idx.parse_idx(bytes.fromhex("00000D01") + struct.pack(">I", 1) + bytes(4))


@pytest.mark.parametrize("cut, offset", [(0, 0), (3, 3), (6, 6), (9, 9)])
def test_truncation_offsets(cut, offset):
    with pytest.raises(TruncatedPayload) as exc:
        idx.parse_idx(LABELS_7_2[:cut])
    assert exc.value.offset == offset


def test_truncated_header_dims():
    data = bytes.fromhex("00000803") + struct.pack(">I", 1)
    with pytest.raises(TruncatedPayload) as exc:
        idx.parse_idx(data)
    assert exc.value.offset == len(data)


def test_dimension_overflow():
    data = bytes.fromhex("00000803") + struct.pack(">III", 70000, 70000, 70000)
    with pytest.raises(DimensionOverflow) as exc:
        idx.parse_idx(data)
    assert exc.value.offset == 8  # 70000**2 already exceeds 2**32 at dimension 1


def test_trailing_bytes():
    with pytest.raises(IdxError) as exc:
        idx.parse_idx(LABELS_7_2 + b"\x00")
    assert exc.value.offset == len(LABELS_7_2)


def test_gzip_by_suffix(tmp_path):
    (tmp_path / "a.gz").write_bytes(gzip.compress(LABELS_7_2))
    (tmp_path / "a").write_bytes(LABELS_7_2)
    assert idx.load_idx(tmp_path / "a.gz") == idx.load_idx(tmp_path / "a")
    assert idx.load_labels(tmp_path / "a.gz").tolist() == [7, 2]


def test_loaders_check_kind(tmp_path):
    (tmp_path / "labels").write_bytes(LABELS_7_2)
    with pytest.raises(BadMagic):
        idx.load_images(tmp_path / "labels")


def test_image_scaling(tmp_path):
    (tmp_path / "img").write_bytes(idx.encode_idx(np.array([[[0, 255], [51, 102]]], dtype=np.uint8)))
    assert idx.load_images(tmp_path / "img").tolist() == [[[0.0, 1.0], [0.2, 0.4]]]


def test_bundled_subset():
    for split, n in (("train", 4000), ("test", 1000)):
        img_path, lbl_path = idx.find_mnist(SUBSET_DIR, split)
        images, labels = idx.load_images(img_path), idx.load_labels(lbl_path)
        assert images.shape == (n, 28, 28) and labels.shape == (n,)
        assert images.min() == 0.0 and images.max() == 1.0
        assert set(labels.tolist()) == set(range(10))


def test_find_mnist_missing(tmp_path):
    assert idx.find_mnist(tmp_path, "test") is None

"""Build data/mnist-subset from the 5000-digit MNIST sample bundled in the mlxtend wheel.

    pip download --no-deps -d /tmp/wheels mlxtend
    python scripts/make_mnist_subset.py /tmp/wheels/mlxtend-*.whl data/mnist-subset

A seeded permutation splits the digits into 4000 training and 1000 held-out
images, written as gzipped IDX files under the standard MNIST names.
"""

import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from optocnn.idx import MNIST_FILES, encode_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("out_dir")
    ap.add_argument("--n-train", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    raw = gzip.decompress(zipfile.ZipFile(args.wheel).read(MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    images = table[:, :-1].reshape(-1, 28, 28).astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    order = np.random.default_rng(args.seed).permutation(len(labels))
    splits = {"train": order[: args.n_train], "test": order[args.n_train :]}

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, idx in splits.items():
        img_name, lbl_name = MNIST_FILES[split]
        for name, arr in ((img_name, images[idx]), (lbl_name, labels[idx])):
            # mtime=0 keeps the archives byte-reproducible
            (out / f"{name}.gz").write_bytes(gzip.compress(encode_idx(arr), mtime=0))
        print(f"{split}: {len(idx)} images, label counts {np.bincount(labels[idx], minlength=10).tolist()}")


if __name__ == "__main__":
    main()

"""Write the bundled 5000-sample MNIST excerpt as standard IDX files.

The excerpt ships inside the mlxtend wheel (mlxtend/data/data/mnist_5k.csv.gz:
784 pixel columns then the label, 500 images per digit, sorted by digit).
Rows are shuffled with a fixed seed so that "first n in file order" sees
every class, then split 80/20 per class into train and t10k files.

    pip download mlxtend==0.24.0 --no-deps -d /tmp/mlx
    python scripts/build_mnist_idx.py /tmp/mlx/mlxtend-0.24.0-py3-none-any.whl data/mnist
"""

import argparse
import gzip
import io
import sys
import zipfile
from pathlib import Path

import numpy as np

from qhb.data import MNIST_FILES, write_idx
from qhb.rng import derive_seed, uniforms

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_rows(source: Path) -> np.ndarray:
    if source.suffix == ".whl":
        with zipfile.ZipFile(source) as zf:
            blob = zf.read(MEMBER)
    else:
        blob = source.read_bytes()
    if blob[:2] == b"\x1f\x8b":
        blob = gzip.decompress(blob)
    return np.loadtxt(io.BytesIO(blob), delimiter=",", dtype=np.int64)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", type=Path, help="mlxtend wheel or mnist_5k.csv[.gz]")
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--test-fraction", type=float, default=0.2)
    ap.add_argument("--gzip", action="store_true", help="write .gz files")
    args = ap.parse_args(argv)

    rows = read_rows(args.source)
    images = rows[:, :784].reshape(-1, 28, 28).astype(np.uint8)
    labels = rows[:, 784].astype(np.uint8)

    train_idx, test_idx = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        n_test = int(round(len(idx) * args.test_fraction))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])

    args.out_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".gz" if args.gzip else ""
    for split, parts in (("train", train_idx), ("test", test_idx)):
        idx = np.concatenate(parts)
        keys = uniforms(derive_seed(args.seed, 0 if split == "train" else 1), len(idx))
        idx = idx[np.argsort(keys, kind="stable")]
        img_name, lbl_name = MNIST_FILES[split]
        write_idx(args.out_dir / (img_name + suffix), args.out_dir / (lbl_name + suffix),
                  images[idx], labels[idx])
        print(f"{split}: {len(idx)} images", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())

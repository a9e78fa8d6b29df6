#!/usr/bin/env python3
"""Build the bundled MNIST subset (IDX format) from the 5000-sample CSV that
ships inside the mlxtend wheel.

    python3 tools/scripts/make_mnist_subset.py data/mnist5k

Writes {train,test}-images-idx3-ubyte and {train,test}-labels-idx1-ubyte.
The split is a fixed permutation: 4000 train, 1000 test.
"""
import argparse
import glob
import gzip
import io
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

import numpy as np


def fetch_csv(workdir):
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q",
                    "-d", workdir, "mlxtend"], check=True)
    wheel = glob.glob(os.path.join(workdir, "mlxtend*.whl"))[0]
    with zipfile.ZipFile(wheel) as z:
        return gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()


def write_idx(prefix, images, labels):
    with open(prefix + "-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())
    with open(prefix + "-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir")
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        table = np.loadtxt(io.StringIO(fetch_csv(tmp)), delimiter=",")
    pixels, labels = table[:, :-1], table[:, -1].astype(int)
    order = np.random.default_rng(0).permutation(len(labels))
    pixels, labels = pixels[order], labels[order]
    os.makedirs(args.outdir, exist_ok=True)
    write_idx(os.path.join(args.outdir, "train"), pixels[:4000], labels[:4000])
    write_idx(os.path.join(args.outdir, "test"), pixels[4000:], labels[4000:])


if __name__ == "__main__":
    main()

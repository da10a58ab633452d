#!/usr/bin/env python3
"""Build gzipped IDX files from the digits bundled in the npm `mnist` package.

The package ships 10,000 MNIST digits as JSON pixel lists quantized to three
decimals; multiplying by 255 and rounding recovers the original bytes exactly.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_idx.py package/src/digits data/mnist
"""
import argparse
import gzip
import json
import os
import random
import struct


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=20140501)
    args = ap.parse_args()

    cases = []
    for d in range(10):
        with open(os.path.join(args.digits_dir, f"{d}.json")) as f:
            flat = json.load(f)["data"]
        assert len(flat) % 784 == 0
        for k in range(0, len(flat), 784):
            px = bytes(int(round(v * 255)) for v in flat[k:k + 784])
            cases.append((px, d))

    random.Random(args.seed).shuffle(cases)
    os.makedirs(args.out_dir, exist_ok=True)
    n = len(cases)
    img = os.path.join(args.out_dir, "mnist10k-images-idx3-ubyte.gz")
    lab = os.path.join(args.out_dir, "mnist10k-labels-idx1-ubyte.gz")
    with gzip.GzipFile(img, "wb", mtime=0) as f:
        f.write(struct.pack(">iiii", 0x803, n, 28, 28))
        for px, _ in cases:
            f.write(px)
    with gzip.GzipFile(lab, "wb", mtime=0) as f:
        f.write(struct.pack(">ii", 0x801, n))
        f.write(bytes(d for _, d in cases))
    print(f"wrote {n} cases to {args.out_dir}")


if __name__ == "__main__":
    main()

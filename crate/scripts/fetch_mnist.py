#!/usr/bin/env python3
"""Build MNIST IDX files from the `mnist` npm package (10,000 digits).

The canonical MNIST mirrors are often unreachable from CI sandboxes, while
the npm registry usually is.  The package ships 1,000 images per digit as
JSON arrays of pixel/255 rounded to three decimals; since 1/255 > 0.001 the
original bytes are recovered exactly by round(v * 255).

Output (default: data/mnist/):
    train-images-idx3-ubyte, train-labels-idx1-ubyte   (8,000 images)
    t10k-images-idx3-ubyte,  t10k-labels-idx1-ubyte    (2,000 images)
"""
import argparse
import json
import os
import random
import struct
import subprocess
import tarfile
import tempfile


def write_idx(out_dir, prefix, items):
    with open(os.path.join(out_dir, f"{prefix}-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(items), 28, 28))
        for pixels, _ in items:
            f.write(bytes(pixels))
    with open(os.path.join(out_dir, f"{prefix}-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(items)))
        f.write(bytes(label for _, label in items))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--test", type=int, default=2000)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL)
        with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tar:
            tar.extractall(tmp)
        items = []
        for digit in range(10):
            path = os.path.join(tmp, "package", "src", "digits", f"{digit}.json")
            with open(path) as f:
                data = json.load(f)["data"]
            assert len(data) % 784 == 0
            for k in range(len(data) // 784):
                px = [int(round(v * 255)) for v in data[k * 784:(k + 1) * 784]]
                assert all(0 <= p <= 255 for p in px)
                items.append((px, digit))

    random.Random(0).shuffle(items)
    write_idx(args.out, "t10k", items[:args.test])
    write_idx(args.out, "train", items[args.test:])
    print(f"wrote {len(items) - args.test} train / {args.test} test images to {args.out}")


if __name__ == "__main__":
    main()

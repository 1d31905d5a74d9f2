#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the `mnist` npm package
(https://github.com/cazala/mnist, MIT) into gzipped IDX files.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/prepare_mnist_subset.py package/src/digits data/mnist

The 10 000 digits are shuffled with a fixed seed and split into a 9 500-image
training set and a 500-image test set.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

SEED = 20190710
TEST_SIZE = 500


def write_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main(src, dst):
    samples = []
    for digit in range(10):
        values = json.loads(Path(src, f"{digit}.json").read_text())["data"]
        for start in range(0, len(values), 784):
            pixels = [min(255, max(0, round(v * 255))) for v in values[start:start + 784]]
            samples.append((pixels, digit))
    random.Random(SEED).shuffle(samples)
    test, train = samples[:TEST_SIZE], samples[TEST_SIZE:]
    dst = Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("test", test)):
        write_images(dst / f"{name}-images-idx3-ubyte.gz", [s[0] for s in part])
        write_labels(dst / f"{name}-labels-idx1-ubyte.gz", [s[1] for s in part])
        print(f"{name}: {len(part)} images")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])

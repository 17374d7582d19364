#!/usr/bin/env python3
"""Build gzip-compressed IDX files for Fashion-MNIST.

The npm package `fashion-mnist` ships the 70,000 images grouped by class as
JSON (7,000 per class, raw 0..255 pixels).  This script regroups them into
the usual IDX layout: per class the first 6,000 images go to the training
split and the last 1,000 to the test split, then each split is shuffled with
a fixed seed so the files are byte-for-byte reproducible.

    tools/make_fashion_idx.py --out data/fashion-desk --train 10000 --test 5000
    tools/make_fashion_idx.py --out /data/fashion-full          # 60k / 10k

Pass --package-dir to reuse an already unpacked package; otherwise
`npm pack fashion-mnist` is run in a temporary directory.
"""

import argparse
import gzip
import json
import pathlib
import random
import struct
import subprocess
import tarfile
import tempfile

CLASSES = 10
TRAIN_PER_CLASS = 6000
SHUFFLE_SEED = 20190101


def load_package(package_dir):
    clothes = pathlib.Path(package_dir) / "src" / "clothes"
    per_class = {}
    for c in range(CLASSES):
        rows = json.loads((clothes / f"{c}.json").read_text())["data"]
        per_class[c] = [r for r in rows if len(r) == 784]
    return per_class


def fetch_package(workdir):
    subprocess.run(["npm", "pack", "fashion-mnist"], cwd=workdir, check=True,
                   stdout=subprocess.DEVNULL)
    tgz = next(pathlib.Path(workdir).glob("fashion-mnist-*.tgz"))
    with tarfile.open(tgz) as tar:
        tar.extractall(workdir)
    return pathlib.Path(workdir) / "package"


def write_idx(out_dir, prefix, samples):
    images = struct.pack(">IIII", 0x803, len(samples), 28, 28)
    images += bytes(v for img, _ in samples for v in img)
    labels = struct.pack(">II", 0x801, len(samples)) + bytes(y for _, y in samples)
    # mtime=0 keeps the gzip stream reproducible.
    for name, payload in ((f"{prefix}-images-idx3-ubyte.gz", images),
                          (f"{prefix}-labels-idx1-ubyte.gz", labels)):
        with open(out_dir / name, "wb") as raw:
            with gzip.GzipFile(fileobj=raw, mode="wb", compresslevel=9, mtime=0,
                               filename="") as gz:
                gz.write(payload)


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True)
    ap.add_argument("--train", type=int, default=60000)
    ap.add_argument("--test", type=int, default=10000)
    ap.add_argument("--package-dir")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        pkg = args.package_dir or fetch_package(tmp)
        per_class = load_package(pkg)

    train = [(img, c) for c in range(CLASSES) for img in per_class[c][:TRAIN_PER_CLASS]]
    test = [(img, c) for c in range(CLASSES) for img in per_class[c][TRAIN_PER_CLASS:]]
    rng = random.Random(SHUFFLE_SEED)
    rng.shuffle(train)
    rng.shuffle(test)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out, "train", train[:args.train])
    write_idx(out, "t10k", test[:args.test])
    print(f"wrote {min(args.train, len(train))} train / {min(args.test, len(test))} test to {out}")


if __name__ == "__main__":
    main()
